//! User-defined parametric families, written as matrices of expressions.
//!
//! ```toml
//! name = "my-model"
//! params = ["a", "phi"]
//! long_run = ["phi"]
//! lower = [0.1, 0.5]
//! upper = [5.0, 10.0]
//! a2 = [["-a"]]
//! b1 = [[1.0, 0.0]]
//! b2 = [[0.0, 1.0]]
//! c1 = [["(phi^2-1)/(phi^2+1)"], ["2*phi/(phi^2+1)"]]
//! c2 = [[1.0], [0.0]]
//! sigma_l = [[1.0, 0.0], [0.0, 1.0]]
//! ```

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::expr::Expr;
use super::{Dims, Family, ModelSpec, Realization};
use crate::error::{Error, Result};

/// One matrix entry: a literal or an expression in the parameter names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Value(f64),
    Expr(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateConfig {
    pub name: String,
    pub params: Vec<String>,
    #[serde(default)]
    pub long_run: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    /// parameter names holding vech(Σ_L), if Σ_L is parameterized entrywise
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_vech: Option<Vec<String>>,
    pub a2: Vec<Vec<Entry>>,
    #[serde(default)]
    pub b1: Vec<Vec<Entry>>,
    pub b2: Vec<Vec<Entry>>,
    #[serde(default)]
    pub c1: Vec<Vec<Entry>>,
    pub c2: Vec<Vec<Entry>>,
    pub sigma_l: Vec<Vec<Entry>>,
}

#[derive(Debug)]
struct Block {
    rows: usize,
    cols: usize,
    entries: Vec<Expr>,
}

impl Block {
    fn eval(&self, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.rows, self.cols, self.entries.iter().map(|e| e.eval(theta)))
    }

    fn params(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for e in &self.entries {
            e.params(&mut out);
        }
        out
    }
}

#[derive(Debug)]
pub struct TemplateModel {
    pub config: TemplateConfig,
    a2: Block,
    b1: Block,
    b2: Block,
    c1: Block,
    c2: Block,
    sigma_l: Block,
}

impl TemplateModel {
    pub(super) fn realize(&self, theta: &[f64]) -> Result<Realization> {
        Realization::from_blocks(
            self.a2.eval(theta),
            self.b1.eval(theta),
            self.b2.eval(theta),
            self.c1.eval(theta),
            self.c2.eval(theta),
            self.sigma_l.eval(theta),
        )
    }
}

fn block(name: &str, rows: &[Vec<Entry>], cols_if_empty: usize, names: &[String]) -> Result<Block> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(cols_if_empty);
    let mut entries = Vec::with_capacity(nrows * ncols);
    for row in rows {
        if row.len() != ncols {
            return Err(Error::InvalidConfig(format!("{name}: ragged rows")));
        }
        for e in row {
            entries.push(match e {
                Entry::Value(v) => Expr::Const(*v),
                Entry::Expr(s) => Expr::parse(s, names)?,
            });
        }
    }
    Ok(Block {
        rows: nrows,
        cols: ncols,
        entries,
    })
}

fn index_of(names: &[String], n: &str) -> Result<usize> {
    names
        .iter()
        .position(|x| x == n)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown parameter `{n}`")))
}

pub(super) fn compile(cfg: &TemplateConfig) -> Result<ModelSpec> {
    let names = &cfg.params;
    let s = names.len();
    if cfg.lower.len() != s || cfg.upper.len() != s {
        return Err(Error::InvalidConfig("lower/upper must have one entry per parameter".into()));
    }
    if let Some(i) = (0..s).find(|&i| !(cfg.lower[i] < cfg.upper[i])) {
        return Err(Error::InvalidConfig(format!("empty box for parameter `{}`", names[i])));
    }
    let a2 = block("a2", &cfg.a2, 0, names)?;
    if a2.rows != a2.cols {
        return Err(Error::InvalidConfig("a2 must be square".into()));
    }
    let sigma_l = block("sigma_l", &cfg.sigma_l, 0, names)?;
    let m = sigma_l.rows;
    let c2 = block("c2", &cfg.c2, a2.rows, names)?;
    let d = c2.rows;
    let b1 = block("b1", &cfg.b1, m, names)?;
    let c = b1.rows;
    let b2 = block("b2", &cfg.b2, m, names)?;
    let mut c1 = block("c1", &cfg.c1, c, names)?;
    if cfg.c1.is_empty() {
        c1.rows = d;
        c1.cols = 0;
    }
    let dims = Dims {
        d,
        c,
        n: c + a2.rows,
        m,
    };
    dims.validate()?;

    let long_run = cfg
        .long_run
        .iter()
        .map(|n| index_of(names, n))
        .collect::<Result<Vec<_>>>()?;
    let c1_params = c1.params();
    if let Some(p) = c1_params.iter().find(|p| !long_run.contains(p)) {
        return Err(Error::InvalidConfig(format!(
            "C1 depends on `{}`, which is not a long-run parameter",
            names[*p]
        )));
    }
    for (blk, label) in [(&a2, "a2"), (&b1, "b1"), (&b2, "b2"), (&c2, "c2"), (&sigma_l, "sigma_l")] {
        if let Some(p) = blk.params().iter().find(|p| long_run.contains(p)) {
            return Err(Error::InvalidConfig(format!(
                "long-run parameter `{}` appears in {label}",
                names[*p]
            )));
        }
    }
    if let Some(t) = &cfg.truth {
        if t.len() != s {
            return Err(Error::InvalidConfig("truth must have one entry per parameter".into()));
        }
    }
    let sigma_vech = match &cfg.sigma_vech {
        Some(v) => {
            if v.len() != m * (m + 1) / 2 {
                return Err(Error::InvalidConfig("sigma_vech needs m(m+1)/2 names".into()));
            }
            Some(v.iter().map(|n| index_of(names, n)).collect::<Result<Vec<_>>>()?)
        }
        None => None,
    };

    let model = TemplateModel {
        config: cfg.clone(),
        a2,
        b1,
        b2,
        c1,
        c2,
        sigma_l,
    };
    let spec = ModelSpec {
        name: cfg.name.clone(),
        family: Family::Template(Arc::new(model)),
        dims,
        param_names: names.clone(),
        lower: cfg.lower.clone(),
        upper: cfg.upper.clone(),
        long_run,
        truth: cfg.truth.clone(),
        sigma_vech,
    };
    if let Some(t) = &spec.truth {
        spec.blocks(t)?;
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_realization;

    const SRC: &str = r#"
name = "template2d"
params = ["t1","t2","t3","t4","t5","t6","t7","t8","t9","t10","t11","t12","t13"]
long_run = ["t13"]
lower = [-10,-10,-10,-10,-10,-10,-10,-10,-10,0.01,-5,0.01,0.5]
upper = [10,10,10,10,10,10,10,10,10,5,5,5,10]
truth = [-1,-2,1,-2,-3,1,2,1,1,0.4751,-0.1622,0.3708,3]
sigma_vech = ["t10","t11","t12"]
a2 = [["t1","t2",0],[0,0,1],["t3","t4","t5"]]
b1 = [["t8","t9"]]
b2 = [["t1","t2"],["t6","t7"],["t3+t5*t6","t4+t5*t7"]]
c1 = [["(t13^2-1)/(t13^2+1)"],["2*t13/(t13^2+1)"]]
c2 = [[1,0,0],[0,1,0]]
sigma_l = [["t10","t11"],["t11","t12"]]
"#;

    #[test]
    fn template_reproduces_catalog_model() {
        let cfg: TemplateConfig = toml::from_str(SRC).unwrap();
        let spec = ModelSpec::from_template(&cfg).unwrap();
        let cat = ModelSpec::from_name("canonical2d").unwrap();
        let theta = cat.truth.clone().unwrap();
        let a = build_realization(&spec, &theta).unwrap();
        let b = build_realization(&cat, &theta).unwrap();
        assert!((a.a - b.a).amax() < 1e-15);
        assert!((a.b - b.b).amax() < 1e-15);
        assert!((a.c - b.c).amax() < 1e-15);
        assert_eq!(spec.long_run, vec![12]);
        assert_eq!(spec.dims, cat.dims);
    }

    #[test]
    fn long_run_parameter_outside_c1_is_rejected() {
        let bad = SRC.replace(r#"["t8","t9"]"#, r#"["t8","t13"]"#);
        let cfg: TemplateConfig = toml::from_str(&bad).unwrap();
        assert!(ModelSpec::from_template(&cfg).is_err());
        let bad = SRC.replace(r#"long_run = ["t13"]"#, "long_run = []");
        let cfg: TemplateConfig = toml::from_str(&bad).unwrap();
        assert!(ModelSpec::from_template(&cfg).is_err());
    }
}
