//! TOML run configuration.
//!
//! ```toml
//! [diffusion]
//! kind = "custom"            # gbm | jacobi | natural | logit | piecewise_randomized | custom
//! alpha = 0.0
//! beta = "inf"
//! pieces = [
//!   { upto = 2.0, expr = "(x^2 - 3/2*x)/(4*x - 6)" },
//!   { upto = "inf", expr = "x/4" },
//! ]
//! limits = { lower = 0.0, upper = "inf", upper_growth = 0.0 }
//!
//! [run]
//! x = 1.0
//! grid = { lo = 0.1, hi = 5.0, n = 200 }
//!
//! [mc]
//! seed = 7
//! n = 1000000
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::diffusion::{self, DiffusionSpec};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::numeric::lin_grid;
use crate::scale::{DeclaredLimits, Piece};

/// A number or one of `"inf"`, `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ExtReal {
    Num(f64),
    Text(InfText),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub enum InfText {
    #[serde(rename = "inf", alias = "+inf", alias = "infinity")]
    Inf,
    #[serde(rename = "-inf", alias = "-infinity")]
    NegInf,
}

impl ExtReal {
    pub fn value(self) -> f64 {
        match self {
            ExtReal::Num(v) => v,
            ExtReal::Text(InfText::Inf) => f64::INFINITY,
            ExtReal::Text(InfText::NegInf) => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceConfig {
    pub upto: ExtReal,
    pub expr: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsConfig {
    pub lower: Option<ExtReal>,
    pub upper: Option<ExtReal>,
    pub upper_growth: Option<ExtReal>,
    pub lower_growth: Option<ExtReal>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    pub kind: String,
    pub name: Option<String>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub alpha: Option<ExtReal>,
    pub beta: Option<ExtReal>,
    #[serde(default)]
    pub pieces: Vec<PieceConfig>,
    pub limits: Option<LimitsConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub n: Option<usize>,
    pub points: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub x: Option<f64>,
    pub grid: Option<GridConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub seed: Option<u64>,
    pub n: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Tolerance used to realize ε-families before sampling.
    pub epsilon: Option<f64>,
    /// Largest acceptable |z| in `verify`.
    pub verify_z: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub diffusion: DiffusionConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSection,
}

fn need<T>(v: Option<T>, what: &str, kind: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("diffusion kind '{kind}' needs '{what}'")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn build_spec(&self) -> Result<DiffusionSpec> {
        let d = &self.diffusion;
        let kind = d.kind.as_str();
        if kind != "custom" && (!d.pieces.is_empty() || d.limits.is_some()) {
            return Err(Error::Config(format!(
                "builtin kind '{kind}' cannot be combined with a custom scale"
            )));
        }
        let wrap = |r: Result<DiffusionSpec>| {
            r.map_err(|e| match e {
                Error::Domain(m) => Error::Config(m),
                e => e,
            })
        };
        match kind {
            "gbm" => wrap(diffusion::gbm(
                need(d.mu, "mu", kind)?,
                need(d.sigma, "sigma", kind)?,
            )),
            "jacobi" => wrap(diffusion::jacobi(
                need(d.a, "a", kind)?,
                need(d.b, "b", kind)?,
                need(d.sigma, "sigma", kind)?,
            )),
            "natural" => wrap(diffusion::natural_scale(
                need(d.alpha, "alpha", kind)?.value(),
                need(d.beta, "beta", kind)?.value(),
            )),
            "logit" => wrap(diffusion::logit_scale(
                need(d.alpha, "alpha", kind)?.value(),
                need(d.beta, "beta", kind)?.value(),
            )),
            "piecewise_randomized" => diffusion::randomized_piecewise(),
            "custom" => {
                if d.pieces.is_empty() {
                    return Err(Error::Config(
                        "custom scale needs at least one piece".into(),
                    ));
                }
                let pieces = d
                    .pieces
                    .iter()
                    .map(|p| {
                        Ok(Piece {
                            upto: p.upto.value(),
                            expr: Expr::parse(&p.expr)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let l = d.limits.clone().unwrap_or_default();
                let limits = DeclaredLimits {
                    lower: l.lower.map(ExtReal::value),
                    upper: l.upper.map(ExtReal::value),
                    upper_growth: l.upper_growth.map(ExtReal::value),
                    lower_growth: l.lower_growth.map(ExtReal::value),
                };
                wrap(diffusion::custom(
                    d.name.as_deref().unwrap_or("custom"),
                    need(d.alpha, "alpha", kind)?.value(),
                    need(d.beta, "beta", kind)?.value(),
                    pieces,
                    limits,
                ))
            }
            other => Err(Error::Config(format!("unknown diffusion kind '{other}'"))),
        }
    }

    /// Start points for a sweep; `n_override` replaces the configured count.
    pub fn grid(&self, spec: &DiffusionSpec, n_override: Option<usize>) -> Result<Vec<f64>> {
        let (a, b) = (spec.alpha(), spec.beta());
        let g = self.run.grid.as_ref();
        let pts = if let Some(p) = g.and_then(|g| g.points.clone()) {
            if n_override.is_some() {
                return Err(Error::Config(
                    "explicit grid points cannot be resized".into(),
                ));
            }
            p
        } else {
            let n = n_override.or(g.and_then(|g| g.n)).unwrap_or(100);
            if n == 0 {
                return Err(Error::Config("grid needs at least one point".into()));
            }
            let lo = g.and_then(|g| g.lo);
            let hi = g.and_then(|g| g.hi);
            let (lo, hi) = match (lo, hi) {
                (Some(l), Some(h)) => (l, h),
                _ if a.is_finite() && b.is_finite() => {
                    let d = (b - a) / (n as f64 + 1.0);
                    (lo.unwrap_or(a + d), hi.unwrap_or(b - d))
                }
                _ => {
                    return Err(Error::Config(
                        "grid needs 'lo' and 'hi' on an unbounded state space".into(),
                    ))
                }
            };
            if n == 1 {
                vec![lo]
            } else {
                lin_grid(lo, hi, n)
            }
        };
        if pts.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("grid must be strictly increasing".into()));
        }
        if let Some(bad) = pts.iter().find(|&&p| !(p > a && p < b)) {
            return Err(Error::Config(format!(
                "grid point {bad} outside ({a}, {b})"
            )));
        }
        Ok(pts)
    }
}
