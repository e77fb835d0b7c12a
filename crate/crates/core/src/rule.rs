//! Closed representations of (randomized) stopping rules and their exit laws.

use serde::Serialize;

use crate::diffusion::{AffineMap, DiffusionSpec};
use crate::error::{Error, Result};

/// How an ε-optimal family approaches its supremum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FamilyKind {
    /// `(a, b)` with equal exit probabilities, widening on both sides.
    Equalized,
    /// `(α, Z)` with `Z → β`.
    AnchoredLower,
    /// `(Z, β)` with `Z → α`.
    AnchoredUpper,
    /// Both edges move toward the endpoints at the same geometric rate.
    Widening,
    /// First of the others that reaches the target.
    Any,
}

/// A family of exit intervals whose variance approaches `value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonFamily {
    pub kind: FamilyKind,
    /// The supremum being approached; may be `+∞`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoppingRule {
    Immediate,
    ExitInterval {
        lower: f64,
        upper: f64,
    },
    /// Run `first` with probability `p`, else `second`.
    BernoulliMix {
        p: f64,
        first: Box<StoppingRule>,
        second: Box<StoppingRule>,
    },
    WholeInterval,
    EpsilonFamily(EpsilonFamily),
}

/// Mean and variance of `X_τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

const MAX_STEPS: usize = 400;

impl StoppingRule {
    pub fn exit(lower: f64, upper: f64) -> Self {
        StoppingRule::ExitInterval { lower, upper }
    }

    /// Bernoulli mix that collapses to a pure rule at `p ∈ {0, 1}`.
    pub fn mix(p: f64, first: StoppingRule, second: StoppingRule) -> Self {
        let p = p.clamp(0.0, 1.0);
        if p == 1.0 || first == second {
            first
        } else if p == 0.0 {
            second
        } else {
            StoppingRule::BernoulliMix {
                p,
                first: Box::new(first),
                second: Box::new(second),
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            StoppingRule::Immediate => "immediate",
            StoppingRule::ExitInterval { .. } => "exit",
            StoppingRule::BernoulliMix { .. } => "mix",
            StoppingRule::WholeInterval => "whole_interval",
            StoppingRule::EpsilonFamily(_) => "epsilon_family",
        }
    }

    pub fn is_epsilon(&self) -> bool {
        matches!(self, StoppingRule::EpsilonFamily(_))
    }

    /// Map a rule found in transformed coordinates back to the original ones.
    pub fn pull_back(&self, map: &AffineMap) -> StoppingRule {
        match self {
            StoppingRule::ExitInterval { lower, upper } => {
                let (a, b) = (map.apply(*lower), map.apply(*upper));
                StoppingRule::exit(a.min(b), a.max(b))
            }
            StoppingRule::BernoulliMix { p, first, second } => StoppingRule::BernoulliMix {
                p: *p,
                first: Box::new(first.pull_back(map)),
                second: Box::new(second.pull_back(map)),
            },
            StoppingRule::EpsilonFamily(f) if map.sign < 0.0 => {
                let kind = match f.kind {
                    FamilyKind::AnchoredLower => FamilyKind::AnchoredUpper,
                    FamilyKind::AnchoredUpper => FamilyKind::AnchoredLower,
                    k => k,
                };
                StoppingRule::EpsilonFamily(EpsilonFamily {
                    kind,
                    value: f.value,
                })
            }
            r => r.clone(),
        }
    }

    /// Exit atoms `(state, probability)` from `x`; the mixture weights are folded in.
    pub fn atoms(&self, spec: &DiffusionSpec, x: f64) -> Result<Vec<(f64, f64)>> {
        match self {
            StoppingRule::Immediate => Ok(vec![(x, 1.0)]),
            StoppingRule::ExitInterval { lower, upper } => {
                let (pl, pu) = spec.hit_prob(x, *lower, *upper)?;
                Ok(vec![(*lower, pl), (*upper, pu)]
                    .into_iter()
                    .filter(|a| a.1 > 0.0)
                    .collect())
            }
            StoppingRule::WholeInterval => {
                StoppingRule::exit(spec.alpha(), spec.beta()).atoms(spec, x)
            }
            StoppingRule::BernoulliMix { p, first, second } => {
                let mut out: Vec<(f64, f64)> = first
                    .atoms(spec, x)?
                    .into_iter()
                    .map(|(s, q)| (s, p * q))
                    .collect();
                out.extend(
                    second
                        .atoms(spec, x)?
                        .into_iter()
                        .map(|(s, q)| (s, (1.0 - p) * q)),
                );
                Ok(out)
            }
            StoppingRule::EpsilonFamily(_) => Err(Error::UnsupportedRule(
                "ε-family needs a tolerance first".into(),
            )),
        }
    }

    /// Closed-form mean and variance of `X_τ` from `x`.
    pub fn moments(&self, spec: &DiffusionSpec, x: f64) -> Result<Moments> {
        match self {
            StoppingRule::Immediate => Ok(Moments {
                mean: x,
                variance: 0.0,
            }),
            StoppingRule::ExitInterval { lower, upper } => Ok(Moments {
                mean: spec.exit_mean(x, *lower, *upper)?,
                variance: spec.exit_variance(x, *lower, *upper)?,
            }),
            StoppingRule::WholeInterval => {
                StoppingRule::exit(spec.alpha(), spec.beta()).moments(spec, x)
            }
            StoppingRule::BernoulliMix { p, first, second } => {
                let (m1, m2) = (first.moments(spec, x)?, second.moments(spec, x)?);
                let d = m1.mean - m2.mean;
                Ok(Moments {
                    mean: p * m1.mean + (1.0 - p) * m2.mean,
                    variance: p * m1.variance + (1.0 - p) * m2.variance + p * (1.0 - p) * d * d,
                })
            }
            StoppingRule::EpsilonFamily(_) => Err(Error::UnsupportedRule(
                "ε-family needs a tolerance first".into(),
            )),
        }
    }

    /// Concrete member of an ε-family. The whole-interval rule of a recurrent
    /// diffusion becomes the equalized member; other rules are returned unchanged.
    pub fn realize(&self, spec: &DiffusionSpec, x: f64, eps: f64) -> Result<StoppingRule> {
        match self {
            StoppingRule::EpsilonFamily(f) => f.realize(spec, x, eps),
            StoppingRule::WholeInterval if self.moments(spec, x).is_err() => {
                let span = spec.interval.span();
                let fam = EpsilonFamily {
                    kind: FamilyKind::Equalized,
                    value: 0.25 * span * span,
                };
                fam.realize(spec, x, eps)
            }
            r => Ok(r.clone()),
        }
    }
}

fn toward_upper(spec: &DiffusionSpec, x: f64, k: usize) -> f64 {
    let b = spec.beta();
    let t = 2f64.powi(k as i32);
    if b.is_infinite() {
        x + t * x.abs().max(1.0)
    } else {
        b - (b - x) / t
    }
}

fn toward_lower(spec: &DiffusionSpec, x: f64, k: usize) -> f64 {
    let a = spec.alpha();
    let t = 2f64.powi(k as i32);
    if a.is_infinite() {
        x - t * x.abs().max(1.0)
    } else {
        a + (x - a) / t
    }
}

impl EpsilonFamily {
    /// Variance the member for tolerance `eps` must reach: `value - eps`, or
    /// `1/eps` when the supremum is infinite.
    pub fn target(&self, eps: f64) -> f64 {
        if self.value.is_infinite() {
            1.0 / eps
        } else {
            self.value - eps
        }
    }

    pub fn realize(&self, spec: &DiffusionSpec, x: f64, eps: f64) -> Result<StoppingRule> {
        if !(eps > 0.0) {
            return Err(Error::domain(format!(
                "tolerance must be positive, got {eps}"
            )));
        }
        let target = self.target(eps);
        let kinds: &[FamilyKind] = match self.kind {
            FamilyKind::Any => &[
                FamilyKind::Equalized,
                FamilyKind::AnchoredLower,
                FamilyKind::AnchoredUpper,
                FamilyKind::Widening,
            ],
            FamilyKind::Widening => &[FamilyKind::Widening],
            FamilyKind::Equalized => &[FamilyKind::Equalized],
            FamilyKind::AnchoredLower => &[FamilyKind::AnchoredLower],
            FamilyKind::AnchoredUpper => &[FamilyKind::AnchoredUpper],
        };
        for &k in kinds {
            if let Some(r) = walk(spec, x, k, target)? {
                return Ok(r);
            }
        }
        Err(Error::numerical(format!(
            "no member of the {:?} family reaches variance {target}",
            self.kind
        )))
    }
}

fn walk(
    spec: &DiffusionSpec,
    x: f64,
    kind: FamilyKind,
    target: f64,
) -> Result<Option<StoppingRule>> {
    let sx = spec.s(x);
    let lo = spec.lower_limit()?.value;
    let hi = spec.upper_limit()?.value;
    for k in 1..MAX_STEPS {
        let (a, b) = match kind {
            FamilyKind::Equalized => {
                let d = (sx - spec.s(toward_lower(spec, x, 1))) * 2f64.powi(k as i32 - 1);
                if !(sx - d > lo && sx + d < hi) {
                    break;
                }
                (spec.s_inv(sx - d)?, spec.s_inv(sx + d)?)
            }
            FamilyKind::AnchoredLower => {
                if !lo.is_finite() || !spec.alpha().is_finite() {
                    break;
                }
                (spec.alpha(), toward_upper(spec, x, k))
            }
            FamilyKind::AnchoredUpper => {
                if !hi.is_finite() || !spec.beta().is_finite() {
                    break;
                }
                (toward_lower(spec, x, k), spec.beta())
            }
            FamilyKind::Widening => (toward_lower(spec, x, k), toward_upper(spec, x, k)),
            FamilyKind::Any => unreachable!(),
        };
        if !(a < x && x < b) || !a.is_finite() || !b.is_finite() {
            if a == x || b == x {
                break;
            }
            continue;
        }
        match spec.exit_variance(x, a, b) {
            Ok(v) if v >= target => return Ok(Some(StoppingRule::exit(a, b))),
            Ok(_) => {}
            Err(Error::Unbounded) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}
