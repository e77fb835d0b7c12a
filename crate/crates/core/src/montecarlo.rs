//! Monte-Carlo checks: exact exit-law sampling of rules and an Euler–Maruyama
//! cross-check of hitting probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::DiffusionSpec;
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::rule::StoppingRule;

/// Draws per substream.
pub const BLOCK: u64 = 1 << 16;
const MAX_PATH_STEPS: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleConfig {
    pub seed: u64,
    pub n: u64,
    /// Threads to use; `None` means the global pool. Results never depend on it.
    pub workers: Option<usize>,
    /// Tolerance used to realize ε-families before sampling.
    pub eps: Option<f64>,
}

impl SampleConfig {
    pub fn new(seed: u64, n: u64) -> Self {
        SampleConfig {
            seed,
            n,
            workers: None,
            eps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub mean: f64,
    /// Unbiased sample variance of `X_τ`.
    pub variance: f64,
    pub std_error_of_variance: f64,
    pub n_effective: u64,
    /// Share of draws that ended at `α` or `β`.
    pub absorbed_fraction: f64,
}

impl EstimatorResult {
    /// `(variance - target) / SE`, zero when both are exact.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = self.variance - target;
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error_of_variance
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HitEstimate {
    pub p_lower: f64,
    pub p_upper: f64,
    /// 95% binomial half-width.
    pub ci_half_width: f64,
    pub n: u64,
    pub step: f64,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map(|p| p.install(f))
            .map_err(|e| Error::numerical(format!("thread pool: {e}"))),
    }
}

/// Sampling tree with the exit laws already evaluated.
enum Node {
    Point(f64),
    TwoPoint {
        low: f64,
        high: f64,
        p_high: f64,
    },
    Mix {
        p: f64,
        first: Box<Node>,
        second: Box<Node>,
    },
}

impl Node {
    fn build(spec: &DiffusionSpec, x: f64, rule: &StoppingRule, eps: Option<f64>) -> Result<Node> {
        Ok(match rule {
            StoppingRule::Immediate => Node::Point(x),
            StoppingRule::ExitInterval { lower, upper } => {
                let (_, pu) = spec.hit_prob(x, *lower, *upper)?;
                if (pu > 0.0 && upper.is_infinite()) || (pu < 1.0 && lower.is_infinite()) {
                    return Err(Error::Unbounded);
                }
                Node::TwoPoint {
                    low: *lower,
                    high: *upper,
                    p_high: pu,
                }
            }
            StoppingRule::WholeInterval => {
                match StoppingRule::exit(spec.alpha(), spec.beta()).moments(spec, x) {
                    Ok(_) => {
                        Node::build(spec, x, &StoppingRule::exit(spec.alpha(), spec.beta()), eps)?
                    }
                    Err(_) => {
                        let eps = eps.ok_or_else(|| {
                            Error::UnsupportedRule(
                                "the whole-interval rule of a recurrent diffusion needs ε".into(),
                            )
                        })?;
                        let span = spec.interval.span();
                        let fam = crate::rule::EpsilonFamily {
                            kind: crate::rule::FamilyKind::Equalized,
                            value: 0.25 * span * span,
                        };
                        Node::build(spec, x, &fam.realize(spec, x, eps)?, None)?
                    }
                }
            }
            StoppingRule::BernoulliMix { p, first, second } => Node::Mix {
                p: *p,
                first: Box::new(Node::build(spec, x, first, eps)?),
                second: Box::new(Node::build(spec, x, second, eps)?),
            },
            StoppingRule::EpsilonFamily(f) => {
                let eps = eps.ok_or_else(|| {
                    Error::UnsupportedRule("ε-family sampled without a tolerance".into())
                })?;
                Node::build(spec, x, &f.realize(spec, x, eps)?, None)?
            }
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Node::Point(v) => *v,
            Node::TwoPoint { low, high, p_high } => {
                if rng.gen::<f64>() < *p_high {
                    *high
                } else {
                    *low
                }
            }
            Node::Mix { p, first, second } => {
                if rng.gen::<f64>() < *p {
                    first.draw(rng)
                } else {
                    second.draw(rng)
                }
            }
        }
    }
}

/// Power sums of `X - shift` for one block.
fn block_sums(
    node: &Node,
    seed: u64,
    block: u64,
    count: u64,
    shift: f64,
    ends: (f64, f64),
) -> [f64; 5] {
    let mut rng = rng_for(seed, block);
    let mut d1 = Vec::with_capacity(count as usize);
    let mut absorbed = 0u64;
    for _ in 0..count {
        let v = node.draw(&mut rng);
        if v == ends.0 || v == ends.1 {
            absorbed += 1;
        }
        d1.push(v - shift);
    }
    let d2: Vec<f64> = d1.iter().map(|d| d * d).collect();
    let d3: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| a * b).collect();
    let d4: Vec<f64> = d2.iter().map(|d| d * d).collect();
    [
        pairwise_sum(&d1),
        pairwise_sum(&d2),
        pairwise_sum(&d3),
        pairwise_sum(&d4),
        absorbed as f64,
    ]
}

/// Estimate the law of `X_τ` by sampling exit positions exactly.
pub fn sample_rule(
    spec: &DiffusionSpec,
    x: f64,
    rule: &StoppingRule,
    cfg: &SampleConfig,
) -> Result<EstimatorResult> {
    if cfg.n < 2 {
        return Err(Error::domain("need at least two samples"));
    }
    let node = Node::build(spec, x, rule, cfg.eps)?;
    let shift = x;
    let ends = (spec.alpha(), spec.beta());
    let blocks = cfg.n.div_ceil(BLOCK);
    let sums: Vec<[f64; 5]> = in_pool(cfg.workers, || {
        (0..blocks)
            .into_par_iter()
            .map(|k| {
                let count = BLOCK.min(cfg.n - k * BLOCK);
                block_sums(&node, cfg.seed, k, count, shift, ends)
            })
            .collect()
    })?;
    let col = |i: usize| pairwise_sum(&sums.iter().map(|s| s[i]).collect::<Vec<_>>());
    let n = cfg.n as f64;
    let (s1, s2, s3, s4) = (col(0) / n, col(1) / n, col(2) / n, col(3) / n);
    let m2 = (s2 - s1 * s1).max(0.0);
    let m4 = (s4 - 4.0 * s1 * s3 + 6.0 * s1 * s1 * s2 - 3.0 * s1.powi(4)).max(0.0);
    let variance = m2 * n / (n - 1.0);
    let se = ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)).max(0.0) / n).sqrt();
    Ok(EstimatorResult {
        mean: shift + s1,
        variance,
        std_error_of_variance: se,
        n_effective: cfg.n,
        absorbed_fraction: col(4) / n,
    })
}

fn one_path(
    spec: &DiffusionSpec,
    x: f64,
    a: f64,
    b: f64,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    let sde = spec.sde.as_ref().unwrap();
    let sq = dt.sqrt();
    let mut y = x;
    for _ in 0..MAX_PATH_STEPS {
        let sig = (sde.vol)(y);
        let z: f64 = rng.sample(StandardNormal);
        let next = y + (sde.drift)(y) * dt + sig * sq * z;
        if next <= a {
            return Ok(false);
        }
        if next >= b {
            return Ok(true);
        }
        // Brownian-bridge crossing probabilities within the step
        let v = sig * sig * dt;
        if v > 0.0 {
            let u: f64 = rng.gen();
            let p_lo = (-2.0 * (y - a) * (next - a) / v).exp();
            let p_hi = (-2.0 * (b - y) * (b - next) / v).exp();
            if u < p_lo {
                return Ok(false);
            }
            if u < p_lo + p_hi {
                return Ok(true);
            }
        }
        y = next;
    }
    Err(Error::numerical(
        "path did not leave the interval within the step budget",
    ))
}

fn hit_run(
    spec: &DiffusionSpec,
    x: f64,
    a: f64,
    b: f64,
    dt: f64,
    cfg: &SampleConfig,
    stream0: u64,
) -> Result<HitEstimate> {
    let paths_per_block = 4096u64;
    let blocks = cfg.n.div_ceil(paths_per_block);
    let counts: Vec<Result<u64>> = in_pool(cfg.workers, || {
        (0..blocks)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng_for(cfg.seed, stream0 + k);
                let m = paths_per_block.min(cfg.n - k * paths_per_block);
                let mut up = 0;
                for _ in 0..m {
                    if one_path(spec, x, a, b, dt, &mut rng)? {
                        up += 1;
                    }
                }
                Ok(up)
            })
            .collect()
    })?;
    let mut up = 0u64;
    for c in counts {
        up += c?;
    }
    let n = cfg.n as f64;
    let p = up as f64 / n;
    Ok(HitEstimate {
        p_lower: 1.0 - p,
        p_upper: p,
        ci_half_width: 1.96 * (p * (1.0 - p) / n).sqrt().max(0.5 / n),
        n: cfg.n,
        step: dt,
    })
}

/// Empirical exit probabilities of `(a, b)` from Euler–Maruyama paths.
/// A second run at half the step guards against discretization bias.
pub fn sde_paths(
    spec: &DiffusionSpec,
    x: f64,
    a: f64,
    b: f64,
    step: f64,
    cfg: &SampleConfig,
) -> Result<HitEstimate> {
    if spec.sde.is_none() {
        return Err(Error::domain("path simulation needs drift and volatility"));
    }
    if !(spec.alpha() < a || (a == x && x == b))
        || !(a <= x && x <= b)
        || !(b < spec.beta() || a == b)
    {
        return Err(Error::domain(format!(
            "need α < a ≤ x ≤ b < β, got ({a}, {x}, {b})"
        )));
    }
    if !(step > 0.0) || cfg.n == 0 {
        return Err(Error::domain("step and sample count must be positive"));
    }
    if x == a || x == b {
        let up = if x == b && a != b { 1.0 } else { 0.0 };
        return Ok(HitEstimate {
            p_lower: 1.0 - up,
            p_upper: up,
            ci_half_width: 0.0,
            n: cfg.n,
            step,
        });
    }
    let coarse = hit_run(spec, x, a, b, step, cfg, 0)?;
    let fine = hit_run(spec, x, a, b, 0.5 * step, cfg, 1 << 32)?;
    if (coarse.p_upper - fine.p_upper).abs() > 2.0 * 2.0 * fine.ci_half_width {
        return Err(Error::StepTooCoarse {
            coarse: coarse.p_upper,
            fine: fine.p_upper,
        });
    }
    Ok(fine)
}
