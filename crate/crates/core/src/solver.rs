//! Variance-optimal stopping: classification, reduction to canonical
//! coordinates, the tie-center algorithm and the monotone shortcut.

use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::{AffineMap, CaseTag, Classification, DiffusionSpec};
use crate::embedded::{EmbeddedProblem, ScanResult};
use crate::error::{Error, Result};
use crate::numeric::{self, golden_max, log_grid};
use crate::rule::{EpsilonFamily, FamilyKind, StoppingRule};

/// Centers scanned for ties.
pub const C_SCAN_POINTS: usize = 4096;
/// Slack allowed on discrete slopes of `S'(z)z/S(z)`.
pub const MONOTONE_TOL: f64 = 1e-9;
/// Tolerance of the certificate identity `E_x[X_τ] = c*`.
pub const MEAN_TOL: f64 = 1e-8;
const ROOT_GRID: usize = 4096;

/// Upper stopping boundary of a one-sided rule `τ_(α, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Boundary {
    At(f64),
    AtBeta,
    AtInfinity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomizationRegion {
    pub c: f64,
    pub z_lo: f64,
    pub z_hi: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub assumption2: bool,
    /// Exit interval of the stopping set, present when `assumption2` fails.
    pub d_c: Option<(f64, f64)>,
}

impl RandomizationRegion {
    pub fn contains(&self, x: f64) -> bool {
        self.x_lo < x && x < self.x_hi
    }

    fn pull_back(&self, map: &AffineMap) -> RandomizationRegion {
        let pair = |a: f64, b: f64| {
            let (u, v) = (map.apply(a), map.apply(b));
            (u.min(v), u.max(v))
        };
        let (z_lo, z_hi) = pair(self.z_lo, self.z_hi);
        let (x_lo, x_hi) = pair(self.x_lo, self.x_hi);
        RandomizationRegion {
            c: map.apply(self.c),
            z_lo,
            z_hi,
            x_lo,
            x_hi,
            assumption2: self.assumption2,
            d_c: self.d_c.map(|(a, b)| pair(a, b)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub mean_under_rule: Option<f64>,
    /// `None` when the rule is an ε-family and the identity does not apply.
    pub mean_check: Option<bool>,
    pub duality_gap: Option<f64>,
    pub monotone_shortcut_used: bool,
    pub extrapolated: bool,
    /// Log-spacing of the center scan, when one ran.
    pub scan_resolution: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceSolution {
    pub x: f64,
    pub value: f64,
    pub rule: StoppingRule,
    pub c_star: Option<f64>,
    pub region: Option<RandomizationRegion>,
    pub classification: Classification,
    pub diagnostics: Diagnostics,
}

impl VarianceSolution {
    /// Thresholds `(z_lo, z_hi)` of the mixture, or the outer edges of a pure rule.
    pub fn thresholds(&self) -> Option<(f64, f64)> {
        self.region.as_ref().map(|r| (r.z_lo, r.z_hi))
    }
}

// ---------------------------------------------------------------------------
// canonical building blocks

fn require_canonical(spec: &DiffusionSpec) -> Result<()> {
    if spec.alpha() != 0.0 || spec.lower_limit()?.value != 0.0 {
        return Err(Error::domain(
            "solver step needs canonical coordinates (α = 0, S(0) = 0)",
        ));
    }
    Ok(())
}

fn s_closed(spec: &DiffusionSpec, z: f64) -> f64 {
    if z >= spec.beta() {
        spec.upper_limit().map(|l| l.value).unwrap_or(f64::NAN)
    } else {
        spec.s(z)
    }
}

fn monotone_on(spec: &DiffusionSpec, grid: &[f64]) -> bool {
    let breaks = spec.scale.breakpoints();
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .filter(|&&z| z < spec.beta() && !spec.scale.near_breakpoint(z))
        .map(|&z| (z, z * spec.ds(z) / spec.s(z)))
        .filter(|p| p.1.is_finite())
        .collect();
    pts.windows(2).all(|w| {
        let (z0, m0) = w[0];
        let (z1, m1) = w[1];
        breaks.iter().any(|&b| b >= z0 && b <= z1) || m1 - m0 >= -MONOTONE_TOL * m0.abs().max(1.0)
    })
}

/// Whether `z ↦ S'(z) z / S(z)` is non-decreasing on the sampled grid.
pub fn monotonicity_check(spec: &DiffusionSpec) -> Result<bool> {
    require_canonical(spec)?;
    let p = EmbeddedProblem::new(spec, 1.0)?;
    Ok(monotone_on(spec, p.grid()))
}

/// `H(z) = (1 - q) - m(½ - q)` with `q = S(x)/S(z)` and `m = zS'(z)/S(z)`; the
/// derivative of the one-sided variance in `z` has the sign of `H`.
fn first_order(spec: &DiffusionSpec, sx: f64, z: f64) -> f64 {
    let s = spec.s(z);
    let q = sx / s;
    let m = z * spec.ds(z) / s;
    (1.0 - 0.5 * m) + q * (m - 1.0)
}

/// `Var` of `τ_(0, z)` from `x` in canonical coordinates.
fn one_sided_value(spec: &DiffusionSpec, sx: f64, b: Boundary, growth: f64) -> f64 {
    match b {
        Boundary::At(z) => {
            let q = sx / s_closed(spec, z);
            z * z * q * (1.0 - q)
        }
        Boundary::AtBeta => {
            let z = spec.beta();
            let q = sx / s_closed(spec, z);
            z * z * q * (1.0 - q)
        }
        Boundary::AtInfinity => sx * growth,
    }
}

fn root_grid(spec: &DiffusionSpec, z0: f64) -> Vec<f64> {
    let beta = spec.beta();
    if beta.is_finite() {
        numeric::two_sided_grid(z0, beta, (beta - z0) * 1e-12, ROOT_GRID)
            .into_iter()
            .filter(|&z| z > z0 && z < beta)
            .collect()
    } else {
        log_grid(z0, (z0 * 1e8).max(1e8), ROOT_GRID)
    }
}

/// Root of the first-order condition on `(S⁻¹(2S(x)), β)`.
pub fn first_order_boundary(spec: &DiffusionSpec, x: f64) -> Result<Boundary> {
    require_canonical(spec)?;
    let sx = spec.s(x);
    let top = spec.upper_limit()?.value;
    if 2.0 * sx >= top {
        return if spec.beta().is_finite() {
            Ok(Boundary::AtBeta)
        } else {
            Err(Error::Bracket(format!(
                "S⁻¹(2S({x})) lies beyond the state space"
            )))
        };
    }
    let z0 = spec.s_inv(2.0 * sx)?;
    if !z0.is_finite() {
        return Err(Error::Bracket(format!("S⁻¹(2S({x})) is not finite")));
    }
    let h = |z: f64| first_order(spec, sx, z);
    let grid = root_grid(spec, z0);
    let mut prev = z0;
    for &z in &grid {
        let v = h(z);
        if v <= 0.0 {
            if v == 0.0 {
                return Ok(Boundary::At(z));
            }
            return numeric::bisect(h, prev, z, 0.0, 200).map(Boundary::At);
        }
        if v.is_finite() {
            prev = z;
        }
    }
    if spec.beta().is_finite() {
        Ok(Boundary::AtBeta)
    } else {
        Ok(Boundary::AtInfinity)
    }
}

/// Tie region of center `c` with maximizers `z_lo < z_hi`, canonical coordinates.
pub fn randomization_region(
    spec: &DiffusionSpec,
    c: f64,
    z_lo: f64,
    z_hi: f64,
) -> Result<RandomizationRegion> {
    let p = EmbeddedProblem::new(spec, c)?;
    region_for(&p, c, z_lo, z_hi, true)
}

fn region_for(
    p: &EmbeddedProblem,
    c: f64,
    z_lo: f64,
    z_hi: f64,
    with_dc: bool,
) -> Result<RandomizationRegion> {
    let spec = p.spec();
    let top = spec.upper_limit()?.value;
    let inv = |z: f64| -> Result<f64> {
        if z.is_infinite() {
            return Ok(spec.beta());
        }
        let target = c * p.s(z) / z;
        if target >= top {
            Ok(spec.beta())
        } else {
            spec.s_inv(target)
        }
    };
    let x_lo = inv(z_lo)?;
    let x_hi = inv(z_hi)?;
    let assumption2 = p.assumption2_holds(c, z_lo, z_hi);
    let d_c = if !assumption2 && with_dc && z_lo < x_hi && x_hi.is_finite() && z_hi.is_finite() {
        Some(p.stopping_set(c, 0.5 * (z_lo + x_hi))?)
    } else {
        None
    };
    Ok(RandomizationRegion {
        c,
        z_lo,
        z_hi,
        x_lo,
        x_hi,
        assumption2,
        d_c,
    })
}

/// Randomization weight on the lower rule, canonical coordinates.
pub fn p_star(spec: &DiffusionSpec, x: f64, region: &RandomizationRegion) -> Result<f64> {
    require_canonical(spec)?;
    let p = EmbeddedProblem::new(spec, region.c)?;
    Ok(mix_in_region(&p, x, region, false)?.1)
}

/// Rule, weight and value inside a tie region.
fn mix_in_region(
    p: &EmbeddedProblem,
    y: f64,
    reg: &RandomizationRegion,
    special: bool,
) -> Result<(StoppingRule, f64, f64, Option<(f64, f64)>)> {
    if !reg.contains(y) {
        return Err(Error::OutOfRegion {
            x: y,
            lo: reg.x_lo,
            hi: reg.x_hi,
        });
    }
    if special && !reg.assumption2 {
        return Err(Error::UnsupportedMarginal { center: reg.c });
    }
    let c = reg.c;
    let sy = p.s(y);
    let w = |z: f64| z / p.s(z);
    let value = p.ratio(reg.z_lo, c) * sy + c * c;
    if reg.assumption2 || y <= reg.z_lo {
        let pr = (c / sy - w(reg.z_hi)) / (w(reg.z_lo) - w(reg.z_hi));
        let lower = StoppingRule::exit(0.0, reg.z_lo.max(y));
        let rule = StoppingRule::mix(pr, lower, StoppingRule::exit(0.0, reg.z_hi));
        Ok((rule, pr.clamp(0.0, 1.0), value, None))
    } else {
        let (a, b) = p.stopping_set(c, y)?;
        let spec = p.spec();
        let m1 = spec.exit_mean(y, a, b)?;
        let m2 = reg.z_hi * sy / p.s(reg.z_hi);
        let pr = (m2 - c) / (m2 - m1);
        let rule = StoppingRule::mix(
            pr,
            StoppingRule::exit(a, b),
            StoppingRule::exit(0.0, reg.z_hi),
        );
        Ok((rule, pr.clamp(0.0, 1.0), value, Some((a, b))))
    }
}

/// Best one-sided threshold among first-order roots, kinks, `β` and `∞`.
fn best_threshold(p: &EmbeddedProblem, y: f64) -> Result<(Boundary, f64)> {
    let spec = p.spec();
    let sy = p.s(y);
    let growth = p.growth();
    let beta = spec.beta();
    let v = |z: f64| {
        let q = sy / p.s(z);
        z * z * q * (1.0 - q)
    };
    let mut cands: Vec<(Boundary, f64)> = Vec::new();
    let breaks: Vec<f64> = spec
        .scale
        .breakpoints()
        .into_iter()
        .filter(|&b| b > y && b < beta)
        .collect();
    for &b in &breaks {
        cands.push((Boundary::At(b), v(b)));
    }
    let top = spec.upper_limit()?.value;
    if beta.is_finite() && top.is_finite() {
        cands.push((Boundary::AtBeta, v(beta)));
    }
    if beta.is_infinite() && growth > 0.0 {
        cands.push((Boundary::AtInfinity, sy * growth));
    }
    let mut grid: Vec<f64> = p
        .grid()
        .iter()
        .copied()
        .filter(|&z| z > y && z < beta)
        .collect();
    if 2.0 * sy < top {
        let z0 = spec.s_inv(2.0 * sy)?;
        grid.extend(
            root_grid(spec, z0)
                .into_iter()
                .filter(|&z| z <= p.grid_top()),
        );
    }
    numeric::sort_dedup(&mut grid);
    if !grid.is_empty() {
        let vals: Vec<f64> = grid.iter().map(|&z| v(z)).collect();
        let i = (0..vals.len()).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
        let lo = if i > 0 { grid[i - 1] } else { y };
        let hi = grid[(i + 1).min(grid.len() - 1)];
        let (z, val) = golden_max(v, lo, hi, 1e-14);
        cands.push((Boundary::At(z), val));
        cands.push((Boundary::At(grid[i]), vals[i]));
        // sign changes of H, away from kinks
        let h = |z: f64| first_order(spec, sy, z);
        let hs: Vec<f64> = grid.iter().map(|&z| h(z)).collect();
        for k in 0..grid.len() - 1 {
            if hs[k] > 0.0
                && hs[k + 1] <= 0.0
                && !breaks.iter().any(|&b| b >= grid[k] && b <= grid[k + 1])
            {
                if let Ok(r) = numeric::bisect(h, grid[k], grid[k + 1], 0.0, 200) {
                    cands.push((Boundary::At(r), v(r)));
                }
            }
        }
    }
    let best = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-14 * best.abs();
    // prefer exact stationary points and kinks over raw golden-section output
    cands
        .into_iter()
        .find(|c| c.1 >= best - tol)
        .ok_or_else(|| Error::numerical("no admissible threshold"))
}

// ---------------------------------------------------------------------------
// branches

struct CanonSolution {
    value: f64,
    rule: StoppingRule,
    c_star: Option<f64>,
    region: Option<RandomizationRegion>,
    monotone: bool,
}

struct Branch {
    map: AffineMap,
    problem: EmbeddedProblem,
    monotone: bool,
    special: bool,
    regions: Vec<RandomizationRegion>,
    scan: Option<ScanResult>,
    resolution: Option<f64>,
}

impl Branch {
    fn prepare(spec: DiffusionSpec, map: AffineMap, ys: &[f64], special: bool) -> Result<Branch> {
        let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let prelim = EmbeddedProblem::new(&spec, y_max)?;
        let monotone = monotone_on(&spec, prelim.grid());
        if monotone {
            return Ok(Branch {
                map,
                problem: prelim,
                monotone,
                special,
                regions: vec![],
                scan: None,
                resolution: None,
            });
        }
        // any tie center that matters is a mean E_y[X_τ(0,z)] for some z ≥ y
        let ws: Vec<(f64, f64)> = prelim
            .grid()
            .iter()
            .filter(|&&z| z >= y_min)
            .map(|&z| (z, z / prelim.s(z)))
            .filter(|p| p.1.is_finite() && p.1 > 0.0)
            .collect();
        let w_max = ws.iter().map(|p| p.1).fold(0.0, f64::max);
        let w_min = ws.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let mut c_hi = 1.05 * prelim.s(y_max) * w_max;
        if spec.beta().is_finite() {
            c_hi = c_hi.min(0.5 * spec.beta() * (1.0 - 1e-9));
        }
        let c_lo = (0.5 * prelim.s(y_min) * w_min).max(c_hi * 1e-12);
        let problem = EmbeddedProblem::new(&spec, c_hi)?;
        let mut regions = Vec::new();
        let (scan, resolution) = if c_lo < c_hi && c_hi.is_finite() {
            let scan = problem.scan(c_lo, c_hi, C_SCAN_POINTS);
            let top = problem.grid_top() * (1.0 - 1e-12);
            for t in &scan.ties {
                let z_hi = if special && t.z_hi >= top {
                    f64::INFINITY
                } else {
                    t.z_hi
                };
                regions.push(region_for(&problem, t.c, t.z_lo, z_hi, false)?);
            }
            (
                Some(scan),
                Some((c_hi / c_lo).ln() / (C_SCAN_POINTS - 1) as f64),
            )
        } else {
            (None, None)
        };
        Ok(Branch {
            map,
            problem,
            monotone,
            special,
            regions,
            scan,
            resolution,
        })
    }

    fn spec(&self) -> &DiffusionSpec {
        self.problem.spec()
    }

    fn solve(&self, y: f64) -> Result<CanonSolution> {
        let spec = self.spec();
        let sy = self.problem.s(y);
        let growth = self.problem.growth();
        if self.monotone {
            let mut b = first_order_boundary(spec, y)?;
            let mut value = one_sided_value(spec, sy, b, growth);
            if growth > 0.0 && sy * growth >= value * (1.0 - 1e-12) {
                b = Boundary::AtInfinity;
                value = sy * growth;
            }
            let (rule, c_star) = match b {
                Boundary::At(z) => (StoppingRule::exit(0.0, z), Some(z * sy / self.problem.s(z))),
                Boundary::AtBeta => {
                    let z = spec.beta();
                    (StoppingRule::exit(0.0, z), Some(z * sy / self.problem.s(z)))
                }
                Boundary::AtInfinity => (
                    StoppingRule::EpsilonFamily(EpsilonFamily {
                        kind: FamilyKind::AnchoredLower,
                        value,
                    }),
                    None,
                ),
            };
            return Ok(CanonSolution {
                value,
                rule,
                c_star,
                region: None,
                monotone: true,
            });
        }
        let mut best: Option<(f64, CanonSolution)> = None;
        for reg in self.regions.iter().filter(|r| r.contains(y)) {
            let (rule, _, value, d_c) = mix_in_region(&self.problem, y, reg, self.special)?;
            let mut reg = reg.clone();
            if d_c.is_some() {
                reg.d_c = d_c;
            }
            if best.as_ref().is_none_or(|b| value < b.0) {
                best = Some((
                    value,
                    CanonSolution {
                        value,
                        rule,
                        c_star: Some(reg.c),
                        region: Some(reg),
                        monotone: false,
                    },
                ));
            }
        }
        if let Some((_, sol)) = best {
            return Ok(sol);
        }
        let (b, value) = best_threshold(&self.problem, y)?;
        let (rule, c_star) = match b {
            Boundary::At(z) => (StoppingRule::exit(0.0, z), Some(z * sy / self.problem.s(z))),
            Boundary::AtBeta => {
                let z = spec.beta();
                (StoppingRule::exit(0.0, z), Some(z * sy / self.problem.s(z)))
            }
            Boundary::AtInfinity => (
                StoppingRule::EpsilonFamily(EpsilonFamily {
                    kind: FamilyKind::AnchoredLower,
                    value,
                }),
                None,
            ),
        };
        Ok(CanonSolution {
            value,
            rule,
            c_star,
            region: None,
            monotone: false,
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Route {
    Lower(f64),
    Upper(f64),
    Infinite,
    Recurrent,
}

fn route(spec: &DiffusionSpec, x: f64, cls: &Classification) -> Result<Route> {
    Ok(match cls.tag {
        CaseTag::InfiniteValue => Route::Infinite,
        CaseTag::RecurrentBounded => Route::Recurrent,
        CaseTag::CaseI | CaseTag::SpecialTransientI => Route::Lower(x - spec.alpha()),
        CaseTag::CaseII | CaseTag::SpecialTransientII => Route::Upper(spec.beta() - x),
        CaseTag::CaseIII => {
            let lo = spec.lower_limit()?.value;
            let hi = spec.upper_limit()?.value;
            if spec.s(x) - lo <= 0.5 * (hi - lo) {
                Route::Lower(x - spec.alpha())
            } else {
                Route::Upper(spec.beta() - x)
            }
        }
        CaseTag::UnsupportedMarginal => {
            return Err(Error::UnsupportedMarginal { center: f64::NAN });
        }
    })
}

fn finish(spec: &DiffusionSpec, x: f64, mut sol: VarianceSolution) -> VarianceSolution {
    if sol.rule.is_epsilon() || sol.c_star.is_none() {
        sol.diagnostics.mean_check = None;
        return sol;
    }
    match sol.rule.moments(spec, x) {
        Ok(m) => {
            let c = sol.c_star.unwrap();
            sol.diagnostics.mean_under_rule = Some(m.mean);
            sol.diagnostics.mean_check = Some((m.mean - c).abs() <= MEAN_TOL * (1.0 + c.abs()));
        }
        Err(e) => sol
            .diagnostics
            .warnings
            .push(format!("mean check failed: {e}")),
    }
    sol
}

/// Solve at every grid point, sharing the per-branch scans.
pub fn value_profile(spec: &DiffusionSpec, xs: &[f64]) -> Vec<Result<VarianceSolution>> {
    if xs.is_empty() {
        return vec![];
    }
    let jumps = spec.screen_scale();
    let classes: Vec<Result<Classification>> = match &jumps {
        Ok(_) => xs.par_iter().map(|&x| spec.classify(x)).collect(),
        Err(e) => xs.iter().map(|_| Err(e.clone())).collect(),
    };
    let routes: Vec<Result<Route>> = xs
        .iter()
        .zip(&classes)
        .map(|(&x, c)| {
            c.as_ref()
                .map_err(Clone::clone)
                .and_then(|c| route(spec, x, c))
        })
        .collect();
    let special_lo = classes
        .iter()
        .flatten()
        .any(|c| c.tag == CaseTag::SpecialTransientI);
    let special_hi = classes
        .iter()
        .flatten()
        .any(|c| c.tag == CaseTag::SpecialTransientII);
    let lower_ys: Vec<f64> = routes
        .iter()
        .filter_map(|r| match r {
            Ok(Route::Lower(y)) => Some(*y),
            _ => None,
        })
        .collect();
    let upper_ys: Vec<f64> = routes
        .iter()
        .filter_map(|r| match r {
            Ok(Route::Upper(y)) => Some(*y),
            _ => None,
        })
        .collect();
    let lower = (!lower_ys.is_empty()).then(|| {
        spec.translate_to_zero()
            .and_then(|(s, m)| Branch::prepare(s, m, &lower_ys, special_lo))
    });
    let upper = (!upper_ys.is_empty()).then(|| {
        spec.reflect()
            .and_then(|(s, m)| Branch::prepare(s, m, &upper_ys, special_hi))
    });

    xs.par_iter()
        .zip(classes.par_iter())
        .zip(routes.par_iter())
        .map(|((&x, cls), r)| {
            let cls = cls.as_ref().map_err(Clone::clone)?;
            let r = r.as_ref().map_err(Clone::clone)?;
            let mut diag = Diagnostics {
                extrapolated: cls.extrapolated,
                ..Default::default()
            };
            if !cls.jumps.is_empty() {
                diag.warnings.push(format!(
                    "scale drops at breakpoints {:?}",
                    cls.jumps.iter().map(|j| j.at).collect::<Vec<_>>()
                ));
            }
            let base = |value, rule, diag| VarianceSolution {
                x,
                value,
                rule,
                c_star: None,
                region: None,
                classification: cls.clone(),
                diagnostics: diag,
            };
            let (branch, y) = match *r {
                Route::Infinite => {
                    let rule = StoppingRule::EpsilonFamily(EpsilonFamily {
                        kind: FamilyKind::Any,
                        value: f64::INFINITY,
                    });
                    return Ok(base(f64::INFINITY, rule, diag));
                }
                Route::Recurrent => {
                    let span = spec.interval.span();
                    return Ok(base(0.25 * span * span, StoppingRule::WholeInterval, diag));
                }
                Route::Lower(y) => (lower.as_ref().unwrap(), y),
                Route::Upper(y) => (upper.as_ref().unwrap(), y),
            };
            let branch = branch.as_ref().map_err(Clone::clone)?;
            let canon = branch.solve(y)?;
            diag.monotone_shortcut_used = canon.monotone;
            diag.scan_resolution = branch.resolution;
            if let Some(scan) = &branch.scan {
                diag.warnings.extend(scan.warnings.iter().cloned());
            }
            let mut sol = base(canon.value, canon.rule.pull_back(&branch.map), diag);
            sol.c_star = canon.c_star.map(|c| branch.map.apply(c));
            sol.region = canon.region.map(|r| r.pull_back(&branch.map));
            Ok(finish(spec, x, sol))
        })
        .collect()
}

/// `sup_τ Var_x[X_τ]` and an optimal (or ε-optimal) rule.
pub fn solve(spec: &DiffusionSpec, x: f64) -> Result<VarianceSolution> {
    value_profile(spec, &[x]).pop().unwrap()
}

/// Tie regions of the branch that serves `x`, in original coordinates.
pub fn regions_for(spec: &DiffusionSpec, xs: &[f64]) -> Result<Vec<RandomizationRegion>> {
    let (canon, map) = spec.translate_to_zero()?;
    let ys: Vec<f64> = xs.iter().map(|x| map.invert(*x)).collect();
    let b = Branch::prepare(canon, map, &ys, false)?;
    b.regions
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if !r.assumption2 && r.z_lo < r.x_hi {
                r.d_c = Some(b.problem.stopping_set(r.c, 0.5 * (r.z_lo + r.x_hi))?);
            }
            Ok(r.pull_back(&map))
        })
        .collect()
}
