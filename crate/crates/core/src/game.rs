//! Dual route: the zero-sum game `sup_τ inf_c E_x[(X_τ - c)²]` over threshold
//! rules and centers.

use serde::Serialize;

use crate::diffusion::{AffineMap, CaseTag, DiffusionSpec};
use crate::embedded::EmbeddedProblem;
use crate::error::{Error, Result};
use crate::numeric::{self, log_grid};
use crate::rule::StoppingRule;
use crate::solver;

/// Essential strategies attain the game value to this relative tolerance.
pub const ESSENTIAL_TOL: f64 = 1e-9;
const BOUND_SCAN: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrategyBounds {
    pub c_hat: f64,
    /// `ĉ_x` hit the bottom of the scanned range.
    pub c_hat_clamped: bool,
    pub m_hat: f64,
    pub m_x: f64,
    pub n_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameSolution {
    pub c_star: f64,
    pub value: f64,
    pub essential: Vec<f64>,
    pub mix: StoppingRule,
    pub bounds: StrategyBounds,
    pub gap: Option<f64>,
}

/// Case-I problem in canonical coordinates.
struct Game {
    problem: EmbeddedProblem,
    map: AffineMap,
    y: f64,
    sy: f64,
}

impl Game {
    fn new(spec: &DiffusionSpec, x: f64) -> Result<Game> {
        let cls = spec.classify(x)?;
        if cls.tag != CaseTag::CaseI {
            return Err(Error::AssumptionViolated(format!(
                "dual route is implemented for Case I only, got {}",
                cls.tag
            )));
        }
        let (canon, map) = spec.translate_to_zero()?;
        let y = map.invert(x);
        let problem = EmbeddedProblem::new(&canon, 4.0 * y)?;
        let sy = problem.s(y);
        Ok(Game {
            problem,
            map,
            y,
            sy,
        })
    }

    fn payoff(&self, z: f64, c: f64) -> f64 {
        self.problem.ratio(z, c) * self.sy + c * c
    }

    fn g(&self, c: f64) -> Result<f64> {
        Ok(self.problem.maximizer_set(c)?.ratio_value * self.sy + c * c)
    }

    /// `c - E_y[X_τ(0, z_c)]`, half the slope of `g` on smooth stretches.
    fn slope(&self, c: f64) -> Result<f64> {
        let z = self.problem.maximizer_set(c)?.z_hi;
        Ok(c - z * self.sy / self.problem.s(z))
    }

    fn bounds(&self) -> Result<StrategyBounds> {
        let y = self.y;
        let m_hat = self.problem.value_at(y, 2.0 * y)?;
        let m_x = 2.0 * y + m_hat.sqrt();
        let c_min = m_x * 1e-9;
        let cs = log_grid(c_min, m_x, BOUND_SCAN);
        let z_of = |c: f64| self.problem.maximizer_set(c).map(|s| s.z_hi);
        let mut c_hat = c_min;
        let mut clamped = true;
        if z_of(c_min)? <= y {
            clamped = false;
            let k = cs
                .iter()
                .position(|&c| z_of(c).map(|z| z > y).unwrap_or(false))
                .unwrap_or(cs.len() - 1);
            let (mut lo, mut hi) = (cs[k.saturating_sub(1)], cs[k]);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if z_of(mid)? > y {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            c_hat = hi;
        }
        let n_x = z_of(m_x)?.max(y);
        Ok(StrategyBounds {
            c_hat,
            c_hat_clamped: clamped,
            m_hat,
            m_x,
            n_x,
        })
    }

    fn dual(&self, b: &StrategyBounds) -> Result<(f64, f64)> {
        let scan = self.problem.scan(b.c_hat, b.m_x, solver::C_SCAN_POINTS);
        for t in &scan.ties {
            let reg = solver::randomization_region(self.problem.spec(), t.c, t.z_lo, t.z_hi)?;
            if !reg.assumption2 && reg.z_lo < self.y && self.y < reg.x_hi {
                return Err(Error::AssumptionViolated(format!(
                    "tie center {} fails the mean-ordering assumption at this start point",
                    t.c
                )));
            }
        }
        let mut knots = vec![b.c_hat, b.m_x];
        knots.extend(scan.ties.iter().map(|t| t.c));
        numeric::sort_dedup(&mut knots);
        let mut cands = knots.clone();
        for w in knots.windows(2) {
            let (lo, hi) = (w[0] * (1.0 + 1e-13), w[1] * (1.0 - 1e-13));
            if lo >= hi {
                continue;
            }
            let f = |c: f64| self.slope(c).unwrap_or(f64::NAN);
            if let Ok(r) = numeric::bisect(f, lo, hi, 0.0, 200) {
                cands.push(r);
            }
        }
        let mut best = (f64::NAN, f64::INFINITY);
        for c in cands {
            let v = self.g(c)?;
            if v < best.1 {
                best = (c, v);
            }
        }
        Ok(best)
    }

    fn essentials(&self, c: f64, value: f64, n_x: f64) -> Vec<f64> {
        let tol = ESSENTIAL_TOL * value.abs().max(1e-300);
        let mut zs: Vec<f64> = self
            .problem
            .local_peaks(c)
            .into_iter()
            .map(|(z, _)| z)
            .chain(std::iter::once(self.y))
            .filter(|&z| z >= self.y && z <= n_x * (1.0 + 1e-9))
            .filter(|&z| self.payoff(z, c) >= value - tol)
            .collect();
        numeric::sort_dedup(&mut zs);
        zs.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * a.abs().max(1.0));
        zs
    }

    fn mix(&self, c: f64, essentials: &[f64]) -> Result<StoppingRule> {
        if essentials.is_empty() {
            return Err(Error::EmptyEssentialSet(c));
        }
        let slope = |z: f64| 2.0 * (c - z * self.sy / self.problem.s(z));
        let pure = |z: f64| StoppingRule::exit(0.0, z);
        if essentials.len() == 1 {
            return Ok(pure(essentials[0]));
        }
        let ds: Vec<(f64, f64)> = essentials.iter().map(|&z| (z, slope(z))).collect();
        let zero_tol = 1e-7 * (1.0 + c.abs());
        if let Some(&(z, _)) = ds
            .iter()
            .filter(|d| d.1.abs() <= zero_tol)
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        {
            return Ok(pure(z));
        }
        let neg = ds.iter().find(|d| d.1 < 0.0);
        let pos = ds.iter().rev().find(|d| d.1 > 0.0);
        match (neg, pos) {
            (Some(&(z1, a1)), Some(&(z2, a2))) => {
                let p = a2 / (a2 - a1);
                Ok(StoppingRule::mix(p, pure(z1), pure(z2)))
            }
            _ => Err(Error::NoSignChange(c)),
        }
    }
}

fn canonical_payoff(spec: &DiffusionSpec, x: f64, z: f64, c: f64) -> Result<f64> {
    if !(z >= x) {
        return Err(Error::domain(format!(
            "threshold {z} below start point {x}"
        )));
    }
    let sx = spec.s_at(x)?;
    let sz = spec.s_at(z)?;
    if sx == sz {
        return Ok((x - c) * (x - c));
    }
    Ok((z * z - 2.0 * c * z) / sz * sx + c * c)
}

/// `A(τ_(0,z), c) = (z² - 2cz)/S(z)·S(x) + c²` in canonical coordinates.
pub fn payoff(spec: &DiffusionSpec, x: f64, z: f64, c: f64) -> Result<f64> {
    if spec.alpha() != 0.0 || spec.lower_limit()?.value != 0.0 {
        return Err(Error::domain(
            "payoff needs canonical coordinates (α = 0, S(0) = 0)",
        ));
    }
    canonical_payoff(spec, x, z, c)
}

/// Compact strategy sets `[ĉ_x, M_x]` for centers and `[x, N_x]` for thresholds.
/// Reported in canonical coordinates.
pub fn strategy_bounds(spec: &DiffusionSpec, x: f64) -> Result<StrategyBounds> {
    Game::new(spec, x)?.bounds()
}

/// Minimize `g(c) = R(c)·S(x) + c²`; returns `(c*, value)` with `c*` in the
/// original coordinates.
pub fn dual_value(spec: &DiffusionSpec, x: f64) -> Result<(f64, f64)> {
    let g = Game::new(spec, x)?;
    let b = g.bounds()?;
    let (c, v) = g.dual(&b)?;
    Ok((g.map.apply(c), v))
}

/// Thresholds (original coordinates) whose payoff against `c*` equals the value.
pub fn essential_strategies(spec: &DiffusionSpec, x: f64, c_star: f64) -> Result<Vec<f64>> {
    let g = Game::new(spec, x)?;
    let b = g.bounds()?;
    let c = g.map.invert(c_star);
    let value = g.g(c)?;
    let zs = g.essentials(c, value, b.n_x);
    if zs.is_empty() {
        return Err(Error::EmptyEssentialSet(c_star));
    }
    Ok(zs.into_iter().map(|z| g.map.apply(z)).collect())
}

/// Optimal mixed strategy of the sup-player on at most two essential thresholds.
pub fn mixed_from_essentials(
    spec: &DiffusionSpec,
    x: f64,
    c_star: f64,
    essentials: &[f64],
) -> Result<StoppingRule> {
    let g = Game::new(spec, x)?;
    let zs: Vec<f64> = essentials.iter().map(|&z| g.map.invert(z)).collect();
    Ok(g.mix(g.map.invert(c_star), &zs)?.pull_back(&g.map))
}

/// Full dual solve.
pub fn solve_game(spec: &DiffusionSpec, x: f64) -> Result<GameSolution> {
    let g = Game::new(spec, x)?;
    let bounds = g.bounds()?;
    let (c, value) = g.dual(&bounds)?;
    let ess = g.essentials(c, value, bounds.n_x);
    let mix = g.mix(c, &ess)?.pull_back(&g.map);
    Ok(GameSolution {
        c_star: g.map.apply(c),
        value,
        essential: ess.into_iter().map(|z| g.map.apply(z)).collect(),
        mix,
        bounds,
        gap: None,
    })
}

/// `|primal - dual|`, or `None` when the dual route refuses the start point.
pub fn duality_gap(spec: &DiffusionSpec, x: f64) -> Result<Option<f64>> {
    let primal = solver::solve(spec, x)?;
    match dual_value(spec, x) {
        Ok((_, v)) => Ok(Some((primal.value - v).abs())),
        Err(Error::AssumptionViolated(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Fill the duality gap of a primal solution when the dual route applies.
pub fn certify(spec: &DiffusionSpec, sol: &mut solver::VarianceSolution) {
    if sol.classification.tag != CaseTag::CaseI || !sol.value.is_finite() {
        return;
    }
    match dual_value(spec, sol.x) {
        Ok((_, v)) => sol.diagnostics.duality_gap = Some((sol.value - v).abs()),
        Err(Error::AssumptionViolated(m)) => sol
            .diagnostics
            .warnings
            .push(format!("dual route not applicable: {m}")),
        Err(e) => sol
            .diagnostics
            .warnings
            .push(format!("dual solve failed: {e}")),
    }
}
