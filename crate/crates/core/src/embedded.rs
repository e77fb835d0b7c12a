//! The embedded quadratic problem `V^c(x) = sup_τ E_x[(X_τ - c)²]` in canonical
//! coordinates (`α = 0`, `S(0) = 0`).

use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::DiffusionSpec;
use crate::error::{Error, Result};
use crate::lcm;
use crate::numeric::{self, golden_max, golden_min, log_grid};

/// Points of the threshold grid.
pub const SCAN_POINTS: usize = 2048;
/// Points of the natural-scale sample used for the concave majorant.
pub const LCM_POINTS: usize = 10_000;
/// Two maximizers tie when their ratio values agree to this relative tolerance.
pub const PLATEAU_TOL: f64 = 1e-10;
/// Relative distance to the majorant counted as contact.
pub const CONTACT_TOL: f64 = 1e-8;
/// Candidates for one peak within this relative distance of the best count as equal;
/// the earliest (stationary root, then kinks) wins.
const PEAK_TIE: f64 = 1e-13;
const DECAY: f64 = 1e-6;
const Z_MIN: f64 = 1e-6;
const CEILING: f64 = 1e15;
const SPECIAL_CEILING: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddedSolution {
    pub c: f64,
    /// Every global maximizer of the ratio, ascending.
    pub maximizers: Vec<f64>,
    pub z_lo: f64,
    pub z_hi: f64,
    pub ratio_value: f64,
    /// The supremum is approached as `z → ∞`.
    pub at_infinity: bool,
}

impl EmbeddedSolution {
    /// `V^c(x)` for `x ≤ z_hi`.
    pub fn value_below(&self, s_x: f64) -> f64 {
        self.ratio_value * s_x + self.c * self.c
    }
}

/// A center where the greatest maximizer jumps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TieCenter {
    pub c: f64,
    pub z_lo: f64,
    pub z_hi: f64,
    pub maximizers: Vec<f64>,
    pub ratio_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub c_lo: f64,
    pub c_hi: f64,
    pub points: usize,
    pub ties: Vec<TieCenter>,
    pub warnings: Vec<String>,
}

/// Cached threshold grid with `u = z²/S(z)` and `w = z/S(z)`, so that the ratio
/// at center `c` is `u - 2c·w`.
#[derive(Debug, Clone)]
pub struct EmbeddedProblem {
    spec: DiffusionSpec,
    z: Vec<f64>,
    u: Vec<f64>,
    w: Vec<f64>,
    growth: f64,
    s_beta: f64,
    breaks: Vec<f64>,
}

fn canonical_check(spec: &DiffusionSpec) -> Result<()> {
    if spec.alpha() != 0.0 || spec.lower_limit()?.value != 0.0 {
        return Err(Error::domain(
            "embedded problem needs canonical coordinates (α = 0, S(0) = 0)",
        ));
    }
    Ok(())
}

impl EmbeddedProblem {
    /// Build the grid so that it reaches beyond the maximizers of every center
    /// up to `c_hint`.
    pub fn new(spec: &DiffusionSpec, c_hint: f64) -> Result<Self> {
        canonical_check(spec)?;
        let beta = spec.beta();
        let s_beta = spec.upper_limit()?.value;
        let breaks: Vec<f64> = spec
            .scale
            .breakpoints()
            .into_iter()
            .filter(|&b| b > 0.0 && b < beta)
            .collect();
        let mut growth = 0.0;
        let mut z = if beta.is_infinite() {
            growth = spec.upper_growth()?.value;
            let u = |z: f64| {
                let s = spec.s(z);
                if s.is_finite() {
                    z * z / s
                } else {
                    0.0
                }
            };
            let need = (8.0 * c_hint).max(1.0);
            let mut top = 1.0f64;
            let mut run = u(Z_MIN).max(u(top));
            let mut quiet = 0;
            loop {
                top *= 2.0;
                let v = u(top);
                run = run.max(v);
                if v < DECAY * run && top >= need {
                    quiet += 1;
                    if quiet >= 3 {
                        break;
                    }
                } else {
                    quiet = 0;
                }
                if growth > 0.0 && top >= SPECIAL_CEILING.max(need) {
                    break;
                }
                if top > CEILING {
                    return Err(Error::Truncation { ceiling: top });
                }
            }
            log_grid(Z_MIN, top, SCAN_POINTS)
        } else {
            let mut g = numeric::two_sided_grid(beta * 1e-7, beta, beta * 1e-10, SCAN_POINTS);
            if s_beta.is_finite() {
                g.push(beta);
            }
            g
        };
        let z_top = *z.last().unwrap();
        z.extend(breaks.iter().copied().filter(|&b| b <= z_top));
        numeric::sort_dedup(&mut z);
        let mut s: Vec<f64> = z
            .iter()
            .map(|&t| if t >= beta { s_beta } else { spec.s(t) })
            .collect();
        let keep: Vec<bool> = s.iter().map(|&v| v > 0.0 && !v.is_nan()).collect();
        let mut k = 0;
        z.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        s.retain(|&v| v > 0.0 && !v.is_nan());
        let u = z
            .iter()
            .zip(&s)
            .map(|(&t, &v)| if v.is_finite() { t * t / v } else { 0.0 })
            .collect();
        let w = z
            .iter()
            .zip(&s)
            .map(|(&t, &v)| if v.is_finite() { t / v } else { 0.0 })
            .collect();
        Ok(EmbeddedProblem {
            spec: spec.clone(),
            z,
            u,
            w,
            growth,
            s_beta,
            breaks,
        })
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    pub fn grid(&self) -> &[f64] {
        &self.z
    }

    pub fn grid_top(&self) -> f64 {
        *self.z.last().unwrap()
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    /// `S` with the endpoint value at `β`.
    pub fn s(&self, z: f64) -> f64 {
        if z >= self.spec.beta() {
            self.s_beta
        } else if z <= 0.0 {
            0.0
        } else {
            self.spec.s(z)
        }
    }

    /// `(z² - 2cz) / S(z)`.
    pub fn ratio(&self, z: f64, c: f64) -> f64 {
        let s = self.s(z);
        if s == f64::INFINITY {
            return 0.0;
        }
        (z * z - 2.0 * c * z) / s
    }

    #[inline]
    fn grid_ratio(&self, i: usize, c: f64) -> f64 {
        self.u[i] - 2.0 * c * self.w[i]
    }

    fn grid_argmax(&self, c: f64, lo: usize, hi: usize) -> usize {
        let mut best = lo;
        let mut bv = f64::NEG_INFINITY;
        for i in lo..=hi {
            let v = self.grid_ratio(i, c);
            if v > bv {
                bv = v;
                best = i;
            }
        }
        best
    }

    /// Refine a grid peak: golden section, breakpoints, and a bisection on the
    /// stationarity condition when the derivative is smooth there.
    fn refine_peak(&self, c: f64, i: usize) -> (f64, f64) {
        let n = self.z.len();
        let lo = self.z[i.saturating_sub(1)];
        let hi = self.z[(i + 1).min(n - 1)];
        let f = |t: f64| self.ratio(t, c);
        let mut cands: Vec<(f64, f64)> = Vec::with_capacity(6);
        let kinks: Vec<f64> = self
            .breaks
            .iter()
            .copied()
            .filter(|&b| b >= lo && b <= hi)
            .collect();
        if self.spec.scale.has_exact_derivative() {
            let phi = |t: f64| {
                let s = self.s(t);
                2.0 * (t - c) * s - (t * t - 2.0 * c * t) * self.spec.ds(t)
            };
            let mut knots = vec![lo, self.z[i], hi];
            knots.extend(kinks.iter().copied());
            numeric::sort_dedup(&mut knots);
            for w in knots.windows(2) {
                let d = 1e-12 * w[0].abs().max(w[1].abs()).max(1.0);
                let (a, b) = (w[0] + d, w[1] - d);
                if a < b && phi(a) > 0.0 && phi(b) < 0.0 {
                    if let Ok(r) = numeric::bisect(phi, a, b, 0.0, 200) {
                        cands.push((r, f(r)));
                    }
                }
            }
        }
        for k in kinks {
            cands.push((k, f(k)));
        }
        if lo < hi {
            cands.push(golden_max(f, lo, hi, 1e-14));
        }
        cands.push((self.z[i], f(self.z[i])));
        let best = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let tol = PEAK_TIE * best.abs();
        *cands.iter().find(|c| c.1 >= best - tol).unwrap()
    }

    /// Every refined local maximum `(z, ratio)` of the ratio on the grid.
    pub fn local_peaks(&self, c: f64) -> Vec<(f64, f64)> {
        let n = self.z.len();
        let vals: Vec<f64> = (0..n).map(|i| self.grid_ratio(i, c)).collect();
        (0..n)
            .filter(|&j| {
                (j == 0 || vals[j] >= vals[j - 1]) && (j + 1 == n || vals[j] >= vals[j + 1])
            })
            .map(|j| self.refine_peak(c, j))
            .collect()
    }

    /// All global maximizers of the ratio at center `c`.
    pub fn maximizer_set(&self, c: f64) -> Result<EmbeddedSolution> {
        let n = self.z.len();
        let vals: Vec<f64> = (0..n).map(|i| self.grid_ratio(i, c)).collect();
        let top = self.grid_argmax(c, 0, n - 1);
        let (z0, r0) = self.refine_peak(c, top);
        let mut peaks = vec![(z0, r0)];
        let screen = r0 - 1e-6 * r0.abs().max(1e-300);
        for j in 0..n {
            if j == top || vals[j] < screen {
                continue;
            }
            let left = j == 0 || vals[j] >= vals[j - 1];
            let right = j + 1 == n || vals[j] >= vals[j + 1];
            if left && right {
                peaks.push(self.refine_peak(c, j));
            }
        }
        let best = peaks.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let tol = PLATEAU_TOL * best.abs().max(1e-300);
        let mut zs: Vec<f64> = peaks
            .iter()
            .filter(|p| p.1 >= best - tol)
            .map(|p| p.0)
            .collect();
        zs.sort_by(|a, b| a.total_cmp(b));
        zs.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * a.abs().max(1.0));

        let beta = self.spec.beta();
        let last_is_top = zs
            .last()
            .is_some_and(|&z| z >= self.grid_top() * (1.0 - 1e-12));
        let mut at_infinity = false;
        let mut ratio_value = best;
        if beta.is_infinite() {
            if self.growth > 0.0 && (last_is_top || self.growth >= best - tol) {
                at_infinity = true;
                if self.growth > best + tol || last_is_top {
                    zs.retain(|&z| z < self.grid_top() * (1.0 - 1e-12));
                }
                ratio_value = best.max(self.growth);
            } else if last_is_top {
                return Err(Error::NoMaximizer);
            }
        }
        let z_lo = zs.first().copied().unwrap_or(f64::INFINITY);
        let z_hi = if at_infinity {
            f64::INFINITY
        } else {
            *zs.last().unwrap()
        };
        Ok(EmbeddedSolution {
            c,
            maximizers: zs,
            z_lo,
            z_hi,
            ratio_value,
            at_infinity,
        })
    }

    /// `V^c(x) = R_c·S(x) + c²` for `x ≤ z_hi(c)`.
    pub fn embedded_value(&self, x: f64, c: f64) -> Result<f64> {
        let sol = self.maximizer_set(c)?;
        if x > sol.z_hi {
            return Err(Error::StartAboveMaximizer { x, z_hi: sol.z_hi });
        }
        Ok(sol.value_below(self.s(x)))
    }

    /// `V^c(x)` anywhere, through the stopping set above `z_hi`.
    pub fn value_at(&self, x: f64, c: f64) -> Result<f64> {
        let sol = self.maximizer_set(c)?;
        if x <= sol.z_hi {
            return Ok(sol.value_below(self.s(x)));
        }
        let (a, b) = self.stopping_set(c, x)?;
        if a == b {
            return Ok((x - c) * (x - c));
        }
        let (sa, sb, sx) = (self.s(a), self.s(b), self.s(x));
        let p = (sx - sa) / (sb - sa);
        Ok((a - c) * (a - c) * (1.0 - p) + (b - c) * (b - c) * p)
    }

    /// `E_{z_lo}[X_{τ(0, z_hi)}] > c`.
    /// A maximizer at infinity carries no exit mass, so the test fails there.
    pub fn assumption2_holds(&self, c: f64, z_lo: f64, z_hi: f64) -> bool {
        if z_hi.is_infinite() {
            return false;
        }
        z_hi * self.s(z_lo) / self.s(z_hi) > c
    }

    fn lcm_sample(&self, c: f64, x: f64, top: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let beta = self.spec.beta();
        let lo = self.z[0].min(x * 1e-3).max(1e-300);
        let mut ys = log_grid(lo, top.min(beta), LCM_POINTS);
        ys.extend(self.breaks.iter().copied().filter(|&b| b < top));
        ys.extend([c, 2.0 * c, x].into_iter().filter(|&t| t > 0.0 && t < top));
        ys.extend(self.z.iter().copied().filter(|&t| t < top));
        numeric::sort_dedup(&mut ys);
        if ys.last().copied() == Some(beta) && !self.s_beta.is_finite() {
            ys.pop();
        }
        let mut pts: Vec<(f64, f64, f64)> = std::iter::once((0.0, 0.0, c * c))
            .chain(ys.into_iter().map(|y| (y, self.s(y), (y - c) * (y - c))))
            .filter(|p| p.1.is_finite())
            .collect();
        pts.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
        pts.dedup_by(|a, b| a.1 == b.1);
        let y = pts.iter().map(|p| p.0).collect();
        let s = pts.iter().map(|p| p.1).collect();
        let h = pts.iter().map(|p| p.2).collect();
        (y, s, h)
    }

    fn contact_interval(&self, c: f64, x: f64, top: f64) -> (f64, f64, f64, f64) {
        let (ys, ss, hs) = self.lcm_sample(c, x, top);
        let contact = lcm::contact_indices(&ss, &hs, CONTACT_TOL);
        let sx = self.s(x);
        let mut a_i = None;
        let mut b_i = None;
        for &i in &contact {
            if ss[i] <= sx {
                a_i = Some(i);
            }
            if ss[i] >= sx && b_i.is_none() {
                b_i = Some(i);
            }
        }
        let a_i = a_i.unwrap_or(0);
        let b_i = b_i.unwrap_or(ys.len() - 1);
        // sample neighbours bracket the true contact edges
        let nb = |i: usize| (ys[i.saturating_sub(1)], ys[(i + 1).min(ys.len() - 1)]);
        let (al, ar) = nb(a_i);
        let (bl, br) = nb(b_i);
        (ys[a_i], ys[b_i], al.min(ar), br.max(bl))
    }

    fn refine_edges(
        &self,
        c: f64,
        x: f64,
        a: f64,
        b: f64,
        abr: (f64, f64),
        bbr: (f64, f64),
    ) -> (f64, f64) {
        let h = |y: f64| (y - c) * (y - c);
        let (mut a, mut b) = (a, b);
        for _ in 0..4 {
            let (sa, ha) = (self.s(a), h(a));
            let lo = bbr.0.max(x);
            if lo < bbr.1 {
                let slope = |y: f64| (h(y) - ha) / (self.s(y) - sa);
                let mut best = (b, slope(b));
                let g = golden_max(slope, lo, bbr.1, 1e-14);
                if g.1 > best.1 {
                    best = g;
                }
                for &k in self.breaks.iter().filter(|&&k| k >= lo && k <= bbr.1) {
                    let v = slope(k);
                    if v > best.1 {
                        best = (k, v);
                    }
                }
                b = best.0;
            }
            if a > 0.0 {
                let (sb, hb) = (self.s(b), h(b));
                let hi = abr.1.min(x);
                if abr.0 < hi {
                    let slope = |y: f64| (hb - h(y)) / (sb - self.s(y));
                    let mut best = (a, slope(a));
                    let g = golden_min(slope, abr.0, hi, 1e-14);
                    if g.1 < best.1 {
                        best = g;
                    }
                    for &k in self.breaks.iter().filter(|&&k| k >= abr.0 && k <= hi) {
                        let v = slope(k);
                        if v < best.1 {
                            best = (k, v);
                        }
                    }
                    a = best.0;
                }
            }
        }
        (a, b)
    }

    /// Component of the stopping set `D_c` bracketing `x`, as an exit interval.
    /// Returns `(x, x)` when `x` itself lies in `D_c`.
    pub fn stopping_set(&self, c: f64, x: f64) -> Result<(f64, f64)> {
        let beta = self.spec.beta();
        if !(x > 0.0 && x < beta) {
            return Err(Error::domain(format!(
                "start point {x} outside (0, {beta})"
            )));
        }
        let (top1, top2) = if beta.is_infinite() {
            let t = self.grid_top().max(4.0 * x);
            (t, 2.0 * t)
        } else if self.s_beta.is_finite() {
            (beta, beta)
        } else {
            let gap = beta - self.z[self.z.len() - 1];
            (beta - gap, beta - 0.5 * gap)
        };
        let (a, b, al, br) = self.contact_interval(c, x, top1);
        if top2 != top1 {
            let (_, b2, _, _) = self.contact_interval(c, x, top2);
            if (b2 - b).abs() > 1e-6 * b.abs().max(1.0) {
                return Err(Error::Truncation { ceiling: top1 });
            }
        }
        if a == x || b == x {
            return Ok((x, x));
        }
        let (ra, rb) = self.refine_edges(c, x, a, b, (al, a.max(al)), (b.min(br), br));
        Ok((ra, rb))
    }

    /// Detect centers in `c_grid` where the greatest maximizer jumps.
    pub fn scan_grid(&self, c_grid: &[f64]) -> ScanResult {
        let n = self.z.len();
        let idx: Vec<usize> = c_grid
            .par_iter()
            .map(|&c| self.grid_argmax(c, 0, n - 1))
            .collect();
        let mut ties: Vec<(usize, TieCenter)> = Vec::new();
        let mut warnings = Vec::new();
        for k in 0..c_grid.len().saturating_sub(1) {
            let (i, j) = (idx[k], idx[k + 1]);
            let (lo, hi) = (i.min(j), i.max(j));
            if hi - lo < 2 {
                continue;
            }
            let (c0, c1) = (c_grid[k], c_grid[k + 1]);
            let cm = 0.5 * (c0 + c1);
            let (ri, rj) = (self.grid_ratio(i, cm), self.grid_ratio(j, cm));
            let (v, vmin) = (lo + 1..hi).map(|t| (t, self.grid_ratio(t, cm))).fold(
                (lo + 1, f64::INFINITY),
                |acc, p| if p.1 < acc.1 { p } else { acc },
            );
            let floor = ri.min(rj);
            if !(vmin < floor - 1e-12 * ri.abs().max(rj.abs()).max(1e-300)) {
                continue;
            }
            let peak_a = |c: f64| self.refine_peak(c, self.grid_argmax(c, 0, v));
            let peak_b = |c: f64| self.refine_peak(c, self.grid_argmax(c, v, n - 1));
            let d = |c: f64| peak_a(c).1 - peak_b(c).1;
            let c_star = match numeric::bisect(d, c0, c1, 0.0, 200) {
                Ok(c) => c,
                Err(_) => {
                    warnings.push(format!(
                        "maximizer jump between c={c0} and c={c1} could not be bisected"
                    ));
                    continue;
                }
            };
            let (za, ra) = peak_a(c_star);
            let (zb, rb) = peak_b(c_star);
            let mut maxs = vec![za, zb];
            if let Ok(sol) = self.maximizer_set(c_star) {
                maxs.extend(sol.maximizers);
            }
            numeric::sort_dedup(&mut maxs);
            maxs.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * a.abs().max(1.0));
            ties.push((
                k,
                TieCenter {
                    c: c_star,
                    z_lo: za.min(zb),
                    z_hi: za.max(zb),
                    maximizers: maxs,
                    ratio_value: ra.max(rb),
                },
            ));
        }
        for w in ties.windows(2) {
            if w[1].0 - w[0].0 <= 2 {
                warnings.push(format!(
                    "tie centers {} and {} are within two scan cells; closer ties may be missed",
                    w[0].1.c, w[1].1.c
                ));
            }
        }
        ScanResult {
            c_lo: c_grid.first().copied().unwrap_or(f64::NAN),
            c_hi: c_grid.last().copied().unwrap_or(f64::NAN),
            points: c_grid.len(),
            ties: ties.into_iter().map(|t| t.1).collect(),
            warnings,
        }
    }

    /// Log-spaced scan over `[c_lo, c_hi]`.
    pub fn scan(&self, c_lo: f64, c_hi: f64, points: usize) -> ScanResult {
        self.scan_grid(&log_grid(c_lo, c_hi, points.max(2)))
    }
}

/// `(z² - α² - 2c(z - α)) / S(z)`.
pub fn ratio(spec: &DiffusionSpec, z: f64, c: f64) -> Result<f64> {
    let a = spec.alpha();
    if !(z > a && z <= spec.beta()) {
        return Err(Error::domain(format!(
            "threshold {z} outside the state space"
        )));
    }
    let s = spec.s_at(z)?;
    Ok((z * z - a * a - 2.0 * c * (z - a)) / s)
}

pub fn maximizer_set(spec: &DiffusionSpec, c: f64) -> Result<EmbeddedSolution> {
    EmbeddedProblem::new(spec, c)?.maximizer_set(c)
}

pub fn embedded_value(spec: &DiffusionSpec, x: f64, c: f64) -> Result<f64> {
    EmbeddedProblem::new(spec, c)?.embedded_value(x, c)
}

pub fn stopping_set(spec: &DiffusionSpec, c: f64, x: f64) -> Result<(f64, f64)> {
    EmbeddedProblem::new(spec, c.max(x))?.stopping_set(c, x)
}

/// Assumption-2 test at a center with several maximizers.
pub fn assumption2_holds(spec: &DiffusionSpec, c: f64) -> Result<bool> {
    let p = EmbeddedProblem::new(spec, c)?;
    let sol = p.maximizer_set(c)?;
    Ok(p.assumption2_holds(c, sol.z_lo, sol.z_hi))
}

pub fn multi_maximizer_scan(spec: &DiffusionSpec, c_grid: &[f64]) -> Result<ScanResult> {
    let hint = c_grid.last().copied().unwrap_or(1.0);
    Ok(EmbeddedProblem::new(spec, hint)?.scan_grid(c_grid))
}
