//! Small numerical kernels: bracketed roots, golden-section search,
//! double-exponential quadrature and grid builders.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Bisection on a sign change of `f` over `[lo, hi]`.
///
/// Stops when the bracket is below `x_tol` or stops shrinking in floating point.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, x_tol: f64, max_iter: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracket(format!(
            "no sign change on [{lo}, {hi}] (f={f_lo}, {f_hi})"
        )));
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= x_tol {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section search for a maximum of a unimodal `f` on `[lo, hi]`.
/// Returns the best point seen together with its value.
pub fn golden_max<F>(f: F, lo: f64, hi: f64, rel_tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let (fa, fb) = (f(a), f(b));
    let mut best = (a, fa);
    for cand in [(b, fb), (c, fc), (d, fd)] {
        if cand.1 > best.1 || best.1.is_nan() {
            best = cand;
        }
    }
    for _ in 0..200 {
        if (b - a).abs() <= rel_tol * (a.abs() + b.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            if fd > best.1 {
                best = (d, fd);
            }
        }
    }
    best
}

/// Golden-section search for a minimum.
pub fn golden_min<F>(f: F, lo: f64, hi: f64, rel_tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let (x, v) = golden_max(|t| -f(t), lo, hi, rel_tol);
    (x, -v)
}

/// Tanh-sinh quadrature of `f` over `[a, b]`.
///
/// The integrand receives `(t, t - a, b - t)` with both offsets computed without
/// cancellation, so integrable endpoint singularities can be evaluated in the
/// offset variable.
pub fn tanh_sinh<F>(f: F, a: f64, b: f64, rel_tol: f64) -> f64
where
    F: Fn(f64, f64, f64) -> f64,
{
    if a == b {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let width = b - a;
    let node = |u: f64| -> f64 {
        let v = std::f64::consts::FRAC_PI_2 * u.sinh();
        let cv = v.cosh();
        let w = half * std::f64::consts::FRAC_PI_2 * u.cosh() / (cv * cv);
        if !(w > 0.0) || !w.is_finite() {
            return 0.0;
        }
        // offsets from each endpoint, no cancellation
        let da = width / (1.0 + (-2.0 * v).exp());
        let db = width / (1.0 + (2.0 * v).exp());
        if da <= 0.0 || db <= 0.0 {
            return 0.0;
        }
        let t = if v <= 0.0 { a + da } else { b - db };
        let y = f(t, da, db);
        if y.is_finite() {
            w * y
        } else {
            0.0
        }
    };
    const U_MAX: f64 = 6.2;
    let mut h = 0.5;
    let mut sum = node(0.0);
    let mut k = 1;
    while (k as f64) * h <= U_MAX {
        let u = k as f64 * h;
        sum += node(u) + node(-u);
        k += 1;
    }
    let mut estimate = sum * h;
    for _level in 0..12 {
        h *= 0.5;
        let mut add = 0.0;
        let mut k = 1;
        while (k as f64) * h <= U_MAX {
            let u = k as f64 * h;
            add += node(u) + node(-u);
            k += 2;
        }
        sum += add;
        let next = sum * h;
        let done = (next - estimate).abs() <= rel_tol * next.abs();
        estimate = next;
        if done && h < 0.1 {
            break;
        }
    }
    estimate
}

/// `n` log-spaced points on `[lo, hi]`, both ends included. Requires `0 < lo < hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    debug_assert!(lo > 0.0 && hi > lo && n >= 2);
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn lin_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Points on `(0, top)` that cluster geometrically towards both `lo` and `top - gap`.
pub fn two_sided_grid(lo: f64, top: f64, gap: f64, n: usize) -> Vec<f64> {
    let mid = 0.5 * top;
    let half = (n / 2).max(2);
    let mut pts = if lo < mid {
        log_grid(lo, mid, half)
    } else {
        vec![]
    };
    let gap = gap.min(0.5 * mid);
    let upper = log_grid(gap, top - mid, n - half);
    pts.extend(upper.into_iter().rev().map(|d| top - d));
    sort_dedup(&mut pts);
    pts
}

/// Sort ascending and drop exact or near-exact duplicates.
pub fn sort_dedup(v: &mut Vec<f64>) {
    v.retain(|x| x.is_finite());
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * a.abs().max(b.abs()));
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let (l, r) = v.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

/// Relative closeness used across the crate for reported identities.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
