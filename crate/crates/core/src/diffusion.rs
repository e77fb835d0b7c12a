//! Regular linear diffusions described by their scale function.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::numeric::{self, tanh_sinh};
use crate::scale::{DeclaredLimits, Fx, Piece, ScaleModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Natural,
    Exit,
    Entrance,
    Killing,
    Absorbing,
    #[default]
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateInterval {
    pub alpha: f64,
    pub beta: f64,
    pub lower_behavior: BoundaryKind,
    pub upper_behavior: BoundaryKind,
}

impl StateInterval {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha.is_nan()
            || beta.is_nan()
            || !(alpha < beta)
            || alpha == f64::INFINITY
            || beta == f64::NEG_INFINITY
        {
            return Err(Error::domain(format!(
                "invalid state interval ({alpha}, {beta})"
            )));
        }
        Ok(StateInterval {
            alpha,
            beta,
            lower_behavior: BoundaryKind::Unspecified,
            upper_behavior: BoundaryKind::Unspecified,
        })
    }

    pub fn with_behaviors(mut self, lower: BoundaryKind, upper: BoundaryKind) -> Self {
        self.lower_behavior = lower;
        self.upper_behavior = upper;
        self
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.alpha && x < self.beta
    }

    pub fn span(&self) -> f64 {
        self.beta - self.alpha
    }
}

/// Drift and volatility, present together or not at all.
#[derive(Clone)]
pub struct Sde {
    pub drift: Fx,
    pub vol: Fx,
}

/// Affine pull-back `original = shift + sign * canonical`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineMap {
    pub sign: f64,
    pub shift: f64,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        sign: 1.0,
        shift: 0.0,
    };

    pub fn apply(&self, y: f64) -> f64 {
        if y.is_infinite() {
            return self.sign * y;
        }
        self.shift + self.sign * y
    }

    pub fn invert(&self, x: f64) -> f64 {
        if x.is_infinite() {
            return self.sign * x;
        }
        (x - self.shift) / self.sign
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        AffineMap {
            sign: self.sign * inner.sign,
            shift: self.shift + self.sign * inner.shift,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseTag {
    InfiniteValue,
    RecurrentBounded,
    CaseI,
    CaseII,
    CaseIII,
    SpecialTransientI,
    SpecialTransientII,
    UnsupportedMarginal,
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A downward jump of the scale at a piece boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreakpointJump {
    pub at: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub tag: CaseTag,
    /// `lim a²·P_x(τ_a < ∞)` as `a → α`.
    pub limit_lower: f64,
    /// `lim b²·P_x(τ_b < ∞)` as `b → β`.
    pub limit_upper: f64,
    pub attractive_lower: bool,
    pub attractive_upper: bool,
    /// Some endpoint quantity came from numerical extrapolation.
    pub extrapolated: bool,
    pub jumps: Vec<BreakpointJump>,
}

#[derive(Clone)]
pub struct DiffusionSpec {
    pub name: String,
    pub interval: StateInterval,
    pub scale: ScaleModel,
    pub sde: Option<Sde>,
    pub speed: Option<Fx>,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("name", &self.name)
            .field("interval", &self.interval)
            .field("scale", &self.scale)
            .field("sde", &self.sde.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Lim {
    Finite(f64),
    Infinite,
}

/// An endpoint value together with whether it was extrapolated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointLimit {
    pub value: f64,
    pub extrapolated: bool,
}

/// Decide the limit of an increasing sequence from its last differences.
fn extrapolate_increasing(w: &[f64]) -> std::result::Result<Lim, String> {
    if w.contains(&f64::INFINITY) {
        return Ok(Lim::Infinite);
    }
    let w: Vec<f64> = w.iter().copied().filter(|v| v.is_finite()).collect();
    if w.len() < 6 {
        return Err("too few finite samples near the endpoint".into());
    }
    let d: Vec<f64> = w.windows(2).map(|p| p[1] - p[0]).collect();
    let last = *w.last().unwrap();
    let tail = &d[d.len() - 5..];
    if tail[4].abs() <= 1e-15 * last.abs().max(1e-300) && tail[3].abs() <= 1e-13 * last.abs() {
        return Ok(Lim::Finite(last));
    }
    let r: Vec<f64> = tail.windows(2).map(|p| p[1] / p[0]).collect();
    if r.iter().all(|&q| q >= 0.999) {
        return Ok(Lim::Infinite);
    }
    let rmax = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rmin = r.iter().cloned().fold(f64::INFINITY, f64::min);
    if rmax < 0.98 && (rmax - rmin < 0.05 || rmax < 0.5) {
        let q = r[r.len() - 1].clamp(0.0, 0.98);
        return Ok(Lim::Finite(last + tail[4] * q / (1.0 - q)));
    }
    Err(format!(
        "difference ratios {r:?} neither converge nor diverge clearly"
    ))
}

/// Decide `lim g_k` for a positive sequence sampled on a doubling grid.
fn growth_limit(g: &[f64]) -> std::result::Result<f64, String> {
    let g: Vec<f64> = g.iter().copied().filter(|v| !v.is_nan()).collect();
    if g.len() < 6 {
        return Err("too few samples for the growth limit".into());
    }
    let last = *g.last().unwrap();
    if last == 0.0 {
        return Ok(0.0);
    }
    if last == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let tail = &g[g.len() - 5..];
    let rho: Vec<f64> = tail.windows(2).map(|p| p[1] / p[0]).collect();
    if rho.iter().all(|&q| q < 0.98) {
        return Ok(0.0);
    }
    if rho.iter().all(|&q| q > 1.02) {
        return Ok(f64::INFINITY);
    }
    // converging to a positive constant
    let d: Vec<f64> = tail.windows(2).map(|p| p[1] - p[0]).collect();
    if d[3].abs() <= 1e-12 * last.abs() {
        return Ok(last);
    }
    let r: Vec<f64> = d.windows(2).map(|p| p[1] / p[0]).collect();
    if r.iter().all(|q| q.abs() < 0.98) {
        let q = r[r.len() - 1];
        return Ok(last + d[3] * q / (1.0 - q));
    }
    Err(format!("ratio sequence {rho:?} has no clear limit"))
}

impl DiffusionSpec {
    /// Build a spec; a finite `S(α)` is shifted to zero.
    pub fn new(
        name: impl Into<String>,
        interval: StateInterval,
        scale: ScaleModel,
    ) -> Result<Self> {
        let mut spec = DiffusionSpec {
            name: name.into(),
            interval,
            scale,
            sde: None,
            speed: None,
        };
        let lower = spec.lower_limit()?;
        if lower.value.is_finite() && lower.value != 0.0 {
            spec.scale = spec.scale.shifted_value(lower.value);
            spec.scale.limits.lower = Some(0.0);
        }
        Ok(spec)
    }

    pub fn with_sde(mut self, drift: Fx, vol: Fx) -> Self {
        self.sde = Some(Sde { drift, vol });
        self
    }

    pub fn with_speed(mut self, speed: Fx) -> Self {
        self.speed = Some(speed);
        self
    }

    pub fn alpha(&self) -> f64 {
        self.interval.alpha
    }

    pub fn beta(&self) -> f64 {
        self.interval.beta
    }

    fn reference_length(&self) -> f64 {
        let (a, b) = (self.alpha(), self.beta());
        if a.is_finite() && b.is_finite() {
            0.5 * (b - a)
        } else {
            1.0
        }
    }

    fn reference_point(&self) -> f64 {
        let (a, b) = (self.alpha(), self.beta());
        match (a.is_finite(), b.is_finite()) {
            (true, true) => 0.5 * (a + b),
            (true, false) => a + 1.0,
            (false, true) => b - 1.0,
            (false, false) => 0.0,
        }
    }

    /// `S(α)`, declared or extrapolated.
    pub fn lower_limit(&self) -> Result<EndpointLimit> {
        if let Some(v) = self.scale.limits.lower {
            return Ok(EndpointLimit {
                value: v,
                extrapolated: false,
            });
        }
        let a = self.alpha();
        let l = self.reference_length();
        let mut w = Vec::new();
        for k in 0..90 {
            let t = if a.is_finite() {
                let t = a + l * 0.5f64.powi(k);
                if t <= a {
                    break;
                }
                t
            } else {
                self.reference_point() - l * 2f64.powi(k)
            };
            w.push(-self.scale.eval(t));
        }
        match extrapolate_increasing(&w) {
            Ok(Lim::Finite(v)) => Ok(EndpointLimit {
                value: -v,
                extrapolated: true,
            }),
            Ok(Lim::Infinite) => Ok(EndpointLimit {
                value: f64::NEG_INFINITY,
                extrapolated: true,
            }),
            Err(m) => Err(Error::LimitUndetermined(format!(
                "S at lower endpoint {a}: {m}"
            ))),
        }
    }

    /// `S(β)`, declared or extrapolated.
    pub fn upper_limit(&self) -> Result<EndpointLimit> {
        if let Some(v) = self.scale.limits.upper {
            return Ok(EndpointLimit {
                value: v,
                extrapolated: false,
            });
        }
        let b = self.beta();
        let l = self.reference_length();
        let mut w = Vec::new();
        for k in 0..90 {
            let t = if b.is_finite() {
                let t = b - l * 0.5f64.powi(k);
                if t >= b {
                    break;
                }
                t
            } else {
                self.reference_point() + l * 2f64.powi(k)
            };
            w.push(self.scale.eval(t));
        }
        match extrapolate_increasing(&w) {
            Ok(Lim::Finite(v)) => Ok(EndpointLimit {
                value: v,
                extrapolated: true,
            }),
            Ok(Lim::Infinite) => Ok(EndpointLimit {
                value: f64::INFINITY,
                extrapolated: true,
            }),
            Err(m) => Err(Error::LimitUndetermined(format!(
                "S at upper endpoint {b}: {m}"
            ))),
        }
    }

    /// `lim b²/S(b)` as `b → ∞` (requires `β = ∞`).
    pub fn upper_growth(&self) -> Result<EndpointLimit> {
        if let Some(v) = self.scale.limits.upper_growth {
            return Ok(EndpointLimit {
                value: v,
                extrapolated: false,
            });
        }
        let p = self.reference_point();
        let g: Vec<f64> = (0..64)
            .map(|k| {
                let b = p + 2f64.powi(k);
                let s = self.scale.eval(b);
                if s == f64::INFINITY {
                    0.0
                } else {
                    b * b / s
                }
            })
            .skip(8)
            .collect();
        growth_limit(&g)
            .map(|v| EndpointLimit {
                value: v,
                extrapolated: true,
            })
            .map_err(|m| Error::LimitUndetermined(format!("b²/S(b) as b → ∞: {m}")))
    }

    /// `lim a²/(-S(a))` as `a → -∞` (requires `α = -∞`).
    pub fn lower_growth(&self) -> Result<EndpointLimit> {
        if let Some(v) = self.scale.limits.lower_growth {
            return Ok(EndpointLimit {
                value: v,
                extrapolated: false,
            });
        }
        let p = self.reference_point();
        let g: Vec<f64> = (0..64)
            .map(|k| {
                let a = p - 2f64.powi(k);
                let s = -self.scale.eval(a);
                if s == f64::INFINITY {
                    0.0
                } else {
                    a * a / s
                }
            })
            .skip(8)
            .collect();
        growth_limit(&g)
            .map(|v| EndpointLimit {
                value: v,
                extrapolated: true,
            })
            .map_err(|m| Error::LimitUndetermined(format!("a²/(-S(a)) as a → -∞: {m}")))
    }

    /// `S` on the closed interval, endpoint limits at `α` and `β`.
    pub fn s_at(&self, x: f64) -> Result<f64> {
        if x <= self.alpha() {
            if x < self.alpha() {
                return Err(Error::domain(format!("{x} below the state space")));
            }
            return Ok(self.lower_limit()?.value);
        }
        if x >= self.beta() {
            if x > self.beta() {
                return Err(Error::domain(format!("{x} above the state space")));
            }
            return Ok(self.upper_limit()?.value);
        }
        Ok(self.scale.eval(x))
    }

    /// Interior evaluation without endpoint handling.
    #[inline]
    pub fn s(&self, x: f64) -> f64 {
        self.scale.eval(x)
    }

    #[inline]
    pub fn ds(&self, x: f64) -> f64 {
        self.scale.deriv(x)
    }

    /// `S⁻¹(s)` by bracketing towards the endpoints then bisection.
    pub fn s_inv(&self, s: f64) -> Result<f64> {
        let (a, b) = (self.alpha(), self.beta());
        let lo_v = self.lower_limit()?.value;
        let hi_v = self.upper_limit()?.value;
        if s.is_nan() || s < lo_v || s > hi_v {
            return Err(Error::domain(format!(
                "{s} outside the range of S ({lo_v}, {hi_v})"
            )));
        }
        if s == lo_v {
            return Ok(a);
        }
        if s == hi_v {
            return Ok(b);
        }
        let p = self.reference_point();
        let sp = self.s(p);
        if sp == s {
            return Ok(p);
        }
        let (mut lo, mut hi);
        if sp < s {
            lo = p;
            hi = p;
            for k in 0..2100 {
                let q = if b.is_finite() {
                    b - (b - p) * 0.5f64.powi(k + 1)
                } else {
                    p + 2f64.powi(k)
                };
                if q >= b || !q.is_finite() {
                    hi = b;
                    break;
                }
                hi = q;
                if self.s(q) >= s {
                    break;
                }
                lo = q;
            }
        } else {
            lo = p;
            hi = p;
            for k in 0..2100 {
                let q = if a.is_finite() {
                    a + (p - a) * 0.5f64.powi(k + 1)
                } else {
                    p - 2f64.powi(k)
                };
                if q <= a || !q.is_finite() {
                    lo = a;
                    break;
                }
                lo = q;
                if self.s(q) <= s {
                    break;
                }
                hi = q;
            }
        }
        let f = |t: f64| self.s_at(t).unwrap_or(f64::NAN) - s;
        numeric::bisect(f, lo, hi, 0.0, 400)
    }

    /// Probe points for screening, clustered towards both ends.
    pub fn probe_grid(&self, n: usize) -> Vec<f64> {
        let (a, b) = (self.alpha(), self.beta());
        let mut pts = Vec::with_capacity(n + 64);
        for i in 1..=n {
            let u = i as f64 / (n + 1) as f64;
            let x = match (a.is_finite(), b.is_finite()) {
                (true, true) => a + (b - a) * u,
                (true, false) => a + u / (1.0 - u),
                (false, true) => b - (1.0 - u) / u,
                (false, false) => (std::f64::consts::PI * (u - 0.5)).tan(),
            };
            pts.push(x);
        }
        if a.is_finite() {
            let l = self.reference_length();
            pts.extend((1..=32).map(|k| a + l * 0.5f64.powi(k + 4)));
        }
        if b.is_finite() {
            let l = self.reference_length();
            pts.extend((1..=32).map(|k| b - l * 0.5f64.powi(k + 4)));
        }
        pts.retain(|&x| x > a && x < b);
        numeric::sort_dedup(&mut pts);
        pts
    }

    /// Check that `S` increases strictly on a probe grid; return downward jumps
    /// found at piece boundaries.
    pub fn screen_scale(&self) -> Result<Vec<BreakpointJump>> {
        let pts = self.probe_grid(1024);
        let vals: Vec<f64> = pts.iter().map(|&x| self.s(x)).collect();
        for i in 0..pts.len() - 1 {
            let (l, r) = (vals[i], vals[i + 1]);
            if !l.is_finite() || !r.is_finite() {
                if l.is_nan() || r.is_nan() {
                    return Err(Error::NonMonotoneScale {
                        at: pts[i],
                        left: l,
                        right: r,
                    });
                }
                continue;
            }
            if r <= l {
                // look inside before rejecting a near-tie
                let sub = numeric::lin_grid(pts[i], pts[i + 1], 17);
                let sv: Vec<f64> = sub.iter().map(|&x| self.s(x)).collect();
                if sv.windows(2).any(|w| w[1] <= w[0]) || r <= l {
                    return Err(Error::NonMonotoneScale {
                        at: pts[i],
                        left: l,
                        right: r,
                    });
                }
            }
        }
        let mut jumps = Vec::new();
        for bp in self.scale.breakpoints() {
            if !self.interval.contains(bp) {
                continue;
            }
            let d = 1e-9 * bp.abs().max(1.0);
            let (l, r) = (self.s(bp - d), self.s(bp));
            if r < l {
                jumps.push(BreakpointJump {
                    at: bp,
                    left: l,
                    right: r,
                });
            }
        }
        Ok(jumps)
    }

    /// Regime of the variance problem started at `x`.
    pub fn classify(&self, x: f64) -> Result<Classification> {
        if !self.interval.contains(x) {
            return Err(Error::domain(format!(
                "start point {x} outside the state space"
            )));
        }
        let jumps = self.screen_scale()?;
        let lo = self.lower_limit()?;
        let hi = self.upper_limit()?;
        let mut extrapolated = lo.extrapolated || hi.extrapolated;
        let att_lo = lo.value.is_finite();
        let att_hi = hi.value.is_finite();
        let (a, b) = (self.alpha(), self.beta());
        let sx = self.s(x);

        let done = |tag, limit_lower, limit_upper, extrapolated| Classification {
            tag,
            limit_lower,
            limit_upper,
            attractive_lower: att_lo,
            attractive_upper: att_hi,
            extrapolated,
            jumps: jumps.clone(),
        };

        if !att_lo && !att_hi {
            let tag = if a.is_infinite() || b.is_infinite() {
                CaseTag::InfiniteValue
            } else {
                CaseTag::RecurrentBounded
            };
            let ll = if a.is_infinite() {
                f64::INFINITY
            } else {
                a * a
            };
            let lu = if b.is_infinite() {
                f64::INFINITY
            } else {
                b * b
            };
            return Ok(done(tag, ll, lu, extrapolated));
        }

        let p_up = if att_lo {
            (sx - lo.value) / (hi.value - lo.value)
        } else {
            1.0
        };
        let p_low = if att_hi {
            (hi.value - sx) / (hi.value - lo.value)
        } else {
            1.0
        };
        let limit_upper = if b.is_finite() {
            b * b * p_up
        } else if att_hi {
            f64::INFINITY
        } else {
            let g = self.upper_growth()?;
            extrapolated |= g.extrapolated;
            if g.value == 0.0 {
                0.0
            } else {
                g.value * (sx - lo.value)
            }
        };
        let limit_lower = if a.is_finite() {
            a * a * p_low
        } else if att_lo {
            f64::INFINITY
        } else {
            let g = self.lower_growth()?;
            extrapolated |= g.extrapolated;
            if g.value == 0.0 {
                0.0
            } else {
                g.value * (hi.value - sx)
            }
        };

        let tag = if (b.is_infinite() && limit_upper == f64::INFINITY)
            || (a.is_infinite() && limit_lower == f64::INFINITY)
        {
            CaseTag::InfiniteValue
        } else if att_lo && att_hi {
            CaseTag::CaseIII
        } else if att_lo {
            if b.is_finite() || limit_upper == 0.0 {
                CaseTag::CaseI
            } else {
                CaseTag::SpecialTransientI
            }
        } else if a.is_finite() || limit_lower == 0.0 {
            CaseTag::CaseII
        } else {
            CaseTag::SpecialTransientII
        };
        Ok(done(tag, limit_lower, limit_upper, extrapolated))
    }

    fn check_exit_args(&self, x: f64, a: f64, b: f64) -> Result<()> {
        if !(self.alpha() <= a && a <= x && x <= b && b <= self.beta()) || x.is_nan() {
            return Err(Error::domain(format!(
                "need α ≤ a ≤ x ≤ b ≤ β, got a={a}, x={x}, b={b}"
            )));
        }
        Ok(())
    }

    /// `(P(exit at a), P(exit at b))` for the exit time of `(a, b)` from `x`.
    pub fn hit_prob(&self, x: f64, a: f64, b: f64) -> Result<(f64, f64)> {
        self.check_exit_args(x, a, b)?;
        if x == a {
            return Ok((1.0, 0.0));
        }
        if x == b {
            return Ok((0.0, 1.0));
        }
        let (sa, sb, sx) = (self.s_at(a)?, self.s_at(b)?, self.s(x));
        match (sa.is_finite(), sb.is_finite()) {
            (true, true) => {
                let up = ((sx - sa) / (sb - sa)).clamp(0.0, 1.0);
                let low = ((sb - sx) / (sb - sa)).clamp(0.0, 1.0);
                Ok((low, up))
            }
            (true, false) => Ok((1.0, 0.0)),
            (false, true) => Ok((0.0, 1.0)),
            (false, false) => Err(Error::domain(
                "exit law undefined: the process is recurrent on the whole interval",
            )),
        }
    }

    /// `E_x[X_τ]` for the exit time of `(a, b)`.
    pub fn exit_mean(&self, x: f64, a: f64, b: f64) -> Result<f64> {
        let (pl, pu) = self.hit_prob(x, a, b)?;
        Ok(atom_term(a, pl)? + atom_term(b, pu)?)
    }

    /// `Var_x[X_τ] = (b-a)² p (1-p)` for the exit time of `(a, b)`.
    pub fn exit_variance(&self, x: f64, a: f64, b: f64) -> Result<f64> {
        let (pl, pu) = self.hit_prob(x, a, b)?;
        if pl == 0.0 || pu == 0.0 {
            if (pl > 0.0 && a.is_infinite()) || (pu > 0.0 && b.is_infinite()) {
                return Err(Error::Unbounded);
            }
            return Ok(0.0);
        }
        if a.is_infinite() || b.is_infinite() {
            return Err(Error::Unbounded);
        }
        Ok((b - a) * (b - a) * pl * pu)
    }

    /// Shift `α` to zero. Returns the new spec and the pull-back map.
    pub fn translate_to_zero(&self) -> Result<(DiffusionSpec, AffineMap)> {
        let a = self.alpha();
        if !a.is_finite() {
            return Err(Error::domain(
                "cannot translate: lower endpoint is infinite",
            ));
        }
        let interval = StateInterval {
            alpha: 0.0,
            beta: self.beta() - a,
            lower_behavior: self.interval.lower_behavior,
            upper_behavior: self.interval.upper_behavior,
        };
        let sde = self.sde.as_ref().map(|s| {
            let (d, v) = (s.drift.clone(), s.vol.clone());
            Sde {
                drift: Arc::new(move |y: f64| d(y + a)) as Fx,
                vol: Arc::new(move |y: f64| v(y + a)) as Fx,
            }
        });
        let speed = self.speed.as_ref().map(|m| {
            let m = m.clone();
            Arc::new(move |y: f64| m(y + a)) as Fx
        });
        let spec = DiffusionSpec {
            name: self.name.clone(),
            interval,
            scale: self.scale.translated(a),
            sde,
            speed,
        };
        Ok((
            spec,
            AffineMap {
                sign: 1.0,
                shift: a,
            },
        ))
    }

    /// Mirror at `β`: new state `z = β - x` on `(0, β - α)` with
    /// `Š(z) = S(β) - S(β - z)`.
    pub fn reflect(&self) -> Result<(DiffusionSpec, AffineMap)> {
        let b = self.beta();
        if !b.is_finite() {
            return Err(Error::domain("cannot reflect: upper endpoint is infinite"));
        }
        let top = self.upper_limit()?.value;
        if !top.is_finite() {
            return Err(Error::domain("cannot reflect: S(β) is infinite"));
        }
        let interval = StateInterval {
            alpha: 0.0,
            beta: b - self.alpha(),
            lower_behavior: self.interval.upper_behavior,
            upper_behavior: self.interval.lower_behavior,
        };
        let sde = self.sde.as_ref().map(|s| {
            let (d, v) = (s.drift.clone(), s.vol.clone());
            Sde {
                drift: Arc::new(move |z: f64| -d(b - z)) as Fx,
                vol: Arc::new(move |z: f64| v(b - z)) as Fx,
            }
        });
        let speed = self.speed.as_ref().map(|m| {
            let m = m.clone();
            Arc::new(move |z: f64| m(b - z)) as Fx
        });
        let spec = DiffusionSpec {
            name: self.name.clone(),
            interval,
            scale: self.scale.reflected(b, top),
            sde,
            speed,
        };
        Ok((
            spec,
            AffineMap {
                sign: -1.0,
                shift: b,
            },
        ))
    }

    /// Same diffusion with scale `λS`.
    pub fn scaled(&self, lambda: f64) -> DiffusionSpec {
        let mut s = self.clone();
        s.scale = self.scale.scaled(lambda);
        s
    }
}

fn atom_term(v: f64, p: f64) -> Result<f64> {
    if p == 0.0 {
        return Ok(0.0);
    }
    if v.is_infinite() {
        return Err(Error::Unbounded);
    }
    Ok(v * p)
}

// ---------------------------------------------------------------------------
// builtin diffusions
// ---------------------------------------------------------------------------

/// Geometric Brownian motion `dX = μX dt + σX dW` on `(0, ∞)`.
pub fn gbm(mu: f64, sigma: f64) -> Result<DiffusionSpec> {
    if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
        return Err(Error::domain(format!(
            "gbm needs finite μ and σ > 0, got μ={mu}, σ={sigma}"
        )));
    }
    let k = 1.0 - 2.0 * mu / (sigma * sigma);
    let interval = StateInterval::new(0.0, f64::INFINITY)?
        .with_behaviors(BoundaryKind::Natural, BoundaryKind::Natural);
    let scale = if k.abs() < 1e-14 {
        ScaleModel::closed_form(
            Arc::new(|x: f64| x.ln()),
            Some(Arc::new(|x: f64| 1.0 / x)),
            DeclaredLimits {
                lower: Some(f64::NEG_INFINITY),
                upper: Some(f64::INFINITY),
                upper_growth: Some(f64::INFINITY),
                lower_growth: None,
            },
        )
    } else {
        let growth = if k > 2.0 {
            0.0
        } else if k == 2.0 {
            2.0
        } else {
            f64::INFINITY
        };
        ScaleModel::closed_form(
            Arc::new(move |x: f64| x.powf(k) / k),
            Some(Arc::new(move |x: f64| x.powf(k - 1.0))),
            DeclaredLimits {
                lower: Some(if k > 0.0 { 0.0 } else { f64::NEG_INFINITY }),
                upper: Some(if k > 0.0 { f64::INFINITY } else { 0.0 }),
                upper_growth: Some(growth),
                lower_growth: None,
            },
        )
    };
    Ok(
        DiffusionSpec::new(format!("gbm(mu={mu}, sigma={sigma})"), interval, scale)?.with_sde(
            Arc::new(move |x: f64| mu * x),
            Arc::new(move |x: f64| sigma * x),
        ),
    )
}

/// Jacobi scale built by quadrature of `t^{-(B+1)} (1-t)^{-(A+1)}`.
struct JacobiScale {
    a_exp: f64,
    b_exp: f64,
    s_half: f64,
    s_one: f64,
}

impl JacobiScale {
    const TOL: f64 = 1e-14;

    fn new(a_exp: f64, b_exp: f64) -> Self {
        let mut j = JacobiScale {
            a_exp,
            b_exp,
            s_half: 0.0,
            s_one: f64::INFINITY,
        };
        if b_exp < 0.0 {
            j.s_half = j.from_zero(0.5);
        }
        if a_exp < 0.0 {
            j.s_one = j.s_half + j.to_one(0.5);
        }
        j
    }

    fn density(&self, t: f64, one_minus_t: f64) -> f64 {
        t.powf(-(self.b_exp + 1.0)) * one_minus_t.powf(-(self.a_exp + 1.0))
    }

    fn from_zero(&self, x: f64) -> f64 {
        tanh_sinh(|_, da, _| self.density(da, 1.0 - da), 0.0, x, Self::TOL)
    }

    fn to_one(&self, x: f64) -> f64 {
        tanh_sinh(|t, _, db| self.density(t, db), x, 1.0, Self::TOL)
    }

    fn eval(&self, x: f64) -> f64 {
        if !(x > 0.0 && x < 1.0) {
            return f64::NAN;
        }
        if x <= 0.5 {
            if self.b_exp < 0.0 {
                self.from_zero(x)
            } else {
                -tanh_sinh(|t, _, _| self.density(t, 1.0 - t), x, 0.5, Self::TOL)
            }
        } else if self.a_exp < 0.0 {
            self.s_one - self.to_one(x)
        } else {
            let gap = 1.0 - x;
            self.s_half + tanh_sinh(|t, _, db| self.density(t, gap + db), 0.5, x, Self::TOL)
        }
    }
}

/// Jacobi diffusion `dX = (a - bX) dt + σ √(X(1-X)) dW` on `(0, 1)`.
pub fn jacobi(a: f64, b: f64, sigma: f64) -> Result<DiffusionSpec> {
    if !(a > 0.0 && b > 0.0 && sigma > 0.0) || !(a / b < 1.0) {
        return Err(Error::domain(format!(
            "jacobi needs a, b, σ > 0 and a/b < 1, got a={a}, b={b}, σ={sigma}"
        )));
    }
    let s2 = sigma * sigma;
    let b_exp = 2.0 * a / s2 - 1.0;
    let a_exp = 2.0 * (b - a) / s2 - 1.0;
    let js = Arc::new(JacobiScale::new(a_exp, b_exp));
    let (j1, j2) = (js.clone(), js.clone());
    let limits = DeclaredLimits {
        lower: Some(if b_exp < 0.0 { 0.0 } else { f64::NEG_INFINITY }),
        upper: Some(js.s_one),
        upper_growth: None,
        lower_growth: None,
    };
    let scale = ScaleModel::closed_form(
        Arc::new(move |x: f64| j1.eval(x)),
        Some(Arc::new(move |x: f64| j2.density(x, 1.0 - x))),
        limits,
    );
    let interval = StateInterval::new(0.0, 1.0)?;
    Ok(DiffusionSpec::new(
        format!("jacobi(a={a}, b={b}, sigma={sigma})"),
        interval,
        scale,
    )?
    .with_sde(
        Arc::new(move |x: f64| a - b * x),
        Arc::new(move |x: f64| sigma * (x * (1.0 - x)).max(0.0).sqrt()),
    ))
}

/// Exponents `(A, B)` of the Jacobi scale density.
pub fn jacobi_exponents(a: f64, b: f64, sigma: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    (2.0 * (b - a) / s2 - 1.0, 2.0 * a / s2 - 1.0)
}

/// Brownian motion in natural scale on `(α, β)`.
pub fn natural_scale(alpha: f64, beta: f64) -> Result<DiffusionSpec> {
    let interval = StateInterval::new(alpha, beta)?;
    let off = if alpha.is_finite() { alpha } else { 0.0 };
    let scale = ScaleModel::closed_form(
        Arc::new(move |x: f64| x - off),
        Some(Arc::new(|_| 1.0)),
        DeclaredLimits {
            lower: Some(if alpha.is_finite() {
                0.0
            } else {
                f64::NEG_INFINITY
            }),
            upper: Some(if beta.is_finite() {
                beta - off
            } else {
                f64::INFINITY
            }),
            upper_growth: Some(f64::INFINITY),
            lower_growth: Some(f64::INFINITY),
        },
    );
    Ok(
        DiffusionSpec::new(format!("natural({alpha}, {beta})"), interval, scale)?
            .with_sde(Arc::new(|_| 0.0), Arc::new(|_| 1.0)),
    )
}

/// Recurrent diffusion on a bounded interval with `S(x) = ln((x-α)/(β-x))`
/// (Jacobi type with `A = B = 0`).
pub fn logit_scale(alpha: f64, beta: f64) -> Result<DiffusionSpec> {
    if !(alpha.is_finite() && beta.is_finite()) {
        return Err(Error::domain("logit scale needs a bounded interval"));
    }
    let interval = StateInterval::new(alpha, beta)?;
    let w = beta - alpha;
    let scale = ScaleModel::closed_form(
        Arc::new(move |x: f64| ((x - alpha) / (beta - x)).ln()),
        Some(Arc::new(move |x: f64| w / ((x - alpha) * (beta - x)))),
        DeclaredLimits {
            lower: Some(f64::NEG_INFINITY),
            upper: Some(f64::INFINITY),
            upper_growth: None,
            lower_growth: None,
        },
    );
    Ok(
        DiffusionSpec::new(format!("logit({alpha}, {beta})"), interval, scale)?.with_sde(
            Arc::new(move |x: f64| w * (0.5 - (x - alpha) / w)),
            Arc::new(move |x: f64| {
                let y = (x - alpha) / w;
                w * (y * (1.0 - y)).max(0.0).sqrt()
            }),
        ),
    )
}

/// The piecewise scale whose variance problem needs randomisation.
pub const RANDOMIZED_PIECEWISE: [(f64, &str); 4] = [
    (2.0, "(x^2 - 3/2*x)/(4*x - 6)"),
    (2.1, "(x^2 - 3/2*x)/(-10*x + 22)"),
    (12.0, "(x^2 - 3/2*x)/(1/10*x + 0.8)"),
    (f64::INFINITY, "(x^2 - 3/2*x)/(2*exp(12)*exp(-x))"),
];

pub fn randomized_piecewise() -> Result<DiffusionSpec> {
    let pieces = RANDOMIZED_PIECEWISE
        .iter()
        .map(|(upto, src)| {
            Ok(Piece {
                upto: *upto,
                expr: Expr::parse(src)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    custom(
        "piecewise-randomized",
        0.0,
        f64::INFINITY,
        pieces,
        DeclaredLimits {
            lower: Some(0.0),
            upper: Some(f64::INFINITY),
            upper_growth: Some(0.0),
            lower_growth: None,
        },
    )
}

/// A user-defined piecewise-analytic scale.
pub fn custom(
    name: &str,
    alpha: f64,
    beta: f64,
    pieces: Vec<Piece>,
    limits: DeclaredLimits,
) -> Result<DiffusionSpec> {
    let interval = StateInterval::new(alpha, beta)?;
    let scale = ScaleModel::piecewise(pieces, limits)?;
    DiffusionSpec::new(name, interval, scale)
}
