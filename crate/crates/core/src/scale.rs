//! Scale functions: closed-form, piecewise-analytic and tabulated, with the
//! affine reparametrisations needed by the translation and reflection maps.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;

pub type Fx = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Relative step of the finite-difference derivative.
pub const FD_REL_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    ClosedForm,
    Piecewise,
    Tabulated,
}

/// Endpoint information a user (or a builtin) knows analytically.
///
/// `lower`/`upper` are `S(α)` and `S(β)`; `upper_growth` is `lim b²/S(b)` as
/// `b → ∞` and `lower_growth` is `lim a²/(-S(a))` as `a → -∞`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DeclaredLimits {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub upper_growth: Option<f64>,
    pub lower_growth: Option<f64>,
}

/// One analytic piece of a custom scale: valid for `x < upto`.
#[derive(Debug, Clone)]
pub struct Piece {
    pub upto: f64,
    pub expr: Expr,
}

#[derive(Clone)]
pub struct ScaleModel {
    base: Fx,
    base_deriv: Option<Fx>,
    kind: ScaleKind,
    base_breaks: Vec<f64>,
    // state map t = sign * y + shift, value map S = vscale * base(t) + voffset
    sign: f64,
    shift: f64,
    vscale: f64,
    voffset: f64,
    pub limits: DeclaredLimits,
}

impl fmt::Debug for ScaleModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScaleModel")
            .field("kind", &self.kind)
            .field("breakpoints", &self.breakpoints())
            .field("limits", &self.limits)
            .finish()
    }
}

fn with_removable_fallback(f: &Fx, t: f64) -> f64 {
    let v = f(t);
    if !v.is_nan() {
        return v;
    }
    let d = 1e-7 * t.abs().max(1e-12);
    0.5 * (f(t - d) + f(t + d))
}

impl ScaleModel {
    pub fn closed_form(eval: Fx, deriv: Option<Fx>, limits: DeclaredLimits) -> Self {
        ScaleModel {
            base: eval,
            base_deriv: deriv,
            kind: ScaleKind::ClosedForm,
            base_breaks: vec![],
            sign: 1.0,
            shift: 0.0,
            vscale: 1.0,
            voffset: 0.0,
            limits,
        }
    }

    /// Piecewise scale from ordered pieces; piece `i` covers `[upto[i-1], upto[i])`.
    pub fn piecewise(pieces: Vec<Piece>, limits: DeclaredLimits) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Config(
                "custom scale needs at least one piece".into(),
            ));
        }
        if pieces.windows(2).any(|w| !(w[0].upto < w[1].upto)) {
            return Err(Error::Config(
                "piece breakpoints must be strictly increasing".into(),
            ));
        }
        let breaks: Vec<f64> = pieces[..pieces.len() - 1].iter().map(|p| p.upto).collect();
        let exprs: Arc<Vec<Expr>> = Arc::new(pieces.iter().map(|p| p.expr.clone()).collect());
        let derivs: Arc<Vec<Expr>> = Arc::new(exprs.iter().map(Expr::derivative).collect());
        let b1 = Arc::new(breaks.clone());
        let b2 = b1.clone();
        let pick = |bk: &[f64], t: f64| bk.iter().position(|&b| t < b).unwrap_or(bk.len());
        let e = exprs.clone();
        let eval: Fx = Arc::new(move |t| e[pick(&b1, t)].eval_guarded(t));
        let e2 = exprs.clone();
        let deriv: Fx = Arc::new(move |t| {
            let i = pick(&b2, t);
            // an ill-conditioned quotient falls back to differencing the guarded values
            if e2[i].conditioning(t) < 1e-4 {
                return f64::NAN;
            }
            derivs[i].eval(t)
        });
        Ok(ScaleModel {
            base: eval,
            base_deriv: Some(deriv),
            kind: ScaleKind::Piecewise,
            base_breaks: breaks,
            sign: 1.0,
            shift: 0.0,
            vscale: 1.0,
            voffset: 0.0,
            limits,
        })
    }

    /// Linear interpolation through strictly increasing `(x, S)` nodes.
    pub fn tabulated(xs: Vec<f64>, ss: Vec<f64>, limits: DeclaredLimits) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ss.len() {
            return Err(Error::Config(
                "tabulated scale needs matching node lists".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) || ss.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "tabulated scale nodes and values must be strictly increasing".into(),
            ));
        }
        let xs = Arc::new(xs);
        let ss = Arc::new(ss);
        let seg = |xs: &[f64], t: f64| -> usize {
            match xs.binary_search_by(|v| v.total_cmp(&t)) {
                Ok(i) => i.min(xs.len() - 2),
                Err(i) => i.clamp(1, xs.len() - 1) - 1,
            }
        };
        let (x1, s1) = (xs.clone(), ss.clone());
        let eval: Fx = Arc::new(move |t| {
            let i = seg(&x1, t);
            s1[i] + (s1[i + 1] - s1[i]) * (t - x1[i]) / (x1[i + 1] - x1[i])
        });
        let (x2, s2) = (xs.clone(), ss.clone());
        let deriv: Fx = Arc::new(move |t| {
            let i = seg(&x2, t);
            (s2[i + 1] - s2[i]) / (x2[i + 1] - x2[i])
        });
        Ok(ScaleModel {
            base: eval,
            base_deriv: Some(deriv),
            kind: ScaleKind::Tabulated,
            base_breaks: xs[1..xs.len() - 1].to_vec(),
            sign: 1.0,
            shift: 0.0,
            vscale: 1.0,
            voffset: 0.0,
            limits,
        })
    }

    pub fn kind(&self) -> ScaleKind {
        self.kind
    }

    pub fn has_exact_derivative(&self) -> bool {
        self.base_deriv.is_some()
    }

    #[inline]
    fn to_base(&self, y: f64) -> f64 {
        self.sign * y + self.shift
    }

    /// `S(y)` at an interior point.
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        self.vscale * with_removable_fallback(&self.base, self.to_base(y)) + self.voffset
    }

    /// Breakpoints in the current coordinates, ascending.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .base_breaks
            .iter()
            .map(|&t| (t - self.shift) / self.sign)
            .collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    fn fd_step(y: f64) -> f64 {
        FD_REL_STEP * y.abs().max(1e-3)
    }

    /// `S'(y)`: exact when available, otherwise a finite difference that turns
    /// one-sided next to breakpoints. At a breakpoint the right derivative is used.
    pub fn deriv(&self, y: f64) -> f64 {
        if let Some(d) = &self.base_deriv {
            let t = self.to_base(y);
            let v = d(t);
            if v.is_finite() {
                return self.vscale * self.sign * v;
            }
        }
        self.fd_deriv(y)
    }

    pub fn fd_deriv(&self, y: f64) -> f64 {
        let h = Self::fd_step(y);
        let bps = self.breakpoints();
        let left_blocked = bps.iter().any(|&b| b > y - h && b <= y);
        let right_blocked = bps.iter().any(|&b| b > y && b < y + h);
        match (left_blocked, right_blocked) {
            (true, false) => (self.eval(y + h) - self.eval(y)) / h,
            (false, true) => (self.eval(y) - self.eval(y - h)) / h,
            _ => (self.eval(y + h) - self.eval(y - h)) / (2.0 * h),
        }
    }

    /// True when `y` is within one finite-difference step of a breakpoint.
    pub fn near_breakpoint(&self, y: f64) -> bool {
        let h = 4.0 * Self::fd_step(y);
        self.breakpoints().iter().any(|&b| (b - y).abs() <= h)
    }

    /// `S(y + a)`.
    pub fn translated(&self, a: f64) -> Self {
        let mut m = self.clone();
        m.shift = self.sign * a + self.shift;
        m
    }

    /// `top_value - S(top - z)`.
    pub fn reflected(&self, top: f64, top_value: f64) -> Self {
        let mut m = self.clone();
        m.sign = -self.sign;
        m.shift = self.sign * top + self.shift;
        m.vscale = -self.vscale;
        m.voffset = top_value - self.voffset;
        let old = self.limits;
        m.limits = DeclaredLimits {
            lower: Some(0.0),
            upper: old.lower.map(|l| top_value - l),
            upper_growth: old.lower_growth,
            lower_growth: old.upper_growth,
        };
        m
    }

    /// `λ S`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let mut m = self.clone();
        m.vscale *= lambda;
        m.voffset *= lambda;
        m.limits = DeclaredLimits {
            lower: self.limits.lower.map(|v| v * lambda),
            upper: self.limits.upper.map(|v| v * lambda),
            upper_growth: self.limits.upper_growth.map(|v| v / lambda),
            lower_growth: self.limits.lower_growth.map(|v| v / lambda),
        };
        m
    }

    /// `S - offset`.
    pub fn shifted_value(&self, offset: f64) -> Self {
        let mut m = self.clone();
        m.voffset -= offset;
        m.limits.lower = self.limits.lower.map(|v| v - offset);
        m.limits.upper = self.limits.upper.map(|v| v - offset);
        m
    }
}
