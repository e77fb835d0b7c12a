//! C ABI for the varstop solver.
//!
//! Every function returns a [`VsStatus`]. On failure a message is kept per
//! thread and can be read with [`vs_last_error`]. Handles are opaque and must
//! be released with [`vs_diffusion_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use varstop::config::RunConfig;
use varstop::diffusion::{self, CaseTag, DiffusionSpec};
use varstop::rule::StoppingRule;
use varstop::{game, solver, Error};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Domain = 4,
    LimitUndetermined = 5,
    Unsupported = 6,
    Numerical = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsCase {
    InfiniteValue = 0,
    RecurrentBounded = 1,
    CaseI = 2,
    CaseII = 3,
    CaseIII = 4,
    SpecialTransientI = 5,
    SpecialTransientII = 6,
    UnsupportedMarginal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsRuleKind {
    Immediate = 0,
    Exit = 1,
    Mix = 2,
    WholeInterval = 3,
    EpsilonFamily = 4,
}

/// Flattened solution. Fields that do not apply are NaN.
///
/// For `Mix`, the rule exits `(a, b)` with probability `p` and
/// `(a2, b2)` otherwise. `mean_check` is 1 (pass), 0 (fail) or -1 (exempt).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VsSolution {
    pub x: f64,
    pub value: f64,
    pub case_tag: VsCase,
    pub rule_kind: VsRuleKind,
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub a2: f64,
    pub b2: f64,
    pub c_star: f64,
    pub z_lo: f64,
    pub z_hi: f64,
    pub duality_gap: f64,
    pub mean_check: i32,
}

/// Opaque diffusion handle.
pub struct VsDiffusion {
    spec: DiffusionSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> VsStatus {
    match e {
        Error::Config(_) => VsStatus::Config,
        Error::Domain(_) | Error::NonMonotoneScale { .. } | Error::OutOfRegion { .. } => {
            VsStatus::Domain
        }
        Error::LimitUndetermined(_) => VsStatus::LimitUndetermined,
        Error::UnsupportedMarginal { .. }
        | Error::AssumptionViolated(_)
        | Error::UnsupportedRule(_) => VsStatus::Unsupported,
        _ => VsStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (VsStatus, String)>) -> VsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VsStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            VsStatus::Panic
        }
    }
}

fn lib<T>(r: varstop::Result<T>) -> Result<T, (VsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (VsStatus, String) {
    (VsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn handle<'a>(d: *const VsDiffusion) -> Result<&'a VsDiffusion, (VsStatus, String)> {
    d.as_ref().ok_or_else(|| null("diffusion handle"))
}

unsafe fn emit(out: *mut *mut VsDiffusion, spec: DiffusionSpec) -> Result<(), (VsStatus, String)> {
    *out = Box::into_raw(Box::new(VsDiffusion { spec }));
    Ok(())
}

fn case_of(tag: CaseTag) -> VsCase {
    match tag {
        CaseTag::InfiniteValue => VsCase::InfiniteValue,
        CaseTag::RecurrentBounded => VsCase::RecurrentBounded,
        CaseTag::CaseI => VsCase::CaseI,
        CaseTag::CaseII => VsCase::CaseII,
        CaseTag::CaseIII => VsCase::CaseIII,
        CaseTag::SpecialTransientI => VsCase::SpecialTransientI,
        CaseTag::SpecialTransientII => VsCase::SpecialTransientII,
        CaseTag::UnsupportedMarginal => VsCase::UnsupportedMarginal,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn vs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Geometric Brownian motion `dX = μX dt + σX dW`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn vs_diffusion_gbm(
    mu: f64,
    sigma: f64,
    out: *mut *mut VsDiffusion,
) -> VsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        emit(out, lib(diffusion::gbm(mu, sigma))?)
    })
}

/// Jacobi diffusion `dX = (a - bX) dt + σ√(X(1-X)) dW` on `(0, 1)`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn vs_diffusion_jacobi(
    a: f64,
    b: f64,
    sigma: f64,
    out: *mut *mut VsDiffusion,
) -> VsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        emit(out, lib(diffusion::jacobi(a, b, sigma))?)
    })
}

/// The built-in piecewise scale whose optimum needs randomization.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn vs_diffusion_piecewise_randomized(out: *mut *mut VsDiffusion) -> VsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        emit(out, lib(diffusion::randomized_piecewise())?)
    })
}

/// Build a diffusion from the `[diffusion]` block of a TOML document.
///
/// # Safety
/// `toml` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vs_diffusion_from_toml(
    toml: *const c_char,
    out: *mut *mut VsDiffusion,
) -> VsStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(toml).to_str().map_err(|_| {
            (
                VsStatus::InvalidArgument,
                "toml is not valid UTF-8".to_string(),
            )
        })?;
        let cfg = lib(RunConfig::parse(text))?;
        emit(out, lib(cfg.build_spec())?)
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `d` must come from a `vs_diffusion_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vs_diffusion_free(d: *mut VsDiffusion) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `d` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vs_classify(d: *const VsDiffusion, x: f64, out: *mut VsCase) -> VsStatus {
    guard(|| {
        let d = handle(d)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = case_of(lib(d.spec.classify(x))?.tag);
        Ok(())
    })
}

/// Probabilities of leaving `(a, b)` through `a` and through `b`.
///
/// # Safety
/// `d` must be a live handle; `p_lower` and `p_upper` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vs_hit_prob(
    d: *const VsDiffusion,
    x: f64,
    a: f64,
    b: f64,
    p_lower: *mut f64,
    p_upper: *mut f64,
) -> VsStatus {
    guard(|| {
        let d = handle(d)?;
        let pl = p_lower.as_mut().ok_or_else(|| null("p_lower"))?;
        let pu = p_upper.as_mut().ok_or_else(|| null("p_upper"))?;
        (*pl, *pu) = lib(d.spec.hit_prob(x, a, b))?;
        Ok(())
    })
}

/// Variance of the exit position of `(a, b)` started at `x`.
///
/// # Safety
/// `d` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vs_exit_variance(
    d: *const VsDiffusion,
    x: f64,
    a: f64,
    b: f64,
    out: *mut f64,
) -> VsStatus {
    guard(|| {
        let d = handle(d)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lib(d.spec.exit_variance(x, a, b))?;
        Ok(())
    })
}

fn flatten(sol: &solver::VarianceSolution, alpha: f64, beta: f64) -> VsSolution {
    let nan = f64::NAN;
    let mut s = VsSolution {
        x: sol.x,
        value: sol.value,
        case_tag: case_of(sol.classification.tag),
        rule_kind: VsRuleKind::Immediate,
        a: nan,
        b: nan,
        p: nan,
        a2: nan,
        b2: nan,
        c_star: sol.c_star.unwrap_or(nan),
        z_lo: sol.region.as_ref().map_or(nan, |r| r.z_lo),
        z_hi: sol.region.as_ref().map_or(nan, |r| r.z_hi),
        duality_gap: sol.diagnostics.duality_gap.unwrap_or(nan),
        mean_check: match sol.diagnostics.mean_check {
            Some(true) => 1,
            Some(false) => 0,
            None => -1,
        },
    };
    let edges = |r: &StoppingRule| match r {
        StoppingRule::ExitInterval { lower, upper } => (*lower, *upper),
        _ => (nan, nan),
    };
    match &sol.rule {
        StoppingRule::Immediate => {}
        r @ StoppingRule::ExitInterval { .. } => {
            s.rule_kind = VsRuleKind::Exit;
            (s.a, s.b) = edges(r);
        }
        StoppingRule::BernoulliMix { p, first, second } => {
            s.rule_kind = VsRuleKind::Mix;
            s.p = *p;
            (s.a, s.b) = edges(first);
            (s.a2, s.b2) = edges(second);
        }
        StoppingRule::WholeInterval => {
            s.rule_kind = VsRuleKind::WholeInterval;
            (s.a, s.b) = (alpha, beta);
        }
        StoppingRule::EpsilonFamily(_) => {
            s.rule_kind = VsRuleKind::EpsilonFamily;
            (s.a, s.b) = (alpha, beta);
        }
    }
    s
}

/// Solve the variance problem at `x`. The duality gap is filled when the
/// game route applies.
///
/// # Safety
/// `d` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vs_solve(d: *const VsDiffusion, x: f64, out: *mut VsSolution) -> VsStatus {
    guard(|| {
        let d = handle(d)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let mut sol = lib(solver::solve(&d.spec, x))?;
        game::certify(&d.spec, &mut sol);
        *out = flatten(&sol, d.spec.alpha(), d.spec.beta());
        Ok(())
    })
}

/// Solve at `n` points. Failed points get NaN values; the first failure is
/// reported through the status and `vs_last_error`.
///
/// # Safety
/// `d` must be a live handle, `xs` readable and `out` writable for `n` items.
#[no_mangle]
pub unsafe extern "C" fn vs_value_profile(
    d: *const VsDiffusion,
    xs: *const f64,
    n: usize,
    out: *mut f64,
) -> VsStatus {
    guard(|| {
        let d = handle(d)?;
        if n == 0 {
            return Ok(());
        }
        if xs.is_null() {
            return Err(null("xs"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let xs = std::slice::from_raw_parts(xs, n);
        let out = std::slice::from_raw_parts_mut(out, n);
        let mut first = None;
        for (o, r) in out.iter_mut().zip(solver::value_profile(&d.spec, xs)) {
            match r {
                Ok(s) => *o = s.value,
                Err(e) => {
                    *o = f64::NAN;
                    first.get_or_insert((status_of(&e), e.to_string()));
                }
            }
        }
        first.map_or(Ok(()), Err)
    })
}

/// Dual game value and optimal center at `x`.
///
/// # Safety
/// `d` must be a live handle; `c_star` and `value` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vs_game(
    d: *const VsDiffusion,
    x: f64,
    c_star: *mut f64,
    value: *mut f64,
) -> VsStatus {
    guard(|| {
        let d = handle(d)?;
        let c = c_star.as_mut().ok_or_else(|| null("c_star"))?;
        let v = value.as_mut().ok_or_else(|| null("value"))?;
        (*c, *v) = lib(game::dual_value(&d.spec, x))?;
        Ok(())
    })
}
