use std::ffi::{CStr, CString};
use std::ptr;

use varstop_ffi::*;

fn last_error() -> String {
    let p = vs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Handle(*mut VsDiffusion);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { vs_diffusion_free(self.0) }
    }
}

fn gbm(mu: f64, sigma: f64) -> Handle {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { vs_diffusion_gbm(mu, sigma, &mut h) }, VsStatus::Ok);
    Handle(h)
}

fn piecewise() -> Handle {
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { vs_diffusion_piecewise_randomized(&mut h) },
        VsStatus::Ok
    );
    Handle(h)
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(vs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn gbm_solution_is_a_one_sided_exit() {
    // μ = -1, σ = 1: scale x^3, best upper edge b = 4^(1/3) x.
    let h = gbm(-1.0, 1.0);
    let mut case = VsCase::CaseIII;
    assert_eq!(unsafe { vs_classify(h.0, 2.0, &mut case) }, VsStatus::Ok);
    assert_eq!(case, VsCase::CaseI);

    let mut s = std::mem::MaybeUninit::<VsSolution>::uninit();
    assert_eq!(unsafe { vs_solve(h.0, 2.0, s.as_mut_ptr()) }, VsStatus::Ok);
    let s = unsafe { s.assume_init() };
    assert_eq!(s.rule_kind, VsRuleKind::Exit);
    assert_eq!(s.a, 0.0);
    let u = 4f64.cbrt();
    assert!((s.b - 2.0 * u).abs() < 1e-9, "b = {}", s.b);
    let want = 4.0 * (1.0 / u - 1.0 / u.powi(4));
    assert!((s.value - want).abs() < 1e-8 * want, "V = {}", s.value);
    assert!(s.p.is_nan() && s.a2.is_nan());
    assert!(s.duality_gap < 1e-6 * s.value);
}

#[test]
fn hit_probabilities_and_variance_agree() {
    let h = gbm(-1.0, 1.0);
    let (mut pl, mut pu, mut v) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(
            vs_hit_prob(h.0, 1.0, 0.5, 2.0, &mut pl, &mut pu),
            VsStatus::Ok
        );
        assert_eq!(vs_exit_variance(h.0, 1.0, 0.5, 2.0, &mut v), VsStatus::Ok);
    }
    let want_up = (1.0 - 0.125) / (8.0 - 0.125);
    assert!((pu - want_up).abs() < 1e-12);
    assert!((pl + pu - 1.0).abs() < 1e-12);
    assert!((v - 2.25 * pu * pl).abs() < 1e-12);
}

#[test]
fn piecewise_solution_randomizes() {
    let h = piecewise();
    let mut s = std::mem::MaybeUninit::<VsSolution>::uninit();
    assert_eq!(unsafe { vs_solve(h.0, 1.0, s.as_mut_ptr()) }, VsStatus::Ok);
    let s = unsafe { s.assume_init() };
    assert_eq!(s.rule_kind, VsRuleKind::Mix);
    assert!((s.value - 1.0625).abs() < 1e-8, "V = {}", s.value);
    assert!(s.p > 0.0 && s.p < 1.0);
    assert!((s.c_star - 0.75).abs() < 1e-6);
    assert_eq!((s.z_lo, s.z_hi), (2.0, 12.0));

    let (mut c, mut v) = (0.0, 0.0);
    assert_eq!(unsafe { vs_game(h.0, 1.0, &mut c, &mut v) }, VsStatus::Ok);
    assert!((v - s.value).abs() < 1e-6 * s.value);
}

#[test]
fn value_profile_fills_every_point() {
    let h = piecewise();
    let xs = [0.5, 1.0, 1.5];
    let mut out = [0.0; 3];
    assert_eq!(
        unsafe { vs_value_profile(h.0, xs.as_ptr(), xs.len(), out.as_mut_ptr()) },
        VsStatus::Ok
    );
    for (x, v) in xs.iter().zip(out) {
        let mut s = std::mem::MaybeUninit::<VsSolution>::uninit();
        assert_eq!(unsafe { vs_solve(h.0, *x, s.as_mut_ptr()) }, VsStatus::Ok);
        assert_eq!(v, unsafe { s.assume_init() }.value);
    }
}

#[test]
fn toml_constructor_and_config_errors() {
    let good = CString::new("[diffusion]\nkind = \"gbm\"\nmu = -1.0\nsigma = 1.0\n").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { vs_diffusion_from_toml(good.as_ptr(), &mut h) },
        VsStatus::Ok
    );
    let h = Handle(h);
    let mut v = 0.0;
    assert_eq!(
        unsafe { vs_exit_variance(h.0, 1.0, 0.0, 1.5, &mut v) },
        VsStatus::Ok
    );
    let p = 1.0 / 1.5f64.powi(3);
    assert!((v - 2.25 * p * (1.0 - p)).abs() < 1e-12, "v = {v}");

    let bad = CString::new("[diffusion]\nkind = \"gbm\"\nmu = -1.0\nbogus = 1\n").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { vs_diffusion_from_toml(bad.as_ptr(), &mut h) },
        VsStatus::Config
    );
    assert!(h.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn errors_set_status_and_message() {
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { vs_diffusion_gbm(-1.0, 0.0, &mut h) },
        VsStatus::Domain
    );
    assert!(h.is_null());
    assert!(!last_error().is_empty());

    let mut case = VsCase::CaseI;
    assert_eq!(
        unsafe { vs_classify(ptr::null(), 1.0, &mut case) },
        VsStatus::NullPointer
    );
    assert!(last_error().contains("null"));

    let g = gbm(-1.0, 1.0);
    assert_eq!(
        unsafe { vs_classify(g.0, -1.0, &mut case) },
        VsStatus::Domain
    );
    assert_eq!(
        unsafe { vs_classify(g.0, 1.0, ptr::null_mut()) },
        VsStatus::NullPointer
    );

    // A successful call clears the previous message.
    assert_eq!(unsafe { vs_classify(g.0, 1.0, &mut case) }, VsStatus::Ok);
    assert!(vs_last_error().is_null());
}

#[test]
fn game_refuses_outside_its_case() {
    // μ = 0.5, σ = 1 has zero scale exponent: the variance is unbounded.
    let h = gbm(0.5, 1.0);
    let (mut c, mut v) = (0.0, 0.0);
    let st = unsafe { vs_game(h.0, 1.0, &mut c, &mut v) };
    assert_ne!(st, VsStatus::Ok);
    assert!(!last_error().is_empty());
}

#[test]
fn free_accepts_null() {
    unsafe { vs_diffusion_free(ptr::null_mut()) };
}

#[test]
fn header_declares_every_entry_point() {
    let h =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/varstop.h")).unwrap();
    for f in [
        "vs_version",
        "vs_last_error",
        "vs_diffusion_gbm",
        "vs_diffusion_jacobi",
        "vs_diffusion_piecewise_randomized",
        "vs_diffusion_from_toml",
        "vs_diffusion_free",
        "vs_classify",
        "vs_hit_prob",
        "vs_exit_variance",
        "vs_solve",
        "vs_value_profile",
        "vs_game",
        "typedef struct VsDiffusion VsDiffusion",
    ] {
        assert!(h.contains(f), "{f} missing from header");
    }
}
