use std::ffi::CStr;
use std::ptr;

use proxyprobe_ffi::*;

fn last_error() -> String {
    let p = pp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Two well-separated 2-d clusters, normals first.
fn clusters(n: usize) -> (Vec<f64>, Vec<u32>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let t = i as f64 / n as f64;
        x.extend_from_slice(&[t, 1.0 - t]);
        y.push(0);
    }
    for i in 0..n {
        let t = i as f64 / n as f64;
        x.extend_from_slice(&[4.0 + t, 3.0 + t * t]);
        y.push(1);
    }
    (x, y)
}

#[test]
fn lp_handle_roundtrip() {
    let (x, y) = clusters(20);
    let mut model: *mut PpLpModel = ptr::null_mut();
    let st = unsafe { pp_lp_fit(x.as_ptr(), 40, 2, y.as_ptr(), ptr::null(), &mut model) };
    assert_eq!(st, PpStatus::Ok);
    assert!(!model.is_null());
    assert_eq!(unsafe { pp_lp_dims(model) }, 2);
    let mut scores = vec![f64::NAN; 40];
    let st = unsafe { pp_lp_score(model, x.as_ptr(), 40, 2, scores.as_mut_ptr()) };
    assert_eq!(st, PpStatus::Ok);
    assert!(scores[..20].iter().all(|&s| s < 0.5));
    assert!(scores[20..].iter().all(|&s| s > 0.5));
    let mut auc = 0.0;
    assert_eq!(unsafe { pp_auc(scores.as_ptr(), 20, scores[20..].as_ptr(), 20, &mut auc) }, PpStatus::Ok);
    assert_eq!(auc, 1.0);
    unsafe { pp_lp_free(model) };
}

#[test]
fn lp_matches_core() {
    use proxyprobe::scoring::{fit_lp, score_lp, LpHyper};
    use proxyprobe::Matrix;
    let (x, y) = clusters(10);
    let hyper = PpLpHyper {
        epochs: 50,
        ..pp_lp_default_hyper()
    };
    let mut model: *mut PpLpModel = ptr::null_mut();
    assert_eq!(unsafe { pp_lp_fit(x.as_ptr(), 20, 2, y.as_ptr(), &hyper, &mut model) }, PpStatus::Ok);
    let mut scores = vec![0.0; 20];
    assert_eq!(unsafe { pp_lp_score(model, x.as_ptr(), 20, 2, scores.as_mut_ptr()) }, PpStatus::Ok);
    unsafe { pp_lp_free(model) };

    let m = Matrix::from_vec(20, 2, x).unwrap();
    let labels: Vec<usize> = y.iter().map(|&l| l as usize).collect();
    let core = fit_lp(
        &m,
        &labels,
        &LpHyper {
            epochs: 50,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(score_lp(&core, &m).unwrap().scores, scores);
}

#[test]
fn md_scores_and_epsilon() {
    let (x, _) = clusters(20);
    let normals = &x[..40];
    let mut model: *mut PpMdModel = ptr::null_mut();
    assert_eq!(unsafe { pp_md_fit(normals.as_ptr(), 20, 2, 0.5, &mut model) }, PpStatus::Ok);
    assert_eq!(unsafe { pp_md_epsilon(model) }, 0.5);
    assert_eq!(unsafe { pp_md_dims(model) }, 2);
    let mut s = vec![0.0; 40];
    assert_eq!(unsafe { pp_md_score(model, x.as_ptr(), 40, 2, s.as_mut_ptr()) }, PpStatus::Ok);
    let max_normal = s[..20].iter().cloned().fold(f64::MIN, f64::max);
    let min_anom = s[20..].iter().cloned().fold(f64::MAX, f64::min);
    assert!(min_anom > max_normal);
    unsafe { pp_md_free(model) };

    // automatic regularization is positive
    let mut auto: *mut PpMdModel = ptr::null_mut();
    assert_eq!(unsafe { pp_md_fit(normals.as_ptr(), 20, 2, -1.0, &mut auto) }, PpStatus::Ok);
    assert!(unsafe { pp_md_epsilon(auto) } > 0.0);
    unsafe { pp_md_free(auto) };
}

#[test]
fn dimension_mismatch_is_reported() {
    let (x, _) = clusters(5);
    let mut model: *mut PpMdModel = ptr::null_mut();
    assert_eq!(unsafe { pp_md_fit(x.as_ptr(), 10, 2, -1.0, &mut model) }, PpStatus::Ok);
    let mut s = vec![0.0; 5];
    let st = unsafe { pp_md_score(model, x.as_ptr(), 5, 4, s.as_mut_ptr()) };
    assert_eq!(st, PpStatus::DimensionMismatch);
    assert!(last_error().contains("dimension"));
    unsafe { pp_md_free(model) };
}

#[test]
fn null_pointers_are_rejected() {
    let mut out = 0.0;
    let st = unsafe { pp_auc(ptr::null(), 3, [1.0].as_ptr(), 1, &mut out) };
    assert_eq!(st, PpStatus::NullPointer);
    assert!(last_error().contains("scores_normal"));
    let st = unsafe { pp_auc([0.0].as_ptr(), 1, [1.0].as_ptr(), 1, ptr::null_mut()) };
    assert_eq!(st, PpStatus::NullPointer);
    let st = unsafe { pp_md_fit([0.0; 4].as_ptr(), 2, 2, -1.0, ptr::null_mut()) };
    assert_eq!(st, PpStatus::NullPointer);
    let mut s = [0.0];
    let st = unsafe { pp_lp_score(ptr::null(), [0.0].as_ptr(), 1, 1, s.as_mut_ptr()) };
    assert_eq!(st, PpStatus::NullPointer);
    unsafe {
        pp_lp_free(ptr::null_mut());
        pp_md_free(ptr::null_mut());
    }
    assert_eq!(unsafe { pp_lp_dims(ptr::null()) }, 0);
    assert!(unsafe { pp_md_epsilon(ptr::null()) }.is_nan());
}

#[test]
fn out_pointer_untouched_on_failure() {
    let mut out = -7.0;
    let st = unsafe { pp_auc([0.0].as_ptr(), 1, ptr::null(), 0, &mut out) };
    assert_ne!(st, PpStatus::Ok);
    assert_eq!(out, -7.0);
}

#[test]
fn auc_with_ties() {
    let mut out = 0.0;
    let n = [0.1, 0.4, 0.4];
    let a = [0.4, 0.9];
    assert_eq!(unsafe { pp_auc(n.as_ptr(), 3, a.as_ptr(), 2, &mut out) }, PpStatus::Ok);
    // pairs: (0.1<0.4)1 (0.4=0.4)½ ×2, and 3 wins against 0.9 → 5/6
    assert!((out - 5.0 / 6.0).abs() < 1e-15);
}

#[test]
fn spearman_exact_and_errors() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let y = [1.0, 3.0, 2.0, 4.0];
    let mut c = PpCorrelation {
        rho: 0.0,
        p_value: 0.0,
        method: PpPValueMethod::MonteCarlo,
        ties_present: 9,
    };
    assert_eq!(unsafe { pp_spearman(x.as_ptr(), y.as_ptr(), 4, 10, 1000, 0, &mut c) }, PpStatus::Ok);
    assert!((c.rho - 0.8).abs() < 1e-12);
    // ρ = 1 once, ρ = 0.8 for the three adjacent swaps, and mirrored: 8 of 24
    let count = count_extreme(0.8);
    assert_eq!(count, 8);
    assert!((c.p_value - count as f64 / 24.0).abs() < 1e-12);
    assert_eq!(c.method, PpPValueMethod::Exact);
    assert_eq!(c.ties_present, 0);

    let st = unsafe { pp_spearman(x.as_ptr(), [2.0; 4].as_ptr(), 4, 10, 1000, 0, &mut c) };
    assert_eq!(st, PpStatus::Correlation);
    let st = unsafe { pp_spearman(x.as_ptr(), y.as_ptr(), 4, 13, 1000, 0, &mut c) };
    assert_eq!(st, PpStatus::InvalidArgument);
    let st = unsafe { pp_spearman(x.as_ptr(), y.as_ptr(), 4, 2, 0, 0, &mut c) };
    assert_eq!(st, PpStatus::InvalidArgument);
}

/// Brute-force count of orderings of `1..=4` whose |ρ| against the identity
/// reaches `thr`, via the no-ties formula 1 − 6Σd²/(n(n²−1)).
fn count_extreme(thr: f64) -> usize {
    let mut hits = 0;
    let mut perm = [1, 2, 3, 4];
    let mut all = Vec::new();
    permute(&mut perm, 0, &mut all);
    for p in all {
        let d2: i32 = p.iter().enumerate().map(|(i, &r)| (i as i32 + 1 - r).pow(2)).sum();
        let rho = 1.0 - 6.0 * d2 as f64 / 60.0;
        if rho.abs() >= thr - 1e-12 {
            hits += 1;
        }
    }
    hits
}

fn permute(a: &mut [i32; 4], k: usize, out: &mut Vec<[i32; 4]>) {
    if k == a.len() {
        out.push(*a);
        return;
    }
    for i in k..a.len() {
        a.swap(k, i);
        permute(a, k + 1, out);
        a.swap(k, i);
    }
}

#[test]
fn monte_carlo_is_seeded() {
    let x: Vec<f64> = (0..14).map(|i| i as f64).collect();
    let y: Vec<f64> = (0..14).map(|i| ((i * 5) % 14) as f64).collect();
    let run = |seed| {
        let mut c = PpCorrelation {
            rho: 0.0,
            p_value: 0.0,
            method: PpPValueMethod::Exact,
            ties_present: 0,
        };
        assert_eq!(unsafe { pp_spearman(x.as_ptr(), y.as_ptr(), 14, 10, 20_000, seed, &mut c) }, PpStatus::Ok);
        c
    };
    let a = run(3);
    assert_eq!(a.method, PpPValueMethod::MonteCarlo);
    assert_eq!(a, run(3));
}

#[test]
fn si_sdr_values() {
    let t: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
    let e: Vec<f64> = t.iter().map(|v| 2.0 * v).collect();
    let mut out = 0.0;
    assert_eq!(unsafe { pp_si_sdr(t.as_ptr(), e.as_ptr(), 64, &mut out) }, PpStatus::Ok);
    assert!(out > 100.0, "scaled copy should be near-perfect, got {out}");

    let noise: Vec<f64> = (0..64).map(|i| (i as f64 * 1.7).cos()).collect();
    let est: Vec<f64> = t.iter().zip(&noise).map(|(a, b)| a + 0.1 * b).collect();
    let mix: Vec<f64> = t.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let mut imp = 0.0;
    let st = unsafe { pp_si_sdr_improvement(t.as_ptr(), est.as_ptr(), mix.as_ptr(), 64, &mut imp) };
    assert_eq!(st, PpStatus::Ok);
    assert!(imp > 10.0);
}

#[test]
fn status_names_and_version() {
    let name = |c: i32| unsafe { CStr::from_ptr(pp_status_name(c)) }.to_str().unwrap().to_string();
    assert_eq!(name(PpStatus::Ok as i32), "ok");
    assert_eq!(name(PpStatus::Panic as i32), "panic");
    assert_eq!(name(-1), "unknown");
    let v = unsafe { CStr::from_ptr(pp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn errors_are_thread_local() {
    pp_clear_error();
    assert!(pp_last_error().is_null());
    std::thread::spawn(|| {
        let mut out = 0.0;
        unsafe { pp_auc(ptr::null(), 1, ptr::null(), 1, &mut out) };
        assert!(!pp_last_error().is_null());
    })
    .join()
    .unwrap();
    assert!(pp_last_error().is_null());
}
