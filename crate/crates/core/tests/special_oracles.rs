//! Chi-squared quantile against an independent numeric-integration oracle.

use filter_audit::special::{chi2_cdf, chi2_quantile};
use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;

/// CDF by adaptive Simpson on the density after substituting `x = t^2`,
/// which removes the `r = 1` singularity at the origin.
fn integrated_cdf(r: u32, x: f64) -> f64 {
    let k = f64::from(r) / 2.0;
    let log_norm = k * std::f64::consts::LN_2 + ln_gamma(k);
    let f = |t: f64| -> f64 {
        if t == 0.0 {
            return if r == 1 { 2.0 * (-log_norm).exp() } else { 0.0 };
        }
        2.0 * ((2.0 * k - 1.0) * t.ln() - t * t / 2.0 - log_norm).exp()
    };
    adaptive_simpson(&f, 0.0, x.sqrt(), 1e-13, 50)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, depth)
}

fn oracle_quantile(r: u32, q: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while integrated_cdf(r, hi) < q {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if integrated_cdf(r, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn quantile_matches_integration_oracle_on_grid() {
    for r in [1, 2, 3, 5, 10] {
        for q in [0.05, 0.5, 0.9, 0.95] {
            let got = chi2_quantile(r, q).unwrap();
            let want = oracle_quantile(r, q);
            assert!((got - want).abs() <= 1e-6, "r={r} q={q}: {got} vs {want}");
        }
    }
}

#[test]
fn oracle_agrees_with_closed_form_for_two_dof() {
    for x in [0.1, 1.0, 5.0, 12.0] {
        let exact = 1.0 - (-x / 2.0_f64).exp();
        assert!((integrated_cdf(2, x) - exact).abs() < 1e-11);
        assert!((chi2_cdf(2, x) - exact).abs() < 1e-14);
    }
}

#[test]
fn quantile_strictly_increasing_on_grid() {
    let qs: Vec<f64> = (1..=50).map(|i| i as f64 / 51.0).collect();
    for r in 1..=6 {
        let xs: Vec<f64> = qs.iter().map(|&q| chi2_quantile(r, q).unwrap()).collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]), "r={r}");
    }
    for &q in &qs {
        let xs: Vec<f64> = (1..=50).map(|r| chi2_quantile(r, q).unwrap()).collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]), "q={q}");
    }
}

proptest! {
    #[test]
    fn quantile_monotone_in_q(r in 1u32..40, a in 0.0001f64..0.9999, b in 0.0001f64..0.9999) {
        prop_assume!((a - b).abs() > 1e-9);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(chi2_quantile(r, lo).unwrap() < chi2_quantile(r, hi).unwrap());
    }

    #[test]
    fn quantile_inverts_cdf(r in 1u32..60, q in 0.0001f64..0.9999) {
        let x = chi2_quantile(r, q).unwrap();
        prop_assert!((chi2_cdf(r, x) - q).abs() < 1e-10);
    }
}
