use filter_audit::audit::{audit_statistic, evaluate_estimates};
use filter_audit::platform::{Inflation, PlatformSpec};
use filter_audit::{
    audit_batch, make_platform, AuditConfig, CounterfactualPair, Family, FeedOracle, InfoPoint,
    ParamVector,
};
use proptest::prelude::*;

fn p(v: &[f64]) -> ParamVector {
    ParamVector::new(v.to_vec())
}

fn gaussian_param() -> impl Strategy<Value = ParamVector> {
    (-3.0f64..3.0, 0.1f64..5.0).prop_map(|(mu, s2)| p(&[mu, s2]))
}

proptest! {
    #[test]
    fn verdict_monotone_in_epsilon(
        a in gaussian_param(),
        b in gaussian_param(),
        e1 in 0.0f64..=1.0,
        e2 in 0.0f64..=1.0,
        m in 2usize..5000,
    ) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let c_lo = AuditConfig::new(Family::Gaussian1D, lo, m).unwrap();
        let c_hi = AuditConfig::new(Family::Gaussian1D, hi, m).unwrap();
        let v_lo = evaluate_estimates(&c_lo, "p", &a, &b).unwrap();
        let v_hi = evaluate_estimates(&c_hi, "p", &a, &b).unwrap();
        prop_assert!(!v_lo.is_h1() || v_hi.is_h1());
        prop_assert!(v_lo.statistic >= 0.0);
        prop_assert_eq!(v_lo.is_h1(), v_lo.statistic >= v_lo.threshold);
    }

    #[test]
    fn midpoint_statistic_is_symmetric(a in gaussian_param(), b in gaussian_param()) {
        let config = AuditConfig::new(Family::Gaussian1D, 0.05, 100)
            .unwrap()
            .with_info_point(InfoPoint::AtMidpoint)
            .unwrap();
        let (s_ab, _, _) = audit_statistic(&config, &a, &b).unwrap();
        let (s_ba, _, _) = audit_statistic(&config, &b, &a).unwrap();
        prop_assert!((s_ab - s_ba).abs() <= 1e-12 * s_ab.max(1.0));
    }

    #[test]
    fn inflation_preserves_other_coordinates(theta in gaussian_param(), kappa in 0.0f64..100.0) {
        let inf = Inflation { kappa, coords: vec![1], tokens: None };
        let out = inf.apply(&theta);
        prop_assert_eq!(out[0].to_bits(), theta[0].to_bits());
        prop_assert_eq!(out[1], theta[1] + kappa);
    }
}

#[test]
fn platform_feeds_follow_the_mapping() {
    let platform = make_platform(PlatformSpec::lookup(
        Family::Poisson,
        [("low", p(&[2.0])), ("high", p(&[7.0]))],
    ))
    .unwrap();
    for (token, lambda) in [("low", 2.0), ("high", 7.0)] {
        let feed = platform.feed(token, 100_000, 5).unwrap();
        let est = Family::Poisson.mvue(&feed).unwrap()[0];
        let se = (lambda / 1e5_f64).sqrt();
        assert!((est - lambda).abs() < 4.0 * se, "{token}: {est}");
    }
}

#[test]
fn batch_is_reproducible_and_counts_h1() {
    let platform = make_platform(PlatformSpec::lookup(
        Family::Gaussian1D,
        [("a", p(&[0.0, 1.0])), ("b", p(&[0.0, 1.0])), ("c", p(&[2.0, 1.0]))],
    ))
    .unwrap();
    let pairs = vec![
        CounterfactualPair::new("a", "b", "same"),
        CounterfactualPair::new("a", "c", "shifted"),
    ];
    let config = AuditConfig::new(Family::Gaussian1D, 0.05, 200).unwrap();
    let first = audit_batch(&config, &platform, &pairs, 0.5, 9).unwrap();
    let second = audit_batch(&config, &platform, &pairs, 0.5, 9).unwrap();
    assert_eq!(first, second);
    assert!(first.per_pair[1].is_h1());
    assert_eq!(
        first.h1_count,
        first.per_pair.iter().filter(|v| v.is_h1()).count()
    );
}
