use filter_audit::regcost::{
    cost_of_regulation, is_feasible, inflation_witness, Coupling, FeasibleQuery, GridSpec,
    RewardSpec,
};
use filter_audit::{AuditConfig, Family, ParamVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn p(v: &[f64]) -> ParamVector {
    ParamVector::new(v.to_vec())
}

fn query(reference: ParamVector, epsilon: f64, m: usize) -> FeasibleQuery {
    let config = AuditConfig::new(Family::Gaussian1D, epsilon, m).unwrap();
    FeasibleQuery::new(reference, config, Coupling::SharedOmega(vec![1])).unwrap()
}

fn grid() -> GridSpec {
    GridSpec::new(vec![
        GridSpec::linspace(-1.0, 1.0, 9),
        vec![0.5, 1.0, 2.0, 4.0],
    ])
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_nonnegative_and_nondecreasing_in_epsilon(
        target in -1.5f64..1.5,
        mu in -1.0f64..1.0,
        s2 in 0.5f64..3.0,
        e1 in 0.001f64..0.999,
        e2 in 0.001f64..0.999,
        m in 5usize..500,
    ) {
        let reward = RewardSpec::mean_only(target, vec![1]);
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let c_lo = cost_of_regulation(&reward, &query(p(&[mu, s2]), lo, m), &grid()).unwrap();
        let c_hi = cost_of_regulation(&reward, &query(p(&[mu, s2]), hi, m), &grid()).unwrap();
        prop_assert!(c_lo.cost >= -1e-9);
        prop_assert!(c_hi.cost >= -1e-9);
        // larger epsilon, smaller threshold, smaller feasible set
        prop_assert!(c_lo.cost <= c_hi.cost + 1e-9);
    }
}

#[test]
fn witness_valid_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let target = rng.random_range(-2.0..2.0);
        let reference = p(&[rng.random_range(-2.0..2.0), rng.random_range(0.2..4.0)]);
        let theta_star = p(&[target, rng.random_range(0.2..4.0)]);
        let epsilon = rng.random_range(0.01..0.5);
        let m = rng.random_range(10..2000);
        let reward = RewardSpec::mean_only(target, vec![1]);
        let q = query(reference, epsilon, m);
        let (kappa, witness) = inflation_witness(&reward, &q, &theta_star).unwrap();
        assert!(kappa >= 0.0);
        assert!(is_feasible(&witness, &q).unwrap(), "kappa {kappa}");
        assert_eq!(reward.eval(&witness).unwrap(), reward.eval(&theta_star).unwrap());
        assert_eq!(witness[0].to_bits(), theta_star[0].to_bits());
    }
}

#[test]
fn tiny_epsilon_grid_is_all_feasible() {
    let reward = RewardSpec::mean_only(0.5, vec![1]);
    let report = cost_of_regulation(&reward, &query(p(&[0.0, 1.0]), 0.0, 100), &grid()).unwrap();
    assert_eq!(report.cost, 0.0);
    assert_eq!(report.feasible_points, report.grid_points);
}
