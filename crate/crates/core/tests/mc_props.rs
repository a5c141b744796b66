use filter_audit::mc::{
    run_experiment, summarize_text, Experiment, ExperimentPlan, InfoKind, RejectionParams,
};
use filter_audit::rng::derive_seed;
use filter_audit::{Estimator, Family, ParamVector};

fn fpr_plan(trials: usize, seed: u64) -> ExperimentPlan {
    ExperimentPlan {
        experiment: Experiment::FprCalibration(RejectionParams {
            family: Family::Gaussian1D,
            theta: ParamVector::new(vec![0.0, 1.0]),
            theta_prime: ParamVector::new(vec![0.0, 1.0]),
            epsilons: vec![0.05],
            ms: vec![200],
            trials,
            info: InfoKind::Oracle,
            estimator: Estimator::Mvue,
        }),
        master_seed: seed,
    }
}

#[test]
fn identical_plans_give_identical_points() {
    let a = run_experiment(&fpr_plan(2000, 5)).unwrap();
    let b = run_experiment(&fpr_plan(2000, 5)).unwrap();
    assert_eq!(a, b);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let c = single.install(|| run_experiment(&fpr_plan(2000, 5)).unwrap());
    let d = wide.install(|| run_experiment(&fpr_plan(2000, 5)).unwrap());
    assert_eq!(a, c);
    assert_eq!(a, d);
}

#[test]
fn halves_with_derived_seeds_agree() {
    let a = &run_experiment(&fpr_plan(5000, derive_seed(7, 0))).unwrap()[0];
    let b = &run_experiment(&fpr_plan(5000, derive_seed(7, 1))).unwrap()[0];
    assert!(
        (a.estimate - b.estimate).abs() <= a.half_width + b.half_width,
        "{} vs {}",
        a.estimate,
        b.estimate
    );
}

#[test]
fn proportion_half_width() {
    let pt = &run_experiment(&fpr_plan(1000, 3)).unwrap()[0];
    let p = pt.estimate;
    let expected = (2.576 * (p * (1.0 - p) / 1000.0).sqrt()).max(1e-3);
    assert!((pt.half_width - expected).abs() < 1e-15);
    let s = summarize_text(std::slice::from_ref(pt), "estimate <= target + half_width + 0.05").unwrap();
    assert!(s.passed);
}
