//! Sampling, Fisher information and estimator efficiency against independent checks.

use filter_audit::decision::{form_belief, EstimatorSpec};
use filter_audit::rng::derive_seed;
use filter_audit::{Family, ParamVector};

fn p(v: &[f64]) -> ParamVector {
    ParamVector::new(v.to_vec())
}

fn instances() -> Vec<(Family, Vec<ParamVector>)> {
    vec![
        (Family::Gaussian1D, vec![p(&[0.0, 1.0]), p(&[1.5, 0.5]), p(&[-2.0, 4.0])]),
        (
            Family::gaussian_known_var(2.0).unwrap(),
            vec![p(&[0.0]), p(&[1.0]), p(&[-3.0])],
        ),
        (Family::Bernoulli, vec![p(&[0.2]), p(&[0.5]), p(&[0.9])]),
        (Family::Poisson, vec![p(&[0.5]), p(&[3.0]), p(&[12.0])]),
    ]
}

/// Score vector by central differences of the log-density.
fn score(family: &Family, theta: &ParamVector, z: f64) -> Vec<f64> {
    (0..family.dim())
        .map(|j| {
            let h = 1e-5 * theta[j].abs().max(1e-2);
            let mut up = theta.values().to_vec();
            let mut down = up.clone();
            up[j] += h;
            down[j] -= h;
            let lu = family.log_density(&p(&up), &[z]).unwrap();
            let ld = family.log_density(&p(&down), &[z]).unwrap();
            (lu - ld) / (2.0 * h)
        })
        .collect()
}

#[test]
fn fisher_matches_score_product_monte_carlo() {
    const N: usize = 1_000_000;
    for (k, (family, thetas)) in instances().into_iter().enumerate() {
        for (i, theta) in thetas.iter().enumerate() {
            let feed = family
                .sample_feed(theta, N, derive_seed(k as u64, i as u64))
                .unwrap();
            let r = family.dim();
            let mut acc = vec![0.0; r * r];
            for &z in feed.values() {
                let s = score(&family, theta, z);
                for a in 0..r {
                    for b in 0..r {
                        acc[a * r + b] += s[a] * s[b];
                    }
                }
            }
            let fisher = family.fisher_information(theta).unwrap();
            for a in 0..r {
                for b in 0..r {
                    let est = acc[a * r + b] / N as f64;
                    let exact = fisher.get(a, b);
                    if a == b {
                        let rel = (est - exact).abs() / exact;
                        assert!(rel < 0.02, "{} {theta} I[{a}{b}]: mc {est} vs {exact}", family.name());
                    } else {
                        let scale = (fisher.get(a, a) * fisher.get(b, b)).sqrt();
                        assert!(exact == 0.0 && est.abs() < 0.02 * scale, "{} off-diagonal {est}", family.name());
                    }
                }
            }
        }
    }
}

#[test]
fn sampling_moments() {
    let feed = Family::Bernoulli.sample_feed(&p(&[0.5]), 100_000, 1).unwrap();
    let mean = feed.values().iter().sum::<f64>() / 1e5;
    assert!((mean - 0.5).abs() <= 0.005, "{mean}");

    let feed = Family::Gaussian1D.sample_feed(&p(&[0.0, 1.0]), 100_000, 7).unwrap();
    let est = Family::Gaussian1D.mvue(&feed).unwrap();
    assert!(est[0].abs() <= 0.0095, "{est}");
    assert!((est[1] - 1.0).abs() <= 0.014, "{est}");

    let feed = Family::Gaussian1D.sample_feed(&p(&[3.0, 0.0]), 5, 99).unwrap();
    assert_eq!(feed.values(), &[3.0; 5]);
}

#[test]
fn sampling_is_bit_identical_for_equal_seeds() {
    for (family, thetas) in instances() {
        let a = family.sample_feed(&thetas[0], 1000, 42).unwrap();
        let b = family.sample_feed(&thetas[0], 1000, 42).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn mvue_variance_component_is_most_efficient() {
    const TRIALS: usize = 10_000;
    let family = Family::Gaussian1D;
    let theta = p(&[0.0, 1.0]);
    let m = 50;
    let specs = [
        EstimatorSpec::Mvue,
        EstimatorSpec::Biased(vec![2.0, 0.5]),
        EstimatorSpec::Inflated(2.0),
        EstimatorSpec::Inflated(16.0),
    ];
    let variances: Vec<f64> = specs
        .iter()
        .map(|spec| {
            let xs: Vec<f64> = (0..TRIALS)
                .map(|t| {
                    let feed = family.sample_feed(&theta, m, derive_seed(3, t as u64)).unwrap();
                    form_belief(spec, &family, &feed, derive_seed(4, t as u64)).unwrap()[1]
                })
                .collect();
            let mean = xs.iter().sum::<f64>() / TRIALS as f64;
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (TRIALS - 1) as f64
        })
        .collect();
    // same feeds, so a constant offset leaves the variance unchanged up to rounding
    assert!((variances[1] - variances[0]).abs() <= 1e-9 * variances[0]);
    assert!(variances[0] < variances[2] && variances[2] < variances[3], "{variances:?}");
}
