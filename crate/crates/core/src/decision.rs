//! User decision model.
//!
//! A user shown feed `Z` forms a belief `theta^ = L(Z)` and then chooses
//! between two actions by comparing affine values `v0(theta^)` and
//! `v1(theta^)`. Choosing `A1` when `v1 - v0` exceeds a threshold calibrated at
//! the `G0` boundary is a test of `G0: v0(theta) >= v1(theta)`; with the
//! unbiased minimum-variance belief it is the most powerful such test, i.e. the
//! user whose choices move most with the content.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::Family;
use crate::param::{Feed, ParamVector};
use crate::rng::{derive_seed, stream_rng};

/// How a user turns a feed into a belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorSpec {
    /// Takes the feed at face value.
    Mvue,
    /// Adds a fixed offset to the unbiased estimate (a "stubborn" user).
    Biased(Vec<f64>),
    /// Adds zero-mean noise so the belief variance is `c` times the MVUE's
    /// (a "skeptical" user). Requires `c >= 1`.
    Inflated(f64),
}

impl EstimatorSpec {
    pub fn validate(&self, family: &Family) -> Result<()> {
        match self {
            EstimatorSpec::Mvue => Ok(()),
            EstimatorSpec::Biased(b) => {
                if b.len() != family.dim() {
                    return Err(Error::Dimension {
                        expected: family.dim(),
                        got: b.len(),
                    });
                }
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::validation("bias", "offsets must be finite"));
                }
                Ok(())
            }
            EstimatorSpec::Inflated(c) => {
                if c.is_finite() && *c >= 1.0 {
                    Ok(())
                } else {
                    Err(Error::validation(
                        "inflation",
                        format!("variance multiplier must be >= 1, got {c}"),
                    ))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::Mvue => "mvue".to_string(),
            EstimatorSpec::Biased(b) => format!("biased{}", ParamVector::new(b.clone())),
            EstimatorSpec::Inflated(c) => format!("inflated(c={c})"),
        }
    }
}

/// `v(theta) = w . theta + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineValue {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl AffineValue {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Self {
        AffineValue { weights, intercept }
    }

    pub fn eval(&self, theta: &ParamVector) -> f64 {
        self.weights
            .iter()
            .zip(theta.values())
            .map(|(w, t)| w * t)
            .sum::<f64>()
            + self.intercept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuePair {
    pub v0: AffineValue,
    pub v1: AffineValue,
}

impl ValuePair {
    /// `v1 - v0 = w . theta + c`, with `v0 = 0`.
    pub fn difference(weights: Vec<f64>, intercept: f64) -> Self {
        let r = weights.len();
        ValuePair {
            v0: AffineValue::new(vec![0.0; r], 0.0),
            v1: AffineValue::new(weights, intercept),
        }
    }

    pub fn score(&self, theta: &ParamVector) -> f64 {
        self.v1.eval(theta) - self.v0.eval(theta)
    }

    pub fn validate(&self, family: &Family) -> Result<()> {
        let r = family.dim();
        for (name, v) in [("v0", &self.v0), ("v1", &self.v1)] {
            if v.weights.len() != r {
                return Err(Error::validation(
                    name,
                    format!("needs {r} weights, got {}", v.weights.len()),
                ));
            }
        }
        Ok(())
    }

    /// Whether `v1 - v0` depends on the mean coordinate only, the case in
    /// which the optimality argument for the unbiased user is known to apply.
    pub fn within_optimality_premises(&self) -> bool {
        self.v1
            .weights
            .iter()
            .zip(&self.v0.weights)
            .skip(1)
            .all(|(a, b)| a == b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    A0,
    A1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub query_id: String,
    pub choice: Choice,
    pub score: f64,
    pub eta: f64,
}

pub fn form_belief(
    spec: &EstimatorSpec,
    family: &Family,
    feed: &Feed,
    noise_seed: u64,
) -> Result<ParamVector> {
    spec.validate(family)?;
    let unbiased = family.mvue(feed)?;
    match spec {
        EstimatorSpec::Mvue => Ok(unbiased),
        EstimatorSpec::Biased(b) => Ok(&unbiased + &ParamVector::new(b.clone())),
        EstimatorSpec::Inflated(c) => {
            if *c == 1.0 {
                return Ok(unbiased);
            }
            // plug-in variance of the unbiased estimate at the estimate itself
            let at = family.clamp_interior(&unbiased);
            let var = family.mvue_variance(&at, feed.len())?;
            let mut rng = stream_rng(noise_seed, 7);
            let noisy = unbiased
                .values()
                .iter()
                .zip(var.values())
                .map(|(u, v)| {
                    let z: f64 = rng.sample(StandardNormal);
                    u + ((c - 1.0) * v).sqrt() * z
                })
                .collect();
            Ok(ParamVector::new(noisy))
        }
    }
}

/// Chooses `A1` iff `v1(belief) - v0(belief) > eta` (ties go to `A0`).
pub fn decide(query_id: &str, values: &ValuePair, belief: &ParamVector, eta: f64) -> DecisionRecord {
    let score = values.score(belief);
    DecisionRecord {
        query_id: query_id.to_string(),
        choice: if score > eta { Choice::A1 } else { Choice::A0 },
        score,
        eta,
    }
}

/// Empirical `(1 - rho)`-quantile of `v1(L+(Z)) - v0(L+(Z))` over `trials`
/// feeds drawn at `theta0`, a point where `v1 = v0`.
///
/// The quantile is the smallest order statistic whose empirical CDF reaches `1 - rho`.
pub fn calibrate_eta(
    values: &ValuePair,
    family: &Family,
    theta0: &ParamVector,
    m: usize,
    rho: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Domain(format!("rho must lie in (0,1), got {rho}")));
    }
    if trials == 0 {
        return Err(Error::validation("trials", "at least one trial is required"));
    }
    values.validate(family)?;
    family.check_sampling(theta0)?;
    let gap = values.score(theta0);
    let scale = values.v1.eval(theta0).abs().max(values.v0.eval(theta0).abs()).max(1.0);
    if gap.abs() > 1e-9 * scale {
        return Err(Error::Domain(format!(
            "theta0 {theta0} is not on the boundary v1 = v0 (v1 - v0 = {gap})"
        )));
    }
    let mut scores = (0..trials)
        .into_par_iter()
        .map(|t| {
            let feed = family.sample_feed_with(theta0, m, &mut stream_rng(derive_seed(seed, t as u64), 0))?;
            Ok(values.score(&family.mvue(&feed)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    scores.sort_by(f64::total_cmp);
    let rank = ((1.0 - rho) * trials as f64).ceil() as usize;
    Ok(scores[rank.clamp(1, trials) - 1])
}

/// Fraction of `trials` feeds at `theta` on which the user chooses `A1`.
#[allow(clippy::too_many_arguments)]
pub fn choice_rate(
    family: &Family,
    theta: &ParamVector,
    estimator: &EstimatorSpec,
    values: &ValuePair,
    eta: f64,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::validation("trials", "at least one trial is required"));
    }
    estimator.validate(family)?;
    values.validate(family)?;
    family.check_sampling(theta)?;
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(seed, t as u64);
            let feed = family.sample_feed_with(theta, m, &mut stream_rng(trial_seed, 0))?;
            let belief = form_belief(estimator, family, &feed, derive_seed(trial_seed, 1))?;
            Ok(usize::from(decide("", values, &belief, eta).choice == Choice::A1))
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / trials as f64)
}

/// `|P(A1 | theta) - P(A1 | theta')|` estimated from `trials` paired draws:
/// how far swapping the counterfactual input moves this user's choices.
#[allow(clippy::too_many_arguments)]
pub fn distinguishability_probe(
    family: &Family,
    theta: &ParamVector,
    theta_prime: &ParamVector,
    estimator: &EstimatorSpec,
    values: &ValuePair,
    eta: f64,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let a = choice_rate(family, theta, estimator, values, eta, m, trials, derive_seed(seed, 0))?;
    let b = choice_rate(family, theta_prime, estimator, values, eta, m, trials, derive_seed(seed, 1))?;
    Ok((a - b).abs())
}

/// Competitor users for the umbrella scenario: stubborn users with large
/// offsets in both directions and skeptical users of increasing noise.
pub fn gullibility_panel() -> Vec<EstimatorSpec> {
    vec![
        EstimatorSpec::Biased(vec![2.0, 0.0]),
        EstimatorSpec::Biased(vec![-2.0, 0.0]),
        EstimatorSpec::Biased(vec![1.0, 0.0]),
        EstimatorSpec::Inflated(2.0),
        EstimatorSpec::Inflated(4.0),
        EstimatorSpec::Inflated(16.0),
    ]
}
