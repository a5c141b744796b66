//! The black-box compliance audit.
//!
//! For a counterfactual pair `(x, x')` the auditor requests one feed per input,
//! estimates `theta~ = L+(F(x))` and `theta~' = L+(F(x'))`, and rejects
//! compliance (H1) when the Fisher-weighted distance
//! `(theta~ - theta~')^T I(P) (theta~ - theta~')` reaches `(2/m) chi2_r(1 - eps)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Estimator, Family};
use crate::param::{Feed, ParamVector};
use crate::rng::derive_seed;
use crate::special::chi2_quantile;

/// Black-box access to a filtering algorithm: the only thing an auditor may do
/// is ask for a feed of length `m` for an input token.
pub trait FeedOracle {
    fn feed(&self, token: &str, m: usize, seed: u64) -> Result<Feed>;

    /// Whether `feed` may be called from several threads at once.
    fn concurrent_safe(&self) -> bool {
        false
    }
}

impl<T: FeedOracle + ?Sized> FeedOracle for &T {
    fn feed(&self, token: &str, m: usize, seed: u64) -> Result<Feed> {
        (**self).feed(token, m, seed)
    }

    fn concurrent_safe(&self) -> bool {
        (**self).concurrent_safe()
    }
}

/// Where the Fisher information in the audit statistic is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfoPoint {
    /// At the estimate for `x` (the deployed procedure).
    AtThetaTilde,
    /// At the midpoint of both estimates; symmetric in `x` and `x'`.
    AtMidpoint,
    /// At a known true parameter. Verification mode only.
    AtOracleTheta(ParamVector),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub epsilon: f64,
    pub family: Family,
    pub estimator: Estimator,
    pub info_point: InfoPoint,
    pub m: usize,
}

impl AuditConfig {
    pub fn new(family: Family, epsilon: f64, m: usize) -> Result<Self> {
        let config = AuditConfig {
            epsilon,
            family,
            estimator: Estimator::Mvue,
            info_point: InfoPoint::AtThetaTilde,
            m,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn with_info_point(mut self, info_point: InfoPoint) -> Result<Self> {
        self.info_point = info_point;
        self.validate()?;
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.epsilon = epsilon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::validation("epsilon", "epsilon must lie in [0,1]"));
        }
        if self.m == 0 {
            return Err(Error::validation("m", "feed length m must be at least 1"));
        }
        if let InfoPoint::AtOracleTheta(theta) = &self.info_point {
            self.family
                .check_interior(theta)
                .map_err(|e| Error::validation("oracle_theta", e.to_string()))?;
        }
        Ok(())
    }

    /// `(2/m) chi2_r(1 - eps)`; infinite at `eps = 0`, zero at `eps = 1`.
    pub fn threshold(&self) -> Result<f64> {
        audit_threshold(self.family.dim(), self.epsilon, self.m)
    }
}

pub fn audit_threshold(r: usize, epsilon: f64, m: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::validation("epsilon", "epsilon must lie in [0,1]"));
    }
    if epsilon == 0.0 {
        return Ok(f64::INFINITY);
    }
    let r = u32::try_from(r).map_err(|_| Error::Domain("dimension too large".into()))?;
    Ok(2.0 / m as f64 * chi2_quantile(r, 1.0 - epsilon)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualPair {
    pub x: String,
    pub x_prime: String,
    pub label: String,
}

impl CounterfactualPair {
    pub fn new(x: impl Into<String>, x_prime: impl Into<String>, label: impl Into<String>) -> Self {
        CounterfactualPair {
            x: x.into(),
            x_prime: x_prime.into(),
            label: label.into(),
        }
    }

    pub fn swapped(&self) -> Self {
        CounterfactualPair {
            x: self.x_prime.clone(),
            x_prime: self.x.clone(),
            label: self.label.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Compliant: the test is passed.
    H0,
    /// Not compliant.
    H1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub pair_label: String,
    pub hypothesis: Hypothesis,
    pub statistic: f64,
    #[serde(with = "crate::serde_f64")]
    pub threshold: f64,
    pub theta_tilde: ParamVector,
    pub theta_tilde_prime: ParamVector,
    pub config: AuditConfig,
}

impl AuditVerdict {
    pub fn is_h1(&self) -> bool {
        self.hypothesis == Hypothesis::H1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchVerdict {
    pub per_pair: Vec<AuditVerdict>,
    pub h1_count: usize,
    pub alpha: f64,
    pub passed: bool,
}

/// Allowance for `alpha * |S|` products that land a few ulps below an integer.
const BATCH_SLACK: f64 = 1e-9;

/// The audit statistic for given estimates. Estimates on the boundary are
/// clamped inward first; estimates that stay unusable are an error, never H1.
pub fn audit_statistic(
    config: &AuditConfig,
    theta_tilde: &ParamVector,
    theta_tilde_prime: &ParamVector,
) -> Result<(f64, ParamVector, ParamVector)> {
    let family = &config.family;
    let r = family.dim();
    theta_tilde.expect_dim(r)?;
    theta_tilde_prime.expect_dim(r)?;
    let clamp = |theta: &ParamVector| -> Result<ParamVector> {
        let clamped = family.clamp_interior(theta);
        family
            .check_interior(&clamped)
            .map_err(|e| Error::Estimate {
                estimate: theta.values().to_vec(),
                reason: e.to_string(),
            })?;
        Ok(clamped)
    };
    let a = clamp(theta_tilde)?;
    let b = clamp(theta_tilde_prime)?;
    let point = match &config.info_point {
        InfoPoint::AtThetaTilde => a.clone(),
        InfoPoint::AtMidpoint => a.midpoint(&b),
        InfoPoint::AtOracleTheta(theta) => theta.clone(),
    };
    let fisher = family
        .fisher_information(&point)
        .map_err(|e| Error::Estimate {
            estimate: point.values().to_vec(),
            reason: e.to_string(),
        })?;
    let diff = &a - &b;
    let statistic = fisher.quadratic_form(diff.values()).max(0.0);
    if !statistic.is_finite() {
        return Err(Error::Estimate {
            estimate: a.values().to_vec(),
            reason: "audit statistic is not finite".into(),
        });
    }
    Ok((statistic, a, b))
}

/// Decision step of the audit on already-computed estimates.
pub fn evaluate_estimates(
    config: &AuditConfig,
    label: &str,
    theta_tilde: &ParamVector,
    theta_tilde_prime: &ParamVector,
) -> Result<AuditVerdict> {
    config.validate()?;
    let threshold = config.threshold()?;
    let (statistic, a, b) = audit_statistic(config, theta_tilde, theta_tilde_prime)?;
    let hypothesis = if statistic >= threshold {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    };
    Ok(AuditVerdict {
        pair_label: label.to_string(),
        hypothesis,
        statistic,
        threshold,
        theta_tilde: a,
        theta_tilde_prime: b,
        config: config.clone(),
    })
}

fn fetch<O: FeedOracle + ?Sized>(oracle: &O, token: &str, m: usize, seed: u64) -> Result<Feed> {
    let feed = oracle.feed(token, m, seed)?;
    if feed.len() != m {
        return Err(Error::Protocol(format!(
            "black box returned {} items for '{token}', requested {m}",
            feed.len()
        )));
    }
    Ok(feed)
}

/// Audits one counterfactual pair with fresh feeds drawn under `seed`.
pub fn audit_pair<O: FeedOracle + ?Sized>(
    config: &AuditConfig,
    oracle: &O,
    pair: &CounterfactualPair,
    seed: u64,
) -> Result<AuditVerdict> {
    config.validate()?;
    let feed = fetch(oracle, &pair.x, config.m, derive_seed(seed, 0))?;
    let feed_prime = fetch(oracle, &pair.x_prime, config.m, derive_seed(seed, 1))?;
    let theta_tilde = config.family.estimate(config.estimator, &feed)?;
    let theta_tilde_prime = config.family.estimate(config.estimator, &feed_prime)?;
    evaluate_estimates(config, &pair.label, &theta_tilde, &theta_tilde_prime)
}

/// Runs the audit in both orders with independent feeds; H1 if either run is H1.
/// The returned verdict is the run with the larger statistic.
pub fn audit_symmetrized<O: FeedOracle + ?Sized>(
    config: &AuditConfig,
    oracle: &O,
    pair: &CounterfactualPair,
    seed: u64,
) -> Result<AuditVerdict> {
    let forward = audit_pair(config, oracle, pair, derive_seed(seed, 0))?;
    let reverse = audit_pair(config, oracle, &pair.swapped(), derive_seed(seed, 1))?;
    let either = forward.is_h1() || reverse.is_h1();
    let mut out = if reverse.statistic > forward.statistic {
        reverse
    } else {
        forward
    };
    if either {
        out.hypothesis = Hypothesis::H1;
    }
    Ok(out)
}

/// Audits every pair (no short-circuit) and fails the platform when more than
/// `alpha * |S|` pairs come back H1. Pair `i` uses seed `derive_seed(seed, i)`.
pub fn audit_batch<O: FeedOracle + Sync + ?Sized>(
    config: &AuditConfig,
    oracle: &O,
    pairs: &[CounterfactualPair],
    alpha: f64,
    seed: u64,
) -> Result<BatchVerdict> {
    if pairs.is_empty() {
        return Err(Error::validation("pairs", "at least one counterfactual pair is required"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::validation("alpha", "alpha must lie in [0,1]"));
    }
    let run = |(i, pair): (usize, &CounterfactualPair)| {
        audit_pair(config, oracle, pair, derive_seed(seed, i as u64))
            .map_err(|e| e.with_label(&pair.label))
    };
    let results: Vec<Result<AuditVerdict>> = if oracle.concurrent_safe() {
        pairs.par_iter().enumerate().map(run).collect()
    } else {
        pairs.iter().enumerate().map(run).collect()
    };
    let per_pair = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(batch_from_verdicts(per_pair, alpha))
}

pub fn batch_from_verdicts(per_pair: Vec<AuditVerdict>, alpha: f64) -> BatchVerdict {
    let h1_count = per_pair.iter().filter(|v| v.is_h1()).count();
    let passed = (h1_count as f64) <= alpha * per_pair.len() as f64 + BATCH_SLACK;
    BatchVerdict {
        per_pair,
        h1_count,
        alpha,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec())
    }

    fn gaussian(eps: f64, m: usize) -> AuditConfig {
        AuditConfig::new(Family::Gaussian1D, eps, m).unwrap()
    }

    /// Returns fixed feeds per token, ignoring the seed.
    struct Fixed(Vec<(&'static str, Vec<f64>)>);

    impl FeedOracle for Fixed {
        fn feed(&self, token: &str, _m: usize, _seed: u64) -> Result<Feed> {
            let (_, values) = self
                .0
                .iter()
                .find(|(t, _)| *t == token)
                .ok_or_else(|| Error::Protocol(format!("unknown token {token}")))?;
            Feed::scalars(values.clone())
        }
    }

    #[test]
    fn hand_computed_gaussian_verdicts() {
        let v = evaluate_estimates(&gaussian(0.05, 100), "p", &p(&[0.5, 1.0]), &p(&[0.0, 1.0]))
            .unwrap();
        assert_abs_diff_eq!(v.statistic, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(v.threshold, 0.119_83, epsilon = 1e-5);
        assert_eq!(v.hypothesis, Hypothesis::H1);

        let v = evaluate_estimates(&gaussian(0.05, 10), "p", &p(&[0.5, 1.0]), &p(&[0.0, 1.0]))
            .unwrap();
        assert_abs_diff_eq!(v.threshold, 1.1983, epsilon = 1e-4);
        assert_eq!(v.hypothesis, Hypothesis::H0);
    }

    #[test]
    fn identical_estimates_pass_for_eps_below_one() {
        for eps in [0.0, 0.01, 0.5, 0.999] {
            let v = evaluate_estimates(&gaussian(eps, 50), "p", &p(&[1.0, 2.0]), &p(&[1.0, 2.0]))
                .unwrap();
            assert_eq!(v.statistic, 0.0);
            assert_eq!(v.hypothesis, Hypothesis::H0);
        }
    }

    #[test]
    fn epsilon_endpoints() {
        let never = gaussian(0.0, 10);
        assert_eq!(never.threshold().unwrap(), f64::INFINITY);
        let v = evaluate_estimates(&never, "p", &p(&[100.0, 1.0]), &p(&[0.0, 1.0])).unwrap();
        assert_eq!(v.hypothesis, Hypothesis::H0);

        let always = gaussian(1.0, 10);
        assert_eq!(always.threshold().unwrap(), 0.0);
        // tie at zero goes to H1 under the >= rule
        let v = evaluate_estimates(&always, "p", &p(&[0.0, 1.0]), &p(&[0.0, 1.0])).unwrap();
        assert_eq!(v.hypothesis, Hypothesis::H1);
    }

    #[test]
    fn config_validation() {
        assert!(AuditConfig::new(Family::Gaussian1D, 1.5, 10).is_err());
        assert!(AuditConfig::new(Family::Gaussian1D, 0.05, 0).is_err());
        let err = gaussian(0.05, 10)
            .with_info_point(InfoPoint::AtOracleTheta(p(&[0.0, 0.0])))
            .unwrap_err();
        assert!(err.to_string().contains("oracle_theta"));
    }

    #[test]
    fn feed_length_mismatch_is_protocol_error() {
        let oracle = Fixed(vec![("a", vec![1.0, 2.0, 3.0]), ("b", vec![1.0, 2.0])]);
        let err = audit_pair(&gaussian(0.05, 3), &oracle, &CounterfactualPair::new("a", "b", "ab"), 1)
            .unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");
    }

    #[test]
    fn degenerate_feeds_are_clamped_not_failed() {
        // both feeds constant: variance estimates 0, clamped to 1e-9
        let oracle = Fixed(vec![("a", vec![2.0; 4]), ("b", vec![2.0; 4])]);
        let v = audit_pair(&gaussian(0.05, 4), &oracle, &CounterfactualPair::new("a", "b", "ab"), 1)
            .unwrap();
        assert_eq!(v.hypothesis, Hypothesis::H0);
        assert_eq!(v.theta_tilde[1], crate::family::BOUNDARY_CLAMP);
    }

    #[test]
    fn non_finite_estimate_is_an_error_not_h1() {
        let err = evaluate_estimates(&gaussian(0.05, 4), "p", &p(&[f64::NAN, 1.0]), &p(&[0.0, 1.0]))
            .unwrap_err();
        assert!(matches!(err, Error::Estimate { .. }));
    }

    #[test]
    fn batch_pass_rule() {
        let config = gaussian(0.05, 100);
        let verdicts = |h1: usize| -> Vec<AuditVerdict> {
            (0..10)
                .map(|i| {
                    let shift = if i < h1 { 0.5 } else { 0.0 };
                    evaluate_estimates(&config, &format!("p{i}"), &p(&[shift, 1.0]), &p(&[0.0, 1.0]))
                        .unwrap()
                })
                .collect()
        };
        let b = batch_from_verdicts(verdicts(3), 0.3);
        assert_eq!(b.h1_count, 3);
        assert!(b.passed);
        assert!(!batch_from_verdicts(verdicts(3), 0.25).passed);
        // 0.29 * 100 rounds below 29 in binary
        let many: Vec<AuditVerdict> = (0..100)
            .map(|i| {
                let shift = if i < 29 { 0.5 } else { 0.0 };
                evaluate_estimates(&config, "q", &p(&[shift, 1.0]), &p(&[0.0, 1.0])).unwrap()
            })
            .collect();
        assert!(batch_from_verdicts(many, 0.29).passed);
    }

    #[test]
    fn batch_errors_carry_pair_label() {
        let oracle = Fixed(vec![("a", vec![1.0, 2.0])]);
        let pairs = vec![CounterfactualPair::new("a", "missing", "second")];
        let err = audit_batch(&gaussian(0.05, 2), &oracle, &pairs, 0.1, 0).unwrap_err();
        assert!(err.to_string().contains("second"), "{err}");
        assert!(audit_batch(&gaussian(0.05, 2), &oracle, &[], 0.1, 0).is_err());
    }

    #[test]
    fn symmetrized_is_disjunction() {
        // forward uses I at the low-variance side, reverse at the high-variance side
        let oracle = Fixed(vec![("lo", vec![-1.0, 0.0, 1.0]), ("hi", vec![-2.0, 0.0, 2.0])]);
        let config = gaussian(0.05, 3);
        let pair = CounterfactualPair::new("lo", "hi", "p");
        let fwd = audit_pair(&config, &oracle, &pair, 0).unwrap();
        let rev = audit_pair(&config, &oracle, &pair.swapped(), 0).unwrap();
        let sym = audit_symmetrized(&config, &oracle, &pair, 0).unwrap();
        assert_eq!(sym.is_h1(), fwd.is_h1() || rev.is_h1());
        assert_eq!(sym.statistic, fwd.statistic.max(rev.statistic));
    }
}
