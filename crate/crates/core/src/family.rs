//! Exponential-family feed models.
//!
//! A feed is `m` i.i.d. draws from `p_z(.; theta)`. Each [`Family`] bundles
//! sampling, log-density, the unbiased and maximum-likelihood estimators,
//! and closed-form Fisher information. All shipped families have scalar
//! content (`n = 1`).

use rand::Rng;
use rand_distr::{Distribution, Poisson as PoissonDist, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::{Feed, FisherMatrix, ParamVector};
use crate::rng::stream_rng;
use crate::special::ln_gamma;

/// Distance by which estimates on the boundary of the parameter space are pushed inward.
pub const BOUNDARY_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyId {
    Gaussian1D,
    GaussianKnownVar,
    Bernoulli,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyDescriptor {
    pub family_id: FamilyId,
    pub r: usize,
    pub regularity_notes: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Mvue,
    Mle,
}

/// A concrete model family.
///
/// Parameter layouts:
/// - `Gaussian1D`: `(mean, variance)`
/// - `GaussianKnownVar`: `(mean)` with the variance fixed at construction
/// - `Bernoulli`: `(rate)`
/// - `Poisson`: `(rate)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum Family {
    #[serde(rename = "gaussian-1d")]
    Gaussian1D,
    GaussianKnownVar { variance: f64 },
    Bernoulli,
    Poisson,
}

impl Family {
    pub fn gaussian_known_var(variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::Domain(format!(
                "known variance must be positive and finite, got {variance}"
            )));
        }
        Ok(Family::GaussianKnownVar { variance })
    }

    pub fn id(&self) -> FamilyId {
        match self {
            Family::Gaussian1D => FamilyId::Gaussian1D,
            Family::GaussianKnownVar { .. } => FamilyId::GaussianKnownVar,
            Family::Bernoulli => FamilyId::Bernoulli,
            Family::Poisson => FamilyId::Poisson,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian1D => "gaussian-1d",
            Family::GaussianKnownVar { .. } => "gaussian-known-var",
            Family::Bernoulli => "bernoulli",
            Family::Poisson => "poisson",
        }
    }

    /// Dimension `r` of the parameter space.
    pub fn dim(&self) -> usize {
        match self {
            Family::Gaussian1D => 2,
            _ => 1,
        }
    }

    pub fn descriptor(&self) -> FamilyDescriptor {
        let regularity_notes = match self {
            Family::Gaussian1D => {
                "open parameter space R x (0,inf); support R independent of theta; \
                 density C^3 in theta; Fisher information diag(1/s2, 1/(2 s2^2)) finite and \
                 positive definite on the interior; regular exponential family"
            }
            Family::GaussianKnownVar { .. } => {
                "open parameter space R; support independent of theta; Fisher information \
                 1/s0^2 constant and positive; regular exponential family"
            }
            Family::Bernoulli => {
                "open parameter space (0,1); support {0,1} independent of theta; Fisher \
                 information 1/(p(1-p)) finite and positive on the interior, diverges at the boundary"
            }
            Family::Poisson => {
                "open parameter space (0,inf); support N independent of theta; Fisher \
                 information 1/lambda finite and positive on the interior, diverges at 0"
            }
        };
        FamilyDescriptor {
            family_id: self.id(),
            r: self.dim(),
            regularity_notes,
        }
    }

    /// Checks membership in the closed parameter set that sampling accepts
    /// (zero variance, `p in {0,1}` and `lambda = 0` give degenerate feeds).
    pub fn check_sampling(&self, theta: &ParamVector) -> Result<()> {
        theta.expect_dim(self.dim())?;
        if !theta.is_finite() {
            return Err(Error::Domain(format!(
                "{} parameter {theta} is not finite",
                self.name()
            )));
        }
        match self {
            Family::Gaussian1D if theta[1] < 0.0 => Err(Error::Domain(format!(
                "gaussian-1d variance must be >= 0, got {}",
                theta[1]
            ))),
            Family::Bernoulli if !(0.0..=1.0).contains(&theta[0]) => Err(Error::Domain(format!(
                "bernoulli rate must lie in [0,1], got {}",
                theta[0]
            ))),
            Family::Poisson if theta[0] < 0.0 => Err(Error::Domain(format!(
                "poisson rate must be >= 0, got {}",
                theta[0]
            ))),
            _ => Ok(()),
        }
    }

    /// Checks membership in the open parameter space `Theta`.
    pub fn check_interior(&self, theta: &ParamVector) -> Result<()> {
        self.check_sampling(theta)?;
        let reason = match self {
            Family::Gaussian1D if theta[1] <= 0.0 => Some("variance is 0"),
            Family::Bernoulli if theta[0] <= 0.0 || theta[0] >= 1.0 => {
                Some("rate is on the boundary {0,1}")
            }
            Family::Poisson if theta[0] <= 0.0 => Some("rate is 0"),
            _ => None,
        };
        match reason {
            Some(reason) => Err(Error::Singular {
                family: self.name(),
                reason: format!("{reason} at {theta}"),
            }),
            None => Ok(()),
        }
    }

    /// Pushes an estimate that landed on (or beyond) the boundary inward by
    /// [`BOUNDARY_CLAMP`]. Non-finite coordinates are left untouched.
    pub fn clamp_interior(&self, theta: &ParamVector) -> ParamVector {
        let mut v = theta.values().to_vec();
        match self {
            Family::Gaussian1D => {
                if v[1] < BOUNDARY_CLAMP {
                    v[1] = BOUNDARY_CLAMP;
                }
            }
            Family::Bernoulli => {
                v[0] = v[0].clamp(BOUNDARY_CLAMP, 1.0 - BOUNDARY_CLAMP);
            }
            Family::Poisson => {
                if v[0] < BOUNDARY_CLAMP {
                    v[0] = BOUNDARY_CLAMP;
                }
            }
            Family::GaussianKnownVar { .. } => {}
        }
        ParamVector::new(v)
    }

    /// Draws a feed of `m` i.i.d. items from `rng`.
    pub fn sample_feed_with<R: Rng + ?Sized>(
        &self,
        theta: &ParamVector,
        m: usize,
        rng: &mut R,
    ) -> Result<Feed> {
        self.check_sampling(theta)?;
        if m == 0 {
            return Err(Error::Domain("feed length m must be at least 1".into()));
        }
        let data = match *self {
            Family::Gaussian1D => gaussian_draws(theta[0], theta[1], m, rng),
            Family::GaussianKnownVar { variance } => gaussian_draws(theta[0], variance, m, rng),
            Family::Bernoulli => {
                let p = theta[0];
                (0..m)
                    .map(|_| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
                    .collect()
            }
            Family::Poisson => {
                let lambda = theta[0];
                if lambda == 0.0 {
                    vec![0.0; m]
                } else {
                    let dist = PoissonDist::new(lambda)
                        .map_err(|e| Error::Domain(format!("poisson rate {lambda}: {e}")))?;
                    (0..m).map(|_| dist.sample(rng)).collect()
                }
            }
        };
        Feed::scalars(data)
    }

    /// Draws a feed from the stream `(seed, 0)`; bit-identical for equal seeds.
    pub fn sample_feed(&self, theta: &ParamVector, m: usize, seed: u64) -> Result<Feed> {
        self.sample_feed_with(theta, m, &mut stream_rng(seed, 0))
    }

    fn min_items(&self, estimator: Estimator) -> usize {
        match (self, estimator) {
            (Family::Gaussian1D, _) => 2,
            _ => 1,
        }
    }

    fn scalar_values<'a>(&self, feed: &'a Feed, estimator: Estimator) -> Result<&'a [f64]> {
        if feed.content_dim() != 1 {
            return Err(Error::Dimension {
                expected: 1,
                got: feed.content_dim(),
            });
        }
        let needed = self.min_items(estimator);
        if feed.len() < needed {
            return Err(Error::InsufficientData {
                family: self.name(),
                needed,
                got: feed.len(),
            });
        }
        Ok(feed.values())
    }

    /// Minimum-variance unbiased estimate.
    pub fn mvue(&self, feed: &Feed) -> Result<ParamVector> {
        let xs = self.scalar_values(feed, Estimator::Mvue)?;
        Ok(match self {
            Family::Gaussian1D => {
                let (mean, ss) = mean_and_sum_sq(xs);
                ParamVector::new(vec![mean, ss / (xs.len() - 1) as f64])
            }
            _ => ParamVector::scalar(mean_and_sum_sq(xs).0),
        })
    }

    /// Maximum-likelihood estimate. Differs from [`Family::mvue`] only in the
    /// Gaussian variance divisor (`m` instead of `m - 1`).
    pub fn mle(&self, feed: &Feed) -> Result<ParamVector> {
        let xs = self.scalar_values(feed, Estimator::Mle)?;
        Ok(match self {
            Family::Gaussian1D => {
                let (mean, ss) = mean_and_sum_sq(xs);
                ParamVector::new(vec![mean, ss / xs.len() as f64])
            }
            _ => ParamVector::scalar(mean_and_sum_sq(xs).0),
        })
    }

    pub fn estimate(&self, estimator: Estimator, feed: &Feed) -> Result<ParamVector> {
        match estimator {
            Estimator::Mvue => self.mvue(feed),
            Estimator::Mle => self.mle(feed),
        }
    }

    pub fn fisher_information(&self, theta: &ParamVector) -> Result<FisherMatrix> {
        self.check_interior(theta)?;
        match *self {
            Family::Gaussian1D => {
                let s2 = theta[1];
                FisherMatrix::from_diagonal(&[1.0 / s2, 1.0 / (2.0 * s2 * s2)])
            }
            Family::GaussianKnownVar { variance } => FisherMatrix::from_diagonal(&[1.0 / variance]),
            Family::Bernoulli => {
                let p = theta[0];
                FisherMatrix::from_diagonal(&[1.0 / (p * (1.0 - p))])
            }
            Family::Poisson => FisherMatrix::from_diagonal(&[1.0 / theta[0]]),
        }
    }

    /// Per-coordinate sampling variance of the MVUE at `theta` for feeds of length `m`.
    pub fn mvue_variance(&self, theta: &ParamVector, m: usize) -> Result<ParamVector> {
        self.check_sampling(theta)?;
        let mf = m as f64;
        Ok(match *self {
            Family::Gaussian1D => {
                if m < 2 {
                    return Err(Error::InsufficientData {
                        family: self.name(),
                        needed: 2,
                        got: m,
                    });
                }
                let s2 = theta[1];
                ParamVector::new(vec![s2 / mf, 2.0 * s2 * s2 / (mf - 1.0)])
            }
            Family::GaussianKnownVar { variance } => ParamVector::scalar(variance / mf),
            Family::Bernoulli => ParamVector::scalar(theta[0] * (1.0 - theta[0]) / mf),
            Family::Poisson => ParamVector::scalar(theta[0] / mf),
        })
    }

    /// `log p_z(z; theta)` for a scalar content item.
    pub fn log_density(&self, theta: &ParamVector, z: &[f64]) -> Result<f64> {
        self.check_interior(theta)?;
        if z.len() != 1 {
            return Err(Error::Dimension {
                expected: 1,
                got: z.len(),
            });
        }
        let z = z[0];
        match *self {
            Family::Gaussian1D => Ok(gaussian_log_density(theta[0], theta[1], z)),
            Family::GaussianKnownVar { variance } => Ok(gaussian_log_density(theta[0], variance, z)),
            Family::Bernoulli => match z {
                1.0 => Ok(theta[0].ln()),
                0.0 => Ok((1.0 - theta[0]).ln()),
                _ => Err(Error::Domain(format!("bernoulli content must be 0 or 1, got {z}"))),
            },
            Family::Poisson => {
                if z < 0.0 || z.fract() != 0.0 {
                    return Err(Error::Domain(format!(
                        "poisson content must be a non-negative integer, got {z}"
                    )));
                }
                let lambda = theta[0];
                Ok(z * lambda.ln() - lambda - ln_gamma(z + 1.0))
            }
        }
    }
}

fn gaussian_draws<R: Rng + ?Sized>(mean: f64, variance: f64, m: usize, rng: &mut R) -> Vec<f64> {
    if variance == 0.0 {
        return vec![mean; m];
    }
    let sd = variance.sqrt();
    (0..m)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            mean + sd * z
        })
        .collect()
}

fn gaussian_log_density(mean: f64, variance: f64, z: f64) -> f64 {
    let d = z - mean;
    -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - d * d / (2.0 * variance)
}

/// Two-pass mean and sum of squared deviations.
fn mean_and_sum_sq(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss)
}
