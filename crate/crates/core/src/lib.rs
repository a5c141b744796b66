//! Black-box audits of content-filtering algorithms.
//!
//! A filtering algorithm is modeled as a map from an input `x` to a feed of
//! `m` i.i.d. draws from an exponential-family density `p_z(.; theta(x))`.
//! The auditor only sees feeds. It estimates `theta` for both sides of a
//! counterfactual pair with the minimum-variance unbiased estimator and runs a
//! Fisher-information-weighted chi-squared test ([`audit`]). The remaining
//! modules cover the user decision model that motivates the test
//! ([`decision`]), the reward cost of complying with it and the role of
//! content diversity ([`regcost`]), simulated platforms to audit
//! ([`platform`]) and a deterministic Monte Carlo harness ([`mc`]).

pub mod audit;
pub mod decision;
pub mod error;
pub mod family;
pub mod mc;
pub mod param;
pub mod platform;
pub mod regcost;
pub mod rng;
pub mod special;

pub(crate) mod serde_f64;

pub use audit::{
    audit_batch, audit_pair, audit_symmetrized, AuditConfig, AuditVerdict, BatchVerdict,
    CounterfactualPair, FeedOracle, Hypothesis, InfoPoint,
};
pub use error::{Error, Result};
pub use family::{Estimator, Family, FamilyDescriptor, FamilyId};
pub use param::{Feed, FisherMatrix, ParamVector};
pub use platform::{describe_platform, make_platform, Inflation, Mapping, PlatformSpec};
pub use special::chi2_quantile;
