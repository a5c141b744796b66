//! Simulated filtering algorithms.
//!
//! A platform maps an opaque input token to a parameter `theta(x)` and serves
//! feeds of i.i.d. draws from `p_z(.; theta(x))`. An optional inflation adds
//! `kappa` to designated coordinates (e.g. the Gaussian variance), which is how
//! a platform raises content diversity without touching anything else.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::audit::FeedOracle;
use crate::error::{Error, Result};
use crate::family::Family;
use crate::param::{Feed, ParamVector};
use crate::rng::{derive_seed_str, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mapping {
    /// Every input maps to the same parameter: compliant by construction.
    Constant(ParamVector),
    /// Explicit table; unknown tokens are a protocol error.
    Lookup(BTreeMap<String, ParamVector>),
    /// `theta(x) = base + delta(x)`, with `delta = 0` for tokens not listed.
    AffineShift {
        base: ParamVector,
        deltas: BTreeMap<String, Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inflation {
    pub kappa: f64,
    /// Zero-based coordinates that receive `+kappa`.
    pub coords: Vec<usize>,
    /// Tokens the inflation applies to; `None` means all.
    pub tokens: Option<Vec<String>>,
}

impl Inflation {
    pub fn applies_to(&self, token: &str) -> bool {
        self.tokens
            .as_ref()
            .is_none_or(|tokens| tokens.iter().any(|t| t == token))
    }

    /// `theta + kappa * indicator(coords)`; other coordinates are copied exactly.
    pub fn apply(&self, theta: &ParamVector) -> ParamVector {
        let mut v = theta.values().to_vec();
        for &c in &self.coords {
            v[c] += self.kappa;
        }
        ParamVector::new(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformSpec {
    pub family: Family,
    pub mapping: Mapping,
    pub inflation: Option<Inflation>,
}

impl PlatformSpec {
    pub fn constant(family: Family, theta: ParamVector) -> Self {
        PlatformSpec {
            family,
            mapping: Mapping::Constant(theta),
            inflation: None,
        }
    }

    pub fn lookup<I, S>(family: Family, table: I) -> Self
    where
        I: IntoIterator<Item = (S, ParamVector)>,
        S: Into<String>,
    {
        PlatformSpec {
            family,
            mapping: Mapping::Lookup(table.into_iter().map(|(k, v)| (k.into(), v)).collect()),
            inflation: None,
        }
    }

    pub fn with_inflation(mut self, inflation: Inflation) -> Self {
        self.inflation = Some(inflation);
        self
    }

    /// The true parameter behind `token`, inflation included.
    pub fn theta_for(&self, token: &str) -> Result<ParamVector> {
        let raw = match &self.mapping {
            Mapping::Constant(theta) => theta.clone(),
            Mapping::Lookup(table) => table
                .get(token)
                .cloned()
                .ok_or_else(|| Error::Protocol(format!("unknown input token '{token}'")))?,
            Mapping::AffineShift { base, deltas } => match deltas.get(token) {
                Some(delta) => base + &ParamVector::new(delta.clone()),
                None => base.clone(),
            },
        };
        Ok(match &self.inflation {
            Some(inf) if inf.applies_to(token) => inf.apply(&raw),
            _ => raw,
        })
    }

    /// Tokens named explicitly, in table order.
    pub fn known_tokens(&self) -> Vec<String> {
        match &self.mapping {
            Mapping::Constant(_) => Vec::new(),
            Mapping::Lookup(table) => table.keys().cloned().collect(),
            Mapping::AffineShift { deltas, .. } => deltas.keys().cloned().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.family.dim();
        if let Some(inf) = &self.inflation {
            if !(inf.kappa.is_finite() && inf.kappa >= 0.0) {
                return Err(Error::Construction(format!(
                    "inflation kappa must be finite and >= 0, got {}",
                    inf.kappa
                )));
            }
            if let Some(&c) = inf.coords.iter().find(|&&c| c >= r) {
                return Err(Error::Construction(format!(
                    "inflation coordinate {} out of range for {} (r = {r})",
                    c + 1,
                    self.family.name()
                )));
            }
        }
        if let Mapping::AffineShift { base, deltas } = &self.mapping {
            base.expect_dim(r)
                .map_err(|e| Error::Construction(format!("base: {e}")))?;
            for (token, d) in deltas {
                if d.len() != r {
                    return Err(Error::Construction(format!(
                        "delta for '{token}' has length {}, expected {r}",
                        d.len()
                    )));
                }
            }
        }
        let mut probes: Vec<Option<String>> = self.known_tokens().into_iter().map(Some).collect();
        // the catch-all parameter (constant value, affine base) under every inflation scope
        if !matches!(self.mapping, Mapping::Lookup(_)) {
            probes.push(None);
        }
        for token in probes {
            let theta = match &token {
                Some(t) => self.theta_for(t)?,
                None => {
                    let base = match &self.mapping {
                        Mapping::Constant(t) => t.clone(),
                        Mapping::AffineShift { base, .. } => base.clone(),
                        Mapping::Lookup(_) => unreachable!(),
                    };
                    match &self.inflation {
                        Some(inf) if inf.tokens.is_none() => inf.apply(&base),
                        _ => base,
                    }
                }
            };
            self.family.check_sampling(&theta).map_err(|e| {
                Error::Construction(format!(
                    "parameter for {}: {e}",
                    token.as_deref().unwrap_or("unlisted inputs")
                ))
            })?;
        }
        Ok(())
    }
}

/// A black box built from a [`PlatformSpec`]. The only thing it exposes is
/// [`FeedOracle`]; the [`PlatformSpec`] behind it cannot be recovered.
#[derive(Debug, Clone)]
pub struct SimPlatform {
    spec: PlatformSpec,
}

impl FeedOracle for SimPlatform {
    fn feed(&self, token: &str, m: usize, seed: u64) -> Result<Feed> {
        let theta = self.spec.theta_for(token)?;
        let mut rng = stream_rng(derive_seed_str(seed, token), 0);
        self.spec.family.sample_feed_with(&theta, m, &mut rng)
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

pub fn make_platform(spec: PlatformSpec) -> Result<SimPlatform> {
    spec.validate()?;
    Ok(SimPlatform { spec })
}

/// Human-readable summary of a platform, true parameters included. For reports only.
pub fn describe_platform(spec: &PlatformSpec) -> String {
    let mut out = String::new();
    match &spec.mapping {
        Mapping::Constant(theta) => {
            let _ = writeln!(out, "compliant: all inputs map to {theta}");
        }
        Mapping::Lookup(table) => {
            for (token, theta) in table {
                let shown = spec.theta_for(token).unwrap_or_else(|_| theta.clone());
                let _ = writeln!(out, "{token} -> {shown}");
            }
        }
        Mapping::AffineShift { base, deltas } => {
            let _ = writeln!(out, "affine: unlisted inputs map to {base}");
            for token in deltas.keys() {
                if let Ok(theta) = spec.theta_for(token) {
                    let _ = writeln!(out, "{token} -> {theta}");
                }
            }
        }
    }
    if let Some(inf) = &spec.inflation {
        let coords: Vec<String> = inf.coords.iter().map(|c| (c + 1).to_string()).collect();
        let scope = match &inf.tokens {
            None => String::new(),
            Some(tokens) => format!(" for {}", tokens.join(", ")),
        };
        let _ = writeln!(
            out,
            "inflation: +{} on coordinate {}{scope}",
            inf.kappa,
            coords.join(", ")
        );
    }
    out.trim_end().to_string()
}
