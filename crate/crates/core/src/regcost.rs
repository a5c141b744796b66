//! Cost of regulation and content diversity.
//!
//! A platform that must pass the audit can only choose parameters in the
//! feasible set. The cost of regulation is the drop in maximum reward caused
//! by that restriction. When the reward ignores some coordinates (the set
//! `omega`, e.g. the Gaussian variance) and the Fisher information shrinks as
//! those coordinates grow, inflating them moves any optimum into the feasible
//! set without changing its reward.
//!
//! Everything here works at the parameter level: a feed is identified with
//! its estimate, and feasibility is the audit rule applied to parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{audit_statistic, AuditConfig};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::param::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    /// `R(theta) = -(theta_1 - target)^2`; ignores every other coordinate.
    MeanOnly { target: f64 },
    /// Reward tabulated on grid points; evaluation off the table is an error.
    GeneralGrid { table: Vec<(ParamVector, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub kind: RewardKind,
    /// Zero-based coordinates the reward does not depend on.
    pub omega: Vec<usize>,
}

impl RewardSpec {
    pub fn mean_only(target: f64, omega: Vec<usize>) -> Self {
        RewardSpec {
            kind: RewardKind::MeanOnly { target },
            omega,
        }
    }

    pub fn validate(&self, family: &Family) -> Result<()> {
        let r = family.dim();
        if let Some(&c) = self.omega.iter().find(|&&c| c >= r) {
            return Err(Error::validation(
                "omega",
                format!("coordinate {} out of range (r = {r})", c + 1),
            ));
        }
        match &self.kind {
            RewardKind::MeanOnly { target } => {
                if !target.is_finite() {
                    return Err(Error::validation("target", "must be finite"));
                }
                if self.omega.contains(&0) {
                    return Err(Error::validation(
                        "omega",
                        "a mean-only reward depends on coordinate 1",
                    ));
                }
            }
            RewardKind::GeneralGrid { table } => {
                if table.is_empty() {
                    return Err(Error::validation("table", "reward table is empty"));
                }
                for (theta, _) in table {
                    theta.expect_dim(r)?;
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, theta: &ParamVector) -> Result<f64> {
        match &self.kind {
            RewardKind::MeanOnly { target } => {
                let d = theta[0] - target;
                Ok(-d * d)
            }
            RewardKind::GeneralGrid { table } => table
                .iter()
                .find(|(point, _)| {
                    point
                        .values()
                        .iter()
                        .zip(theta.values())
                        .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
                })
                .map(|(_, reward)| *reward)
                .ok_or_else(|| Error::Domain(format!("reward table has no entry at {theta}"))),
        }
    }
}

/// How the counterfactual side's estimate relates to the candidate parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    /// The reference estimate is held fixed.
    Fixed,
    /// The platform shapes both feeds: the counterfactual estimate carries the
    /// candidate's values on these coordinates.
    SharedOmega(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleQuery {
    /// Estimate for the counterfactual input.
    pub reference: ParamVector,
    pub config: AuditConfig,
    pub coupling: Coupling,
}

impl FeasibleQuery {
    pub fn new(reference: ParamVector, config: AuditConfig, coupling: Coupling) -> Result<Self> {
        let q = FeasibleQuery {
            reference,
            config,
            coupling,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let family = &self.config.family;
        family.check_interior(&self.reference)?;
        if let Coupling::SharedOmega(coords) = &self.coupling {
            if let Some(&c) = coords.iter().find(|&&c| c >= family.dim()) {
                return Err(Error::validation(
                    "coupling",
                    format!("coordinate {} out of range", c + 1),
                ));
            }
        }
        Ok(())
    }

    pub fn effective_reference(&self, theta: &ParamVector) -> ParamVector {
        match &self.coupling {
            Coupling::Fixed => self.reference.clone(),
            Coupling::SharedOmega(coords) => {
                let mut v = self.reference.values().to_vec();
                for &c in coords {
                    v[c] = theta[c];
                }
                ParamVector::new(v)
            }
        }
    }
}

/// Audit statistic of a candidate parameter against the query's reference.
pub fn feasibility_statistic(theta: &ParamVector, query: &FeasibleQuery) -> Result<f64> {
    query.config.family.check_interior(theta)?;
    let reference = query.effective_reference(theta);
    Ok(audit_statistic(&query.config, theta, &reference)?.0)
}

/// Whether a platform whose feed for `x` has parameter `theta` passes the audit.
pub fn is_feasible(theta: &ParamVector, query: &FeasibleQuery) -> Result<bool> {
    Ok(feasibility_statistic(theta, query)? < query.config.threshold()?)
}

/// Cartesian grid over the parameter space; each axis is sorted ascending so
/// iteration order is lexicographic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Vec<f64>>,
}

impl GridSpec {
    pub fn new(mut axes: Vec<Vec<f64>>) -> Result<Self> {
        for (i, axis) in axes.iter_mut().enumerate() {
            if axis.is_empty() {
                return Err(Error::validation(format!("grid axis {}", i + 1), "is empty"));
            }
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("grid axis {}", i + 1), "non-finite value"));
            }
            axis.sort_by(f64::total_cmp);
            axis.dedup();
        }
        Ok(GridSpec { axes })
    }

    pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `k`-th point in lexicographic order.
    pub fn point(&self, mut k: usize) -> ParamVector {
        let mut v = vec![0.0; self.axes.len()];
        for (i, axis) in self.axes.iter().enumerate().rev() {
            v[i] = axis[k % axis.len()];
            k /= axis.len();
        }
        ParamVector::new(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub theta: ParamVector,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegCostReport {
    pub unconstrained_opt: Optimum,
    pub constrained_opt: Option<Optimum>,
    /// `+inf` when no grid point is feasible.
    #[serde(with = "crate::serde_f64")]
    pub cost: f64,
    pub infeasible_everywhere: bool,
    pub witness_kappa: Option<f64>,
    pub grid_points: usize,
    pub feasible_points: usize,
    pub assumptions: Vec<String>,
}

const RICHNESS_NOTE: &str =
    "every interior parameter is assumed realizable by some feed built from the available content";

/// Maximizes the reward over the whole grid and over its feasible part.
/// Ties go to the lexicographically smallest parameter.
pub fn cost_of_regulation(
    reward: &RewardSpec,
    query: &FeasibleQuery,
    grid: &GridSpec,
) -> Result<RegCostReport> {
    let family = &query.config.family;
    reward.validate(family)?;
    query.validate()?;
    if grid.axes.len() != family.dim() {
        return Err(Error::Dimension {
            expected: family.dim(),
            got: grid.axes.len(),
        });
    }
    let threshold = query.config.threshold()?;
    let cells = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let theta = grid.point(k);
            family
                .check_interior(&theta)
                .map_err(|e| Error::validation("grid", format!("point {theta}: {e}")))?;
            let value = reward.eval(&theta)?;
            let feasible = feasibility_statistic(&theta, query)? < threshold;
            Ok((theta, value, feasible))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<&(ParamVector, f64, bool)> = None;
    let mut best_feasible: Option<&(ParamVector, f64, bool)> = None;
    for cell in &cells {
        if best.is_none_or(|b| cell.1 > b.1) {
            best = Some(cell);
        }
        if cell.2 && best_feasible.is_none_or(|b| cell.1 > b.1) {
            best_feasible = Some(cell);
        }
    }
    let best = best.expect("grid is non-empty");
    let unconstrained_opt = Optimum {
        theta: best.0.clone(),
        reward: best.1,
    };
    let constrained_opt = best_feasible.map(|c| Optimum {
        theta: c.0.clone(),
        reward: c.1,
    });
    let cost = match &constrained_opt {
        Some(c) => unconstrained_opt.reward - c.reward,
        None => f64::INFINITY,
    };
    let witness_kappa = if reward.omega.is_empty() {
        None
    } else {
        inflation_witness(reward, query, &unconstrained_opt.theta)
            .ok()
            .map(|(kappa, _)| kappa)
    };
    Ok(RegCostReport {
        infeasible_everywhere: constrained_opt.is_none(),
        feasible_points: cells.iter().filter(|c| c.2).count(),
        grid_points: cells.len(),
        unconstrained_opt,
        constrained_opt,
        cost,
        witness_kappa,
        assumptions: vec![RICHNESS_NOTE.to_string()],
    })
}

const KAPPA_MAX: f64 = 1e9;

fn inflate(theta: &ParamVector, omega: &[usize], kappa: f64) -> ParamVector {
    let mut v = theta.values().to_vec();
    for &c in omega {
        v[c] += kappa;
    }
    ParamVector::new(v)
}

/// Smallest `kappa` (doubling, then bisection) for which
/// `theta_star + kappa * 1_omega` passes the audit with its reward unchanged.
pub fn inflation_witness(
    reward: &RewardSpec,
    query: &FeasibleQuery,
    theta_star: &ParamVector,
) -> Result<(f64, ParamVector)> {
    let family = &query.config.family;
    reward.validate(family)?;
    query.validate()?;
    if reward.omega.is_empty() {
        return Err(Error::WitnessNotFound(
            "the reward depends on every coordinate (omega is empty)".into(),
        ));
    }
    family.check_interior(theta_star)?;
    let target = reward.eval(theta_star)?;
    let omega = &reward.omega;
    let feasible_at = |kappa: f64| -> Result<bool> {
        let theta = inflate(theta_star, omega, kappa);
        if family.check_interior(&theta).is_err() {
            return Ok(false);
        }
        is_feasible(&theta, query)
    };

    let kappa = if feasible_at(0.0)? {
        0.0
    } else {
        let mut hi = 1.0;
        while !feasible_at(hi)? {
            hi *= 2.0;
            if hi > KAPPA_MAX {
                return Err(Error::WitnessNotFound(format!(
                    "no kappa <= {KAPPA_MAX:e} makes {theta_star} feasible"
                )));
            }
        }
        let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
        while hi - lo > 1e-12 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if feasible_at(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let witness = inflate(theta_star, omega, kappa);
    if reward.eval(&witness)? != target {
        return Err(Error::WitnessNotFound(format!(
            "reward changes along omega at {witness}"
        )));
    }
    Ok((kappa, witness))
}

/// `v^T I(theta + kappa * 1_omega) v` for a fixed difference vector `v`.
pub fn inflation_statistic(
    family: &Family,
    theta: &ParamVector,
    omega: &[usize],
    v: &[f64],
    kappa: f64,
) -> Result<f64> {
    let fisher = family.fisher_information(&inflate(theta, omega, kappa))?;
    Ok(fisher.quadratic_form(v))
}

/// `v^T (I(z1) - I(z0)) v`; positive when the feed behind `z0` is more diverse along `v`.
pub fn diversity_compare(
    family: &Family,
    z0: &ParamVector,
    z1: &ParamVector,
    v: &[f64],
) -> Result<f64> {
    if v.len() != family.dim() {
        return Err(Error::Dimension {
            expected: family.dim(),
            got: v.len(),
        });
    }
    let i0 = family.fisher_information(z0)?;
    let i1 = family.fisher_information(z1)?;
    Ok(i1.quadratic_form(v) - i0.quadratic_form(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec())
    }

    fn mean_shift_query(coupling: Coupling) -> FeasibleQuery {
        FeasibleQuery::new(
            p(&[0.0, 1.0]),
            AuditConfig::new(Family::Gaussian1D, 0.05, 100).unwrap(),
            coupling,
        )
        .unwrap()
    }

    #[test]
    fn feasibility_hand_values() {
        let q = mean_shift_query(Coupling::SharedOmega(vec![1]));
        assert!(is_feasible(&p(&[0.0, 1.0]), &q).unwrap());
        assert_abs_diff_eq!(feasibility_statistic(&p(&[0.5, 1.0]), &q).unwrap(), 0.25);
        assert!(!is_feasible(&p(&[0.5, 1.0]), &q).unwrap());
        assert_abs_diff_eq!(feasibility_statistic(&p(&[0.5, 4.0]), &q).unwrap(), 0.0625);
        assert!(is_feasible(&p(&[0.5, 4.0]), &q).unwrap());
    }

    #[test]
    fn fixed_reference_counts_the_variance_gap() {
        let q = mean_shift_query(Coupling::Fixed);
        // v = (0.5, 3): 0.25/4 + 9/(2*16)
        assert_abs_diff_eq!(
            feasibility_statistic(&p(&[0.5, 4.0]), &q).unwrap(),
            0.0625 + 0.281_25,
            epsilon = 1e-15
        );
        let reward = RewardSpec::mean_only(0.5, vec![1]);
        assert!(matches!(
            inflation_witness(&reward, &q, &p(&[0.5, 1.0])),
            Err(Error::WitnessNotFound(_))
        ));
    }

    #[test]
    fn is_feasible_rejects_boundary() {
        let q = mean_shift_query(Coupling::Fixed);
        assert!(is_feasible(&p(&[0.0, 0.0]), &q).is_err());
    }

    #[test]
    fn grid_points_are_lexicographic() {
        let g = GridSpec::new(vec![vec![1.0, 0.0], vec![4.0, 1.0]]).unwrap();
        let pts: Vec<_> = (0..g.len()).map(|k| g.point(k)).collect();
        assert_eq!(
            pts,
            vec![p(&[0.0, 1.0]), p(&[0.0, 4.0]), p(&[1.0, 1.0]), p(&[1.0, 4.0])]
        );
        assert!(GridSpec::new(vec![vec![]]).is_err());
        assert_eq!(GridSpec::linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn mean_shift_costs() {
        let reward = RewardSpec::mean_only(0.5, vec![1]);
        let q = mean_shift_query(Coupling::SharedOmega(vec![1]));
        let means = GridSpec::linspace(-1.0, 1.0, 41);

        let narrow = GridSpec::new(vec![means.clone(), vec![1.0]]).unwrap();
        let report = cost_of_regulation(&reward, &q, &narrow).unwrap();
        assert!(report.cost > 0.0);
        assert_eq!(report.unconstrained_opt.theta, p(&[0.5, 1.0]));

        let wide = GridSpec::new(vec![means, vec![1.0, 4.0, 16.0]]).unwrap();
        let report = cost_of_regulation(&reward, &q, &wide).unwrap();
        assert!(report.cost.abs() <= 1e-9);
        assert_eq!(report.constrained_opt.unwrap().theta, p(&[0.5, 4.0]));
        assert_abs_diff_eq!(report.witness_kappa.unwrap(), 1.0863, epsilon = 1e-3);
    }

    #[test]
    fn cost_zero_when_everything_is_feasible() {
        let reward = RewardSpec::mean_only(0.5, vec![1]);
        let q = FeasibleQuery::new(
            p(&[0.0, 1.0]),
            AuditConfig::new(Family::Gaussian1D, 0.0, 100).unwrap(),
            Coupling::Fixed,
        )
        .unwrap();
        let grid = GridSpec::new(vec![GridSpec::linspace(-1.0, 1.0, 9), vec![1.0, 2.0]]).unwrap();
        let report = cost_of_regulation(&reward, &q, &grid).unwrap();
        assert_eq!(report.cost, 0.0);
        assert_eq!(report.feasible_points, report.grid_points);
    }

    #[test]
    fn infeasible_everywhere_is_flagged_not_raised() {
        let reward = RewardSpec::mean_only(0.5, vec![]);
        let q = FeasibleQuery::new(
            p(&[0.0, 1.0]),
            AuditConfig::new(Family::Gaussian1D, 1.0, 100).unwrap(),
            Coupling::Fixed,
        )
        .unwrap();
        let grid = GridSpec::new(vec![vec![0.5, 1.0], vec![1.0]]).unwrap();
        let report = cost_of_regulation(&reward, &q, &grid).unwrap();
        assert!(report.infeasible_everywhere);
        assert!(report.constrained_opt.is_none());
        assert_eq!(report.cost, f64::INFINITY);
    }

    #[test]
    fn witness_zero_when_already_feasible() {
        let reward = RewardSpec::mean_only(0.0, vec![1]);
        let q = mean_shift_query(Coupling::SharedOmega(vec![1]));
        let (kappa, w) = inflation_witness(&reward, &q, &p(&[0.1, 1.0])).unwrap();
        assert_eq!(kappa, 0.0);
        assert_eq!(w, p(&[0.1, 1.0]));
    }

    #[test]
    fn diversity_examples() {
        let g = Family::Gaussian1D;
        assert_eq!(diversity_compare(&g, &p(&[0.0, 1.0]), &p(&[0.0, 1.0]), &[1.0, 1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            diversity_compare(&g, &p(&[0.0, 4.0]), &p(&[0.0, 1.0]), &[1.0, 0.0]).unwrap(),
            0.75
        );
        assert_abs_diff_eq!(
            diversity_compare(&g, &p(&[0.0, 4.0]), &p(&[0.0, 1.0]), &[0.0, 1.0]).unwrap(),
            0.468_75
        );
        assert!(diversity_compare(&g, &p(&[0.0, 0.0]), &p(&[0.0, 1.0]), &[1.0, 0.0]).is_err());
    }

    #[test]
    fn reward_validation() {
        assert!(RewardSpec::mean_only(0.0, vec![0]).validate(&Family::Gaussian1D).is_err());
        assert!(RewardSpec::mean_only(0.0, vec![2]).validate(&Family::Gaussian1D).is_err());
        let table = RewardSpec {
            kind: RewardKind::GeneralGrid {
                table: vec![(p(&[0.0, 1.0]), 3.0)],
            },
            omega: vec![],
        };
        assert_eq!(table.eval(&p(&[0.0, 1.0])).unwrap(), 3.0);
        assert!(table.eval(&p(&[0.0, 2.0])).is_err());
    }
}
