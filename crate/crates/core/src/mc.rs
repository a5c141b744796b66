//! Deterministic Monte Carlo experiments.
//!
//! Every trial draws from streams derived from `(master_seed, experiment, group, trial)`,
//! trials run on the rayon pool, and results are reduced in trial-index
//! order. Re-running a plan is bit-identical regardless of thread count.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::audit::{audit_pair, AuditConfig, CounterfactualPair, InfoPoint};
use crate::decision::{calibrate_eta, choice_rate, EstimatorSpec, ValuePair};
use crate::error::{Error, Result};
use crate::family::{Estimator, Family};
use crate::param::ParamVector;
use crate::platform::{make_platform, PlatformSpec};
use crate::regcost::{
    cost_of_regulation, feasibility_statistic, Coupling, FeasibleQuery, GridSpec, RewardSpec,
};
use crate::rng::{derive_seed, derive_seed_str, stream_rng};

/// Normal quantile for two-sided 99% intervals.
pub const Z99: f64 = 2.576;

const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    FprCalibration,
    PowerCurve,
    Unbiasedness,
    ZTestEquivalence,
    GullibilityPanel,
    DiversitySweep,
    CostSweep,
}

impl ExperimentId {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentId::FprCalibration => "fpr-calibration",
            ExperimentId::PowerCurve => "power-curve",
            ExperimentId::Unbiasedness => "unbiasedness",
            ExperimentId::ZTestEquivalence => "z-test-equivalence",
            ExperimentId::GullibilityPanel => "gullibility-panel",
            ExperimentId::DiversitySweep => "diversity-sweep",
            ExperimentId::CostSweep => "cost-sweep",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            ExperimentId::FprCalibration,
            ExperimentId::PowerCurve,
            ExperimentId::Unbiasedness,
            ExperimentId::ZTestEquivalence,
            ExperimentId::GullibilityPanel,
            ExperimentId::DiversitySweep,
            ExperimentId::CostSweep,
        ]
        .into_iter()
        .find(|id| id.name() == name)
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the audit evaluates Fisher information inside an experiment.
/// `Oracle` uses the midpoint of the true parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfoKind {
    ThetaTilde,
    Midpoint,
    Oracle,
}

/// Rejection-rate experiment: audits a platform mapping `x -> theta`, `x' -> theta_prime`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionParams {
    pub family: Family,
    pub theta: ParamVector,
    pub theta_prime: ParamVector,
    pub epsilons: Vec<f64>,
    pub ms: Vec<usize>,
    pub trials: usize,
    pub info: InfoKind,
    pub estimator: Estimator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessParams {
    pub family: Family,
    pub thetas: Vec<ParamVector>,
    pub m: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTestParams {
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GullibilityParams {
    pub family: Family,
    pub theta: ParamVector,
    pub theta_prime: ParamVector,
    /// Point on the `v1 = v0` boundary used to calibrate the decision threshold.
    pub theta0: ParamVector,
    pub values: ValuePair,
    pub rho: f64,
    pub m: usize,
    pub trials: usize,
    pub panel: Vec<EstimatorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityParams {
    pub family: Family,
    pub theta_star: ParamVector,
    pub reference: ParamVector,
    pub omega: Vec<usize>,
    pub epsilon: f64,
    pub m: usize,
    pub kappas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSweepParams {
    pub reward: RewardSpec,
    pub family: Family,
    pub reference: ParamVector,
    pub coupling: Coupling,
    pub m: usize,
    pub epsilons: Vec<f64>,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    FprCalibration(RejectionParams),
    PowerCurve(RejectionParams),
    Unbiasedness(UnbiasednessParams),
    ZTestEquivalence(ZTestParams),
    GullibilityPanel(GullibilityParams),
    DiversitySweep(DiversityParams),
    CostSweep(CostSweepParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub experiment: Experiment,
    pub master_seed: u64,
}

impl ExperimentPlan {
    pub fn id(&self) -> ExperimentId {
        match &self.experiment {
            Experiment::FprCalibration(_) => ExperimentId::FprCalibration,
            Experiment::PowerCurve(_) => ExperimentId::PowerCurve,
            Experiment::Unbiasedness(_) => ExperimentId::Unbiasedness,
            Experiment::ZTestEquivalence(_) => ExperimentId::ZTestEquivalence,
            Experiment::GullibilityPanel(_) => ExperimentId::GullibilityPanel,
            Experiment::DiversitySweep(_) => ExperimentId::DiversitySweep,
            Experiment::CostSweep(_) => ExperimentId::CostSweep,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.experiment {
            Experiment::FprCalibration(p) | Experiment::PowerCurve(p) => {
                check_trials(p.trials)?;
                check_interior(&p.family, &p.theta, "theta")?;
                check_interior(&p.family, &p.theta_prime, "theta_prime")?;
                if self.id() == ExperimentId::FprCalibration && p.theta != p.theta_prime {
                    return Err(Error::validation(
                        "theta_prime",
                        "false-positive calibration needs theta_prime = theta",
                    ));
                }
                check_epsilons(&p.epsilons)?;
                check_ms(&p.family, &p.ms)?;
            }
            Experiment::Unbiasedness(p) => {
                check_trials(p.trials)?;
                if p.thetas.is_empty() {
                    return Err(Error::validation("thetas", "at least one parameter is required"));
                }
                for theta in &p.thetas {
                    check_interior(&p.family, theta, "thetas")?;
                }
                check_ms(&p.family, &[p.m])?;
            }
            Experiment::ZTestEquivalence(p) => check_trials(p.trials)?,
            Experiment::GullibilityPanel(p) => {
                check_trials(p.trials)?;
                check_interior(&p.family, &p.theta, "theta")?;
                check_interior(&p.family, &p.theta_prime, "theta_prime")?;
                check_interior(&p.family, &p.theta0, "theta0")?;
                check_ms(&p.family, &[p.m])?;
                p.values.validate(&p.family)?;
                if !(p.rho > 0.0 && p.rho < 1.0) {
                    return Err(Error::validation("rho", "must lie in (0,1)"));
                }
                for spec in &p.panel {
                    spec.validate(&p.family)
                        .map_err(|e| Error::validation("panel", e.to_string()))?;
                }
            }
            Experiment::DiversitySweep(p) => {
                check_interior(&p.family, &p.theta_star, "theta_star")?;
                check_interior(&p.family, &p.reference, "reference")?;
                check_epsilons(&[p.epsilon])?;
                if p.kappas.is_empty() || p.kappas.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
                    return Err(Error::validation("kappas", "need finite values >= 0"));
                }
                if p.omega.is_empty() || p.omega.iter().any(|&c| c >= p.family.dim()) {
                    return Err(Error::validation("omega", "need coordinates within the family"));
                }
                if p.m == 0 {
                    return Err(Error::validation("m", "must be positive"));
                }
            }
            Experiment::CostSweep(p) => {
                check_interior(&p.family, &p.reference, "reference")?;
                check_epsilons(&p.epsilons)?;
                p.reward.validate(&p.family)?;
                if p.m == 0 {
                    return Err(Error::validation("m", "must be positive"));
                }
            }
        }
        Ok(())
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::validation(
            "trials",
            format!("need at least {MIN_TRIALS}, got {trials}"),
        ));
    }
    Ok(())
}

fn check_interior(family: &Family, theta: &ParamVector, field: &str) -> Result<()> {
    family
        .check_interior(theta)
        .map_err(|e| Error::validation(field, e.to_string()))
}

fn check_epsilons(epsilons: &[f64]) -> Result<()> {
    if epsilons.is_empty() || epsilons.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::validation("epsilons", "need values in [0,1]"));
    }
    Ok(())
}

fn check_ms(family: &Family, ms: &[usize]) -> Result<()> {
    let min = if *family == Family::Gaussian1D { 2 } else { 1 };
    if ms.is_empty() || ms.iter().any(|&m| m < min) {
        return Err(Error::validation("ms", format!("need feed lengths >= {min}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Which curve the point belongs to, e.g. `eps=0.05`.
    pub series: String,
    pub abscissa: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// 99% normal-approximation half-interval (at least `1/trials` for proportions).
    pub half_width: f64,
    pub trials: usize,
    /// Value the estimate is supposed to approach, when there is one.
    pub target: Option<f64>,
}

impl CurvePoint {
    fn proportion(series: String, abscissa: f64, hits: usize, trials: usize, target: Option<f64>) -> Self {
        let n = trials as f64;
        let p = hits as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        CurvePoint {
            series,
            abscissa,
            estimate: p,
            std_error: se,
            half_width: (Z99 * se).max(1.0 / n),
            trials,
            target,
        }
    }

    fn exact(series: String, abscissa: f64, value: f64, target: Option<f64>) -> Self {
        CurvePoint {
            series,
            abscissa,
            estimate: value,
            std_error: 0.0,
            half_width: 0.0,
            trials: 0,
            target,
        }
    }
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<CurvePoint>> {
    plan.validate()?;
    let seed = derive_seed_str(plan.master_seed, plan.id().name());
    let mut points = match &plan.experiment {
        Experiment::FprCalibration(p) | Experiment::PowerCurve(p) => rejection_curve(p, seed)?,
        Experiment::Unbiasedness(p) => unbiasedness(p, seed)?,
        Experiment::ZTestEquivalence(p) => z_test_equivalence(p, seed)?,
        Experiment::GullibilityPanel(p) => gullibility(p, seed)?,
        Experiment::DiversitySweep(p) => diversity_sweep(p)?,
        Experiment::CostSweep(p) => cost_sweep(p)?,
    };
    // stable: keeps generation order among equal abscissae
    points.sort_by(|a, b| a.abscissa.total_cmp(&b.abscissa));
    Ok(points)
}

fn rejection_curve(p: &RejectionParams, seed: u64) -> Result<Vec<CurvePoint>> {
    let platform = make_platform(PlatformSpec::lookup(
        p.family,
        [("x", p.theta.clone()), ("x'", p.theta_prime.clone())],
    ))?;
    let info_point = match p.info {
        InfoKind::ThetaTilde => InfoPoint::AtThetaTilde,
        InfoKind::Midpoint => InfoPoint::AtMidpoint,
        InfoKind::Oracle => InfoPoint::AtOracleTheta(p.theta.midpoint(&p.theta_prime)),
    };
    let pair = CounterfactualPair::new("x", "x'", "mc");
    let mut points = Vec::new();
    for (gi, &m) in p.ms.iter().enumerate() {
        let config = AuditConfig::new(p.family, 0.5, m)?
            .with_estimator(p.estimator)
            .with_info_point(info_point.clone())?;
        let thresholds = p
            .epsilons
            .iter()
            .map(|&eps| config.clone().with_epsilon(eps)?.threshold())
            .collect::<Result<Vec<f64>>>()?;
        let group = derive_seed(seed, gi as u64);
        // one audit per trial; every epsilon is judged on the same statistic
        let statistics = (0..p.trials)
            .into_par_iter()
            .map(|t| Ok(audit_pair(&config, &platform, &pair, derive_seed(group, t as u64))?.statistic))
            .collect::<Result<Vec<f64>>>()?;
        for (eps, threshold) in p.epsilons.iter().zip(&thresholds) {
            let hits = statistics.iter().filter(|&&s| s >= *threshold).count();
            let target = (p.theta == p.theta_prime).then_some(*eps);
            points.push(CurvePoint::proportion(
                format!("eps={eps}"),
                m as f64,
                hits,
                p.trials,
                target,
            ));
        }
    }
    Ok(points)
}

fn unbiasedness(p: &UnbiasednessParams, seed: u64) -> Result<Vec<CurvePoint>> {
    let mut points = Vec::new();
    for (i, theta) in p.thetas.iter().enumerate() {
        let group = derive_seed(seed, i as u64);
        let estimates = (0..p.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream_rng(derive_seed(group, t as u64), 0);
                let feed = p.family.sample_feed_with(theta, p.m, &mut rng)?;
                p.family.mvue(&feed)
            })
            .collect::<Result<Vec<ParamVector>>>()?;
        let n = p.trials as f64;
        for j in 0..p.family.dim() {
            let mean = estimates.iter().map(|e| e[j]).sum::<f64>() / n;
            let var = estimates.iter().map(|e| (e[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            points.push(CurvePoint {
                series: format!("coord={}", j + 1),
                abscissa: i as f64,
                estimate: mean,
                std_error: se,
                half_width: Z99 * se,
                trials: p.trials,
                target: Some(theta[j]),
            });
        }
    }
    Ok(points)
}

/// One random known-variance instance and whether the audit and the
/// two-sided two-sample z-test agree on it.
fn z_test_instance(seed: u64) -> Result<bool> {
    use rand::Rng;
    let mut rng = stream_rng(seed, 0);
    let variance = rng.random_range(0.25..4.0);
    let m: usize = rng.random_range(2..=400);
    let epsilon = rng.random_range(0.001..0.5);
    let mu = rng.random_range(-1.0..1.0);
    let shift = rng.random_range(-4.0..4.0) * (variance / m as f64).sqrt();
    let family = Family::gaussian_known_var(variance)?;
    let platform = make_platform(PlatformSpec::lookup(
        family,
        [("x", ParamVector::scalar(mu)), ("x'", ParamVector::scalar(mu + shift))],
    ))?;
    let config = AuditConfig::new(family, epsilon, m)?;
    let verdict = audit_pair(
        &config,
        &platform,
        &CounterfactualPair::new("x", "x'", "z"),
        derive_seed(seed, 1),
    )?;

    let diff = verdict.theta_tilde[0] - verdict.theta_tilde_prime[0];
    let z = diff / (2.0 * variance / m as f64).sqrt();
    let critical = Normal::standard().inverse_cdf(1.0 - epsilon / 2.0);
    Ok(verdict.is_h1() == (z.abs() >= critical))
}

fn z_test_equivalence(p: &ZTestParams, seed: u64) -> Result<Vec<CurvePoint>> {
    let agree = (0..p.trials)
        .into_par_iter()
        .map(|t| z_test_instance(derive_seed(seed, t as u64)))
        .collect::<Result<Vec<bool>>>()?;
    let hits = agree.iter().filter(|&&a| a).count();
    Ok(vec![CurvePoint::proportion(
        "agreement".into(),
        0.0,
        hits,
        p.trials,
        Some(1.0),
    )])
}

fn gullibility(p: &GullibilityParams, seed: u64) -> Result<Vec<CurvePoint>> {
    let eta = calibrate_eta(&p.values, &p.family, &p.theta0, p.m, p.rho, p.trials, derive_seed(seed, 0))?;
    let fpr = choice_rate(
        &p.family,
        &p.theta0,
        &EstimatorSpec::Mvue,
        &p.values,
        eta,
        p.m,
        p.trials,
        derive_seed(seed, 1),
    )?;
    let hits = (fpr * p.trials as f64).round() as usize;
    let mut points = vec![CurvePoint::proportion(
        "calibration-fpr".into(),
        0.0,
        hits,
        p.trials,
        Some(p.rho),
    )];
    let mut specs = vec![EstimatorSpec::Mvue];
    specs.extend(p.panel.iter().cloned());
    for (k, spec) in specs.iter().enumerate() {
        // shared seeds across users: every user sees the same feeds
        let a = choice_rate(&p.family, &p.theta, spec, &p.values, eta, p.m, p.trials, derive_seed(seed, 2))?;
        let b = choice_rate(&p.family, &p.theta_prime, spec, &p.values, eta, p.m, p.trials, derive_seed(seed, 3))?;
        let n = p.trials as f64;
        let se = (a * (1.0 - a) / n + b * (1.0 - b) / n).sqrt();
        points.push(CurvePoint {
            series: spec.label(),
            abscissa: (k + 1) as f64,
            estimate: (a - b).abs(),
            std_error: se,
            half_width: (Z99 * se).max(1.0 / n),
            trials: p.trials,
            target: None,
        });
    }
    Ok(points)
}

fn diversity_sweep(p: &DiversityParams) -> Result<Vec<CurvePoint>> {
    let config = AuditConfig::new(p.family, p.epsilon, p.m)?;
    let threshold = config.threshold()?;
    let query = FeasibleQuery::new(p.reference.clone(), config, Coupling::SharedOmega(p.omega.clone()))?;
    p.kappas
        .iter()
        .map(|&kappa| {
            let mut theta = p.theta_star.values().to_vec();
            for &c in &p.omega {
                theta[c] += kappa;
            }
            let stat = feasibility_statistic(&ParamVector::new(theta), &query)?;
            Ok(CurvePoint::exact("statistic".into(), kappa, stat, Some(threshold)))
        })
        .collect()
}

fn cost_sweep(p: &CostSweepParams) -> Result<Vec<CurvePoint>> {
    p.epsilons
        .iter()
        .map(|&eps| {
            let config = AuditConfig::new(p.family, eps, p.m)?;
            let query = FeasibleQuery::new(p.reference.clone(), config, p.coupling.clone())?;
            let report = cost_of_regulation(&p.reward, &query, &p.grid)?;
            Ok(CurvePoint::exact("cost".into(), eps, report.cost, None))
        })
        .collect()
}

/// Outcome of checking a [`Claim`] against a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub claim: String,
    pub passed: bool,
    pub checked: usize,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub series: String,
    pub abscissa: f64,
    pub estimate: f64,
}

/// Declarative bound over curve points, e.g.
/// `|estimate - target| <= 0.015 when abscissa >= 2000`.
///
/// Expressions are linear combinations of numbers and the point fields
/// `estimate`, `target`, `half_width`, `std_error`, `abscissa`, with `+ - *`,
/// parentheses and `|..|` for absolute value. Comparisons: `< <= > >= ==`.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    text: String,
    bound: Comparison,
    condition: Option<Comparison>,
}

#[derive(Debug, Clone, PartialEq)]
struct Comparison {
    lhs: Expr,
    op: CmpOp,
    rhs: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Num(f64),
    Var(Field),
    Neg(Box<Expr>),
    Abs(Box<Expr>),
    Bin(Box<Expr>, char, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Field {
    Estimate,
    Target,
    HalfWidth,
    StdError,
    Abscissa,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(&'static str),
}

fn tokenize(text: &str) -> Result<Vec<Tok>> {
    let bad = |msg: String| Error::validation("claim", msg);
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric()
                    || chars[i] == '.'
                    || ((chars[i] == '-' || chars[i] == '+') && matches!(chars[i - 1], 'e' | 'E')))
            {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            toks.push(Tok::Num(s.parse().map_err(|_| bad(format!("bad number '{s}'")))?));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push(Tok::Ident(chars[start..i].iter().collect()));
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let sym = match two.as_str() {
                "<=" => Some("<="),
                ">=" => Some(">="),
                "==" => Some("=="),
                _ => None,
            };
            if let Some(s) = sym {
                toks.push(Tok::Sym(s));
                i += 2;
                continue;
            }
            let s = match c {
                '<' => "<",
                '>' => ">",
                '+' => "+",
                '-' => "-",
                '*' => "*",
                '(' => "(",
                ')' => ")",
                '|' => "|",
                _ => return Err(bad(format!("unexpected character '{c}'"))),
            };
            toks.push(Tok::Sym(s));
            i += 1;
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn err(&self, msg: &str) -> Error {
        Error::validation("claim", format!("{msg} at token {}", self.pos + 1))
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(t)) if *t == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn comparison(&mut self) -> Result<Comparison> {
        let lhs = self.expr()?;
        let op = match self.peek() {
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            Some(Tok::Sym("==")) => CmpOp::Eq,
            _ => return Err(self.err("expected a comparison operator")),
        };
        self.pos += 1;
        let rhs = self.expr()?;
        Ok(Comparison { lhs, op, rhs })
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat_sym("+") {
                '+'
            } else if self.eat_sym("-") {
                '-'
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Bin(Box::new(lhs), op, Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.atom()?;
        while self.eat_sym("*") {
            let rhs = self.atom()?;
            lhs = Expr::Bin(Box::new(lhs), '*', Box::new(rhs));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Expr> {
        if self.eat_sym("-") {
            return Ok(Expr::Neg(Box::new(self.atom()?)));
        }
        if self.eat_sym("(") {
            let e = self.expr()?;
            if !self.eat_sym(")") {
                return Err(self.err("expected ')'"));
            }
            return Ok(e);
        }
        if self.eat_sym("|") {
            let e = self.expr()?;
            if !self.eat_sym("|") {
                return Err(self.err("expected closing '|'"));
            }
            return Ok(Expr::Abs(Box::new(e)));
        }
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Ident(name)) => {
                let field = match name.as_str() {
                    "estimate" => Field::Estimate,
                    "target" => Field::Target,
                    "half_width" => Field::HalfWidth,
                    "std_error" => Field::StdError,
                    "abscissa" => Field::Abscissa,
                    _ => return Err(self.err(&format!("unknown variable '{name}'"))),
                };
                self.pos += 1;
                Ok(Expr::Var(field))
            }
            _ => Err(self.err("expected a number or variable")),
        }
    }
}

impl Expr {
    fn eval(&self, p: &CurvePoint) -> Result<f64> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(Field::Estimate) => p.estimate,
            Expr::Var(Field::Target) => p.target.ok_or_else(|| {
                Error::validation("claim", format!("point '{}' has no target", p.series))
            })?,
            Expr::Var(Field::HalfWidth) => p.half_width,
            Expr::Var(Field::StdError) => p.std_error,
            Expr::Var(Field::Abscissa) => p.abscissa,
            Expr::Neg(e) => -e.eval(p)?,
            Expr::Abs(e) => e.eval(p)?.abs(),
            Expr::Bin(a, op, b) => {
                let (a, b) = (a.eval(p)?, b.eval(p)?);
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    _ => a * b,
                }
            }
        })
    }
}

impl Comparison {
    fn holds(&self, p: &CurvePoint) -> Result<bool> {
        let (a, b) = (self.lhs.eval(p)?, self.rhs.eval(p)?);
        Ok(match self.op {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
        })
    }
}

impl Claim {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::validation("claim", "bound expression is empty"));
        }
        let toks = tokenize(text)?;
        let split = toks.iter().position(|t| matches!(t, Tok::Ident(s) if s == "when"));
        let (bound_toks, cond_toks) = match split {
            Some(i) => (toks[..i].to_vec(), Some(toks[i + 1..].to_vec())),
            None => (toks, None),
        };
        let parse_cmp = |toks: Vec<Tok>| -> Result<Comparison> {
            let mut parser = Parser { toks, pos: 0 };
            let c = parser.comparison()?;
            if parser.pos != parser.toks.len() {
                return Err(parser.err("trailing input"));
            }
            Ok(c)
        };
        Ok(Claim {
            text: text.trim().to_string(),
            bound: parse_cmp(bound_toks)?,
            condition: cond_toks.map(parse_cmp).transpose()?,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// Checks `claim` on every point it applies to and lists the violators.
pub fn summarize(points: &[CurvePoint], claim: &Claim) -> Result<SummaryRecord> {
    if points.is_empty() {
        return Err(Error::validation("points", "no curve points to summarize"));
    }
    let mut violations = Vec::new();
    let mut checked = 0;
    for p in points {
        if let Some(cond) = &claim.condition {
            if !cond.holds(p)? {
                continue;
            }
        }
        checked += 1;
        if !claim.bound.holds(p)? {
            violations.push(Violation {
                series: p.series.clone(),
                abscissa: p.abscissa,
                estimate: p.estimate,
            });
        }
    }
    Ok(SummaryRecord {
        claim: claim.text.clone(),
        passed: violations.is_empty(),
        checked,
        violations,
    })
}

/// Parses `claim` and summarizes in one step.
pub fn summarize_text(points: &[CurvePoint], claim: &str) -> Result<SummaryRecord> {
    summarize(points, &Claim::parse(claim)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(abscissa: f64, estimate: f64) -> CurvePoint {
        CurvePoint {
            series: "s".into(),
            abscissa,
            estimate,
            std_error: 0.0,
            half_width: 0.01,
            trials: 100,
            target: Some(0.05),
        }
    }

    #[test]
    fn summarize_pass_and_fail() {
        let pts = vec![point(100.0, 0.06), point(500.0, 0.055), point(2000.0, 0.05)];
        let ok = summarize_text(&pts, "estimate <= target + half_width + 0.001").unwrap();
        assert!(ok.passed);
        assert!(ok.violations.is_empty());
        assert_eq!(ok.checked, 3);

        let bad = summarize_text(&pts, "|estimate - target| <= 0.006").unwrap();
        assert!(!bad.passed);
        assert_eq!(bad.violations.len(), 1);
        assert_eq!(bad.violations[0].abscissa, 100.0);

        let cond = summarize_text(&pts, "|estimate - target| <= 0.006 when abscissa >= 500").unwrap();
        assert!(cond.passed);
        assert_eq!(cond.checked, 2);
    }

    #[test]
    fn claim_errors() {
        assert!(Claim::parse("").is_err());
        assert!(Claim::parse("   ").is_err());
        assert!(Claim::parse("estimate").is_err());
        assert!(Claim::parse("estimat <= 1").is_err());
        assert!(Claim::parse("estimate <= 1 2").is_err());
        assert!(Claim::parse("|estimate <= 1").is_err());
        assert!(Claim::parse("-estimate >= -1e-3 when abscissa > 2").is_ok());
        assert!(summarize_text(&[], "estimate <= 1").is_err());
    }

    #[test]
    fn zero_trials_is_a_validation_error() {
        let plan = ExperimentPlan {
            experiment: Experiment::Unbiasedness(UnbiasednessParams {
                family: Family::Bernoulli,
                thetas: vec![ParamVector::scalar(0.5)],
                m: 10,
                trials: 0,
            }),
            master_seed: 1,
        };
        let err = run_experiment(&plan).unwrap_err();
        assert!(err.to_string().contains("trials"), "{err}");
    }

    #[test]
    fn fpr_plan_requires_null_hypothesis() {
        let plan = ExperimentPlan {
            experiment: Experiment::FprCalibration(RejectionParams {
                family: Family::Gaussian1D,
                theta: ParamVector::new(vec![0.0, 1.0]),
                theta_prime: ParamVector::new(vec![0.1, 1.0]),
                epsilons: vec![0.05],
                ms: vec![100],
                trials: 100,
                info: InfoKind::Oracle,
                estimator: Estimator::Mvue,
            }),
            master_seed: 1,
        };
        assert!(run_experiment(&plan).is_err());
    }

    #[test]
    fn experiment_names_round_trip() {
        for id in [
            ExperimentId::FprCalibration,
            ExperimentId::PowerCurve,
            ExperimentId::Unbiasedness,
            ExperimentId::ZTestEquivalence,
            ExperimentId::GullibilityPanel,
            ExperimentId::DiversitySweep,
            ExperimentId::CostSweep,
        ] {
            assert_eq!(ExperimentId::parse(id.name()), Some(id));
        }
    }
}
