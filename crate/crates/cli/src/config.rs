//! Run configuration files.
//!
//! Line-oriented `key = value` pairs grouped under `[section]` headers. Keys
//! before the first header are top-level (`command`, `seed`). Vectors are
//! comma-separated reals, lists of vectors are separated by `;`, coordinate
//! lists are 1-based. `#` starts a comment. Unknown keys and sections are errors.
//!
//! [`render`] writes the canonical form of a parsed configuration; parsing it
//! again gives back the same [`RunConfig`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use filter_audit::decision::{EstimatorSpec, ValuePair};
use filter_audit::mc::{
    CostSweepParams, DiversityParams, Experiment, ExperimentPlan, GullibilityParams, InfoKind,
    RejectionParams, UnbiasednessParams, ZTestParams,
};
use filter_audit::regcost::{Coupling, FeasibleQuery, GridSpec, RewardKind, RewardSpec};
use filter_audit::{
    AuditConfig, CounterfactualPair, Estimator, Family, InfoPoint, Inflation, Mapping,
    ParamVector, PlatformSpec,
};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Audit,
    AuditBatch,
    Mc,
    Cost,
    Diversity,
    DecisionDemo,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Audit => "audit",
            Command::AuditBatch => "audit-batch",
            Command::Mc => "mc",
            Command::Cost => "cost",
            Command::Diversity => "diversity",
            Command::DecisionDemo => "decision-demo",
        }
    }

    fn sections(&self) -> &'static [&'static str] {
        match self {
            Command::Audit | Command::AuditBatch => {
                &["model", "audit", "platform", "platform.tokens", "inflation", "pair"]
            }
            Command::Mc => &["model", "experiment", "reward", "reward.table", "query", "grid"],
            Command::Cost => &["model", "audit", "reward", "reward.table", "query", "grid"],
            Command::Diversity => &["model", "diversity"],
            Command::DecisionDemo => &["model", "decision", "query"],
        }
    }

    /// Sections that may appear more than once.
    fn repeated(&self) -> &'static [&'static str] {
        match self {
            Command::Audit | Command::AuditBatch => &["pair"],
            Command::DecisionDemo => &["query"],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub spec: RunSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunSpec {
    Audit(AuditRun),
    Mc(McRun),
    Cost(CostRun),
    Diversity(DiversityRun),
    Decision(DecisionRun),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRun {
    pub config: AuditConfig,
    pub platform: PlatformSpec,
    pub pairs: Vec<CounterfactualPair>,
    pub symmetrized: bool,
    /// Batch pass rule; only meaningful for `audit-batch`.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McRun {
    pub plan: ExperimentPlan,
    pub claim: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostRun {
    pub reward: RewardSpec,
    pub query: FeasibleQuery,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityRun {
    pub family: Family,
    pub z0: ParamVector,
    pub z1: ParamVector,
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRun {
    pub family: Family,
    pub values: ValuePair,
    pub estimator: EstimatorSpec,
    pub theta0: ParamVector,
    pub rho: f64,
    pub m: usize,
    pub calibration_trials: usize,
    pub queries: Vec<(String, ParamVector)>,
}

// ---------------------------------------------------------------------------
// document layer

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    /// 1-based source line; 0 for entries set from the command line.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

/// A parsed but not yet interpreted config file. The first section is the
/// unnamed top level.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections = vec![Section {
            name: String::new(),
            line: 0,
            entries: Vec::new(),
        }];
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::parse(line, "section header is missing ']'"))?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-') {
                    return Err(CliError::parse(line, format!("bad section name '{name}'")));
                }
                sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CliError::parse(line, format!("expected 'key = value', got '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(CliError::parse(line, "empty key"));
            }
            let section = sections.last_mut().expect("top level always present");
            if section.entries.iter().any(|e| e.key == key) {
                return Err(CliError::parse(line, format!("duplicate key '{key}'")));
            }
            section.entries.push(Entry {
                key: key.to_string(),
                value: value.to_string(),
                line,
            });
        }
        Ok(Document { sections })
    }

    /// Applies a `section.key=value` override (no dot: top level). The last
    /// dot separates the key, so `platform.tokens.x=1,2` is allowed. Targets
    /// the first section of that name, creating it when absent.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Override(format!("expected section.key=value, got '{assignment}'")))?;
        let path = path.trim();
        let (section, key) = match path.rsplit_once('.') {
            Some((s, k)) => (s, k),
            None => ("", path),
        };
        if key.is_empty() {
            return Err(CliError::Override(format!("empty key in '{assignment}'")));
        }
        let idx = match self.sections.iter().position(|s| s.name == section) {
            Some(i) => i,
            None => {
                self.sections.push(Section {
                    name: section.to_string(),
                    line: 0,
                    entries: Vec::new(),
                });
                self.sections.len() - 1
            }
        };
        let entries = &mut self.sections[idx].entries;
        let entry = Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line: 0,
        };
        match entries.iter_mut().find(|e| e.key == key) {
            Some(e) => *e = entry,
            None => entries.push(entry),
        }
        Ok(())
    }

    fn all(&self, name: &str) -> Vec<&Section> {
        self.sections.iter().filter(|s| s.name == name).collect()
    }

    fn one(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    fn top(&self) -> &Section {
        &self.sections[0]
    }
}

/// Tracks which keys of a section were read so leftovers can be reported.
struct Fields<'a> {
    section: &'a Section,
    used: Vec<bool>,
}

impl<'a> Fields<'a> {
    fn new(section: &'a Section) -> Self {
        Fields {
            section,
            used: vec![false; section.entries.len()],
        }
    }

    fn qualified(&self, key: &str) -> String {
        if self.section.name.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.section.name)
        }
    }

    fn raw(&mut self, key: &str) -> Option<&'a Entry> {
        let i = self.section.entries.iter().position(|e| e.key == key)?;
        self.used[i] = true;
        Some(&self.section.entries[i])
    }

    fn opt<T>(&mut self, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
        let Some(entry) = self.raw(key) else {
            return Ok(None);
        };
        parse(&entry.value)
            .map(Some)
            .map_err(|reason| CliError::invalid(self.qualified(key), entry.line, reason))
    }

    fn req<T>(&mut self, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Result<T> {
        let qualified = self.qualified(key);
        self.opt(key, parse)?.ok_or(CliError::Missing(qualified))
    }

    /// Like `req`, plus a range check reported against the key's line.
    fn checked<T>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
        check: impl Fn(&T) -> bool,
        reason: &str,
    ) -> Result<T> {
        let value = self.req(key, parse)?;
        if !check(&value) {
            let line = self.raw(key).map_or(0, |e| e.line);
            return Err(CliError::invalid(self.qualified(key), line, reason.to_string()));
        }
        Ok(value)
    }

    /// Every entry, marked as used. For sections whose keys are data (token tables).
    fn drain(&mut self) -> &'a [Entry] {
        self.used.iter_mut().for_each(|u| *u = true);
        &self.section.entries
    }

    fn finish(self) -> Result<()> {
        match self.used.iter().position(|u| !u) {
            Some(i) => {
                let e = &self.section.entries[i];
                Err(CliError::UnknownKey {
                    key: self.qualified(&e.key),
                    line: e.line,
                })
            }
            None => Ok(()),
        }
    }
}

// ---------------------------------------------------------------------------
// value parsers

fn real(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{}' is not a number", s.trim()))?;
    if v.is_nan() {
        return Err("NaN is not allowed".into());
    }
    Ok(v)
}

fn finite(s: &str) -> std::result::Result<f64, String> {
    let v = real(s)?;
    if !v.is_finite() {
        return Err(format!("'{}' is not finite", s.trim()));
    }
    Ok(v)
}

fn reals(s: &str) -> std::result::Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Err("empty list".into());
    }
    s.split(',').map(finite).collect()
}

fn vector(s: &str) -> std::result::Result<ParamVector, String> {
    reals(s).map(ParamVector::new)
}

fn vectors(s: &str) -> std::result::Result<Vec<ParamVector>, String> {
    s.split(';').map(vector).collect()
}

fn count(s: &str) -> std::result::Result<usize, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("'{}' is not a non-negative integer", s.trim()))
}

fn counts(s: &str) -> std::result::Result<Vec<usize>, String> {
    if s.trim().is_empty() {
        return Err("empty list".into());
    }
    s.split(',').map(count).collect()
}

/// 1-based coordinate list to 0-based indices.
fn coords(s: &str) -> std::result::Result<Vec<usize>, String> {
    counts(s)?
        .into_iter()
        .map(|c| c.checked_sub(1).ok_or_else(|| "coordinates are numbered from 1".to_string()))
        .collect()
}

fn seed(s: &str) -> std::result::Result<u64, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("'{}' is not an unsigned 64-bit integer", s.trim()))
}

fn boolean(s: &str) -> std::result::Result<bool, String> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("expected true or false, got '{other}'")),
    }
}

fn text(s: &str) -> std::result::Result<String, String> {
    Ok(s.trim().to_string())
}

fn words(s: &str) -> std::result::Result<Vec<String>, String> {
    let items: Vec<String> = s.split(',').map(|w| w.trim().to_string()).collect();
    if items.iter().any(String::is_empty) {
        return Err("empty token in list".into());
    }
    Ok(items)
}

fn estimator(s: &str) -> std::result::Result<Estimator, String> {
    match s.trim() {
        "mvue" => Ok(Estimator::Mvue),
        "mle" => Ok(Estimator::Mle),
        other => Err(format!("unknown estimator '{other}' (mvue, mle)")),
    }
}

fn info_kind(s: &str) -> std::result::Result<InfoKind, String> {
    match s.trim() {
        "theta-tilde" => Ok(InfoKind::ThetaTilde),
        "midpoint" => Ok(InfoKind::Midpoint),
        "oracle" => Ok(InfoKind::Oracle),
        other => Err(format!("unknown info point '{other}' (theta-tilde, midpoint, oracle)")),
    }
}

/// `mvue`, `biased(b1, b2, ..)` or `inflated(c)`.
fn user_estimator(s: &str) -> std::result::Result<EstimatorSpec, String> {
    let s = s.trim();
    if s == "mvue" {
        return Ok(EstimatorSpec::Mvue);
    }
    let inner = |prefix: &str| s.strip_prefix(prefix).and_then(|r| r.strip_suffix(')'));
    if let Some(args) = inner("biased(") {
        return reals(args).map(EstimatorSpec::Biased);
    }
    if let Some(arg) = inner("inflated(") {
        return finite(arg).map(EstimatorSpec::Inflated);
    }
    Err(format!("unknown user estimator '{s}' (mvue, biased(..), inflated(c))"))
}

fn user_estimators(s: &str) -> std::result::Result<Vec<EstimatorSpec>, String> {
    if s.trim() == "default" {
        return Ok(filter_audit::decision::gullibility_panel());
    }
    s.split(';').map(user_estimator).collect()
}

/// Explicit list or `linspace(lo, hi, n)`.
fn axis(s: &str) -> std::result::Result<Vec<f64>, String> {
    let t = s.trim();
    if let Some(args) = t.strip_prefix("linspace(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = args.split(',').collect();
        if parts.len() != 3 {
            return Err("linspace takes (lo, hi, n)".into());
        }
        let n = count(parts[2])?;
        if n == 0 {
            return Err("linspace needs n >= 1".into());
        }
        return Ok(GridSpec::linspace(finite(parts[0])?, finite(parts[1])?, n));
    }
    reals(t)
}

fn check_epsilon(e: &f64) -> bool {
    (0.0..=1.0).contains(e)
}

const EPSILON_RANGE: &str = "epsilon must lie in [0,1]";

// ---------------------------------------------------------------------------
// interpretation

/// Parses `text` for `command`, applying `overrides` (`section.key=value`) first.
pub fn parse_config(command: Command, text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut doc = Document::parse(text)?;
    for o in overrides {
        doc.apply_override(o)?;
    }
    interpret(command, &doc)
}

pub fn interpret(command: Command, doc: &Document) -> Result<RunConfig> {
    let allowed = command.sections();
    let repeated = command.repeated();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &doc.sections[1..] {
        if !allowed.contains(&s.name.as_str()) {
            return Err(CliError::UnknownSection {
                name: s.name.clone(),
                command: command.name(),
                line: s.line,
            });
        }
        let n = seen.entry(&s.name).or_default();
        *n += 1;
        if *n > 1 && !repeated.contains(&s.name.as_str()) {
            return Err(CliError::parse(s.line, format!("section [{}] appears twice", s.name)));
        }
    }

    let mut top = Fields::new(doc.top());
    if let Some(named) = top.opt("command", text)? {
        if named != command.name() {
            return Err(CliError::invalid(
                "command".into(),
                top.raw("command").map_or(0, |e| e.line),
                format!("file is for '{named}', not '{}'", command.name()),
            ));
        }
    }
    let seed = top.opt("seed", seed)?.unwrap_or(0);
    top.finish()?;

    let spec = match command {
        Command::Audit | Command::AuditBatch => RunSpec::Audit(audit_run(command, doc)?),
        Command::Mc => RunSpec::Mc(mc_run(doc, seed)?),
        Command::Cost => RunSpec::Cost(cost_run(doc)?),
        Command::Diversity => RunSpec::Diversity(diversity_run(doc)?),
        Command::DecisionDemo => RunSpec::Decision(decision_run(doc)?),
    };
    Ok(RunConfig { command, seed, spec })
}

fn section<'a>(doc: &'a Document, name: &str) -> Result<&'a Section> {
    doc.one(name).ok_or_else(|| CliError::Missing(format!("[{name}]")))
}

fn model(doc: &Document) -> Result<Family> {
    let mut f = Fields::new(section(doc, "model")?);
    let name = f.req("family", text)?;
    let family = match name.as_str() {
        "gaussian-1d" => Family::Gaussian1D,
        "bernoulli" => Family::Bernoulli,
        "poisson" => Family::Poisson,
        "gaussian-known-var" => {
            let line = f.raw("variance").map_or(0, |e| e.line);
            let v = f.req("variance", finite)?;
            Family::gaussian_known_var(v)
                .map_err(|e| CliError::invalid("model.variance".into(), line, e.to_string()))?
        }
        other => {
            return Err(CliError::invalid(
                "model.family".into(),
                f.raw("family").map_or(0, |e| e.line),
                format!("unknown family '{other}' (gaussian-1d, gaussian-known-var, bernoulli, poisson)"),
            ))
        }
    };
    f.finish()?;
    Ok(family)
}

fn audit_config(family: Family, f: &mut Fields) -> Result<AuditConfig> {
    let epsilon = f.checked("epsilon", real, check_epsilon, EPSILON_RANGE)?;
    let m = f.checked("m", count, |m| *m >= 1, "m must be at least 1")?;
    let est = f.opt("estimator", estimator)?.unwrap_or(Estimator::Mvue);
    let info = f.opt("info_point", info_kind)?.unwrap_or(InfoKind::ThetaTilde);
    let oracle = f.opt("oracle_theta", vector)?;
    let info_point = match (info, oracle) {
        (InfoKind::ThetaTilde, None) => InfoPoint::AtThetaTilde,
        (InfoKind::Midpoint, None) => InfoPoint::AtMidpoint,
        (InfoKind::Oracle, Some(theta)) => InfoPoint::AtOracleTheta(theta),
        (InfoKind::Oracle, None) => return Err(CliError::Missing(f.qualified("oracle_theta"))),
        (_, Some(_)) => {
            return Err(CliError::invalid(
                f.qualified("oracle_theta"),
                f.raw("oracle_theta").map_or(0, |e| e.line),
                "only allowed with info_point = oracle".into(),
            ))
        }
    };
    let config = AuditConfig {
        epsilon,
        family,
        estimator: est,
        info_point,
        m,
    };
    config.validate()?;
    Ok(config)
}

fn audit_run(command: Command, doc: &Document) -> Result<AuditRun> {
    let family = model(doc)?;
    let mut a = Fields::new(section(doc, "audit")?);
    let config = audit_config(family, &mut a)?;
    let symmetrized = a.opt("symmetrized", boolean)?.unwrap_or(false);
    let alpha = if command == Command::AuditBatch {
        a.checked("alpha", real, |v| (0.0..=1.0).contains(v), "alpha must lie in [0,1]")?
    } else {
        0.0
    };
    a.finish()?;

    let mut p = Fields::new(section(doc, "platform")?);
    let kind = p.req("kind", text)?;
    let table = |required: bool| -> Result<BTreeMap<String, Vec<f64>>> {
        let Some(sec) = doc.one("platform.tokens") else {
            return if required {
                Err(CliError::Missing("[platform.tokens]".into()))
            } else {
                Ok(BTreeMap::new())
            };
        };
        let mut t = Fields::new(sec);
        t.drain()
            .iter()
            .map(|e| {
                reals(&e.value)
                    .map(|v| (e.key.clone(), v))
                    .map_err(|r| CliError::invalid(format!("platform.tokens.{}", e.key), e.line, r))
            })
            .collect()
    };
    let mapping = match kind.as_str() {
        "constant" => {
            if doc.one("platform.tokens").is_some() {
                return Err(CliError::invalid(
                    "platform.tokens".into(),
                    doc.one("platform.tokens").map_or(0, |s| s.line),
                    "a constant platform has no token table".into(),
                ));
            }
            Mapping::Constant(p.req("theta", vector)?)
        }
        "lookup" => Mapping::Lookup(
            table(true)?
                .into_iter()
                .map(|(k, v)| (k, ParamVector::new(v)))
                .collect(),
        ),
        "affine" => Mapping::AffineShift {
            base: p.req("base", vector)?,
            deltas: table(false)?,
        },
        other => {
            return Err(CliError::invalid(
                "platform.kind".into(),
                p.raw("kind").map_or(0, |e| e.line),
                format!("unknown platform kind '{other}' (constant, lookup, affine)"),
            ))
        }
    };
    p.finish()?;

    let inflation = match doc.one("inflation") {
        None => None,
        Some(sec) => {
            let mut f = Fields::new(sec);
            let inf = Inflation {
                kappa: f.req("kappa", finite)?,
                coords: f.req("coords", coords)?,
                tokens: f.opt("tokens", words)?,
            };
            f.finish()?;
            Some(inf)
        }
    };
    let platform = PlatformSpec {
        family,
        mapping,
        inflation,
    };
    platform.validate()?;

    let pair_sections = doc.all("pair");
    if pair_sections.is_empty() {
        return Err(CliError::Missing("[pair]".into()));
    }
    if command == Command::Audit && pair_sections.len() > 1 {
        return Err(CliError::parse(
            pair_sections[1].line,
            "audit takes exactly one [pair]; use audit-batch for several",
        ));
    }
    let mut pairs = Vec::new();
    for (i, sec) in pair_sections.into_iter().enumerate() {
        let mut f = Fields::new(sec);
        let x = f.req("x", text)?;
        let x_prime = f.req("x_prime", text)?;
        let label = f.opt("label", text)?.unwrap_or_else(|| format!("pair-{}", i + 1));
        f.finish()?;
        pairs.push(CounterfactualPair::new(x, x_prime, label));
    }
    Ok(AuditRun {
        config,
        platform,
        pairs,
        symmetrized,
        alpha,
    })
}

fn reward(doc: &Document, family: &Family) -> Result<RewardSpec> {
    let mut f = Fields::new(section(doc, "reward")?);
    let kind = f.req("kind", text)?;
    let omega = f.opt("omega", coords)?.unwrap_or_default();
    let kind = match kind.as_str() {
        "mean-only" => RewardKind::MeanOnly {
            target: f.req("target", finite)?,
        },
        "grid" => {
            let mut t = Fields::new(section(doc, "reward.table")?);
            let table = t
                .drain()
                .iter()
                .map(|e| {
                    let point = vector(&e.key)
                        .map_err(|r| CliError::invalid(format!("reward.table.{}", e.key), e.line, r))?;
                    let value = finite(&e.value)
                        .map_err(|r| CliError::invalid(format!("reward.table.{}", e.key), e.line, r))?;
                    Ok((point, value))
                })
                .collect::<Result<Vec<_>>>()?;
            RewardKind::GeneralGrid { table }
        }
        other => {
            return Err(CliError::invalid(
                "reward.kind".into(),
                f.raw("kind").map_or(0, |e| e.line),
                format!("unknown reward kind '{other}' (mean-only, grid)"),
            ))
        }
    };
    f.finish()?;
    if !matches!(kind, RewardKind::GeneralGrid { .. }) && doc.one("reward.table").is_some() {
        return Err(CliError::UnknownSection {
            name: "reward.table".into(),
            command: "mean-only reward",
            line: doc.one("reward.table").map_or(0, |s| s.line),
        });
    }
    let spec = RewardSpec { kind, omega };
    spec.validate(family)?;
    Ok(spec)
}

fn coupling(f: &mut Fields, reward: &RewardSpec) -> Result<Coupling> {
    let name = f.opt("coupling", text)?.unwrap_or_else(|| "shared-omega".into());
    let coords_given = f.opt("coupling_coords", coords)?;
    match name.as_str() {
        "fixed" => match coords_given {
            None => Ok(Coupling::Fixed),
            Some(_) => Err(CliError::invalid(
                f.qualified("coupling_coords"),
                f.raw("coupling_coords").map_or(0, |e| e.line),
                "only allowed with coupling = shared-omega".into(),
            )),
        },
        "shared-omega" => Ok(Coupling::SharedOmega(
            coords_given.unwrap_or_else(|| reward.omega.clone()),
        )),
        other => Err(CliError::invalid(
            f.qualified("coupling"),
            f.raw("coupling").map_or(0, |e| e.line),
            format!("unknown coupling '{other}' (shared-omega, fixed)"),
        )),
    }
}

fn grid(doc: &Document, family: &Family) -> Result<GridSpec> {
    let mut f = Fields::new(section(doc, "grid")?);
    let axes = (1..=family.dim())
        .map(|i| f.req(&format!("axis{i}"), axis))
        .collect::<Result<Vec<_>>>()?;
    f.finish()?;
    Ok(GridSpec::new(axes)?)
}

fn cost_run(doc: &Document) -> Result<CostRun> {
    let family = model(doc)?;
    let mut a = Fields::new(section(doc, "audit")?);
    let config = audit_config(family, &mut a)?;
    a.finish()?;
    let reward = reward(doc, &family)?;
    let mut q = Fields::new(section(doc, "query")?);
    let reference = q.req("reference", vector)?;
    let coupling = coupling(&mut q, &reward)?;
    q.finish()?;
    let query = FeasibleQuery::new(reference, config, coupling)?;
    let grid = grid(doc, &family)?;
    Ok(CostRun { reward, query, grid })
}

fn diversity_run(doc: &Document) -> Result<DiversityRun> {
    let family = model(doc)?;
    let mut f = Fields::new(section(doc, "diversity")?);
    let run = DiversityRun {
        family,
        z0: f.req("z0", vector)?,
        z1: f.req("z1", vector)?,
        direction: f.req("v", reals)?,
    };
    f.finish()?;
    Ok(run)
}

fn decision_run(doc: &Document) -> Result<DecisionRun> {
    let family = model(doc)?;
    let mut f = Fields::new(section(doc, "decision")?);
    let weights = f.req("weights", reals)?;
    let intercept = f.opt("intercept", finite)?.unwrap_or(0.0);
    let run_estimator = f.opt("estimator", user_estimator)?.unwrap_or(EstimatorSpec::Mvue);
    let theta0 = f.req("theta0", vector)?;
    let rho = f.checked("rho", real, |r| *r > 0.0 && *r < 1.0, "rho must lie in (0,1)")?;
    let m = f.checked("m", count, |m| *m >= 1, "m must be at least 1")?;
    let calibration_trials = f.checked("calibration_trials", count, |t| *t >= 1, "need at least one trial")?;
    f.finish()?;
    let values = ValuePair::difference(weights, intercept);
    values.validate(&family)?;
    run_estimator.validate(&family)?;

    let mut queries = Vec::new();
    for (i, sec) in doc.all("query").into_iter().enumerate() {
        let mut q = Fields::new(sec);
        let id = q.opt("id", text)?.unwrap_or_else(|| format!("q{}", i + 1));
        let theta = q.req("theta", vector)?;
        q.finish()?;
        family.check_sampling(&theta)?;
        queries.push((id, theta));
    }
    if queries.is_empty() {
        return Err(CliError::Missing("[query]".into()));
    }
    Ok(DecisionRun {
        family,
        values,
        estimator: run_estimator,
        theta0,
        rho,
        m,
        calibration_trials,
        queries,
    })
}

fn mc_run(doc: &Document, master_seed: u64) -> Result<McRun> {
    let mut f = Fields::new(section(doc, "experiment")?);
    let kind = f.req("kind", text)?;
    let claim = f.opt("claim", text)?;
    let uses_model = kind != "z-test-equivalence";
    if !uses_model && doc.one("model").is_some() {
        return Err(CliError::UnknownSection {
            name: "model".into(),
            command: "z-test-equivalence",
            line: doc.one("model").map_or(0, |s| s.line),
        });
    }
    let cost_sections = ["reward", "reward.table", "query", "grid"];
    if kind != "cost-sweep" {
        if let Some(s) = doc.sections.iter().find(|s| cost_sections.contains(&s.name.as_str())) {
            return Err(CliError::UnknownSection {
                name: s.name.clone(),
                command: "this experiment",
                line: s.line,
            });
        }
    }
    let family = if uses_model { Some(model(doc)?) } else { None };
    let family_req = || family.ok_or_else(|| CliError::Missing("[model]".into()));

    let rejection = |f: &mut Fields, fpr: bool| -> Result<RejectionParams> {
        let theta = f.req("theta", vector)?;
        let theta_prime = if fpr {
            f.opt("theta_prime", vector)?.unwrap_or_else(|| theta.clone())
        } else {
            f.req("theta_prime", vector)?
        };
        Ok(RejectionParams {
            family: family_req()?,
            theta,
            theta_prime,
            epsilons: f.checked("epsilons", reals, |v| v.iter().all(check_epsilon), EPSILON_RANGE)?,
            ms: f.req("ms", counts)?,
            trials: f.req("trials", count)?,
            info: f.opt("info", info_kind)?.unwrap_or(InfoKind::ThetaTilde),
            estimator: f.opt("estimator", estimator)?.unwrap_or(Estimator::Mvue),
        })
    };

    let experiment = match kind.as_str() {
        "fpr-calibration" => Experiment::FprCalibration(rejection(&mut f, true)?),
        "power-curve" => Experiment::PowerCurve(rejection(&mut f, false)?),
        "unbiasedness" => Experiment::Unbiasedness(UnbiasednessParams {
            family: family_req()?,
            thetas: f.req("thetas", vectors)?,
            m: f.req("m", count)?,
            trials: f.req("trials", count)?,
        }),
        "z-test-equivalence" => Experiment::ZTestEquivalence(ZTestParams {
            trials: f.req("trials", count)?,
        }),
        "gullibility-panel" => Experiment::GullibilityPanel(GullibilityParams {
            family: family_req()?,
            theta: f.req("theta", vector)?,
            theta_prime: f.req("theta_prime", vector)?,
            theta0: f.req("theta0", vector)?,
            values: ValuePair::difference(
                f.req("weights", reals)?,
                f.opt("intercept", finite)?.unwrap_or(0.0),
            ),
            rho: f.req("rho", real)?,
            m: f.req("m", count)?,
            trials: f.req("trials", count)?,
            panel: f.opt("panel", user_estimators)?
                .unwrap_or_else(filter_audit::decision::gullibility_panel),
        }),
        "diversity-sweep" => Experiment::DiversitySweep(DiversityParams {
            family: family_req()?,
            theta_star: f.req("theta_star", vector)?,
            reference: f.req("reference", vector)?,
            omega: f.req("omega", coords)?,
            epsilon: f.checked("epsilon", real, check_epsilon, EPSILON_RANGE)?,
            m: f.req("m", count)?,
            kappas: f.req("kappas", axis)?,
        }),
        "cost-sweep" => {
            let family = family_req()?;
            let reward = reward(doc, &family)?;
            let mut q = Fields::new(section(doc, "query")?);
            let reference = q.req("reference", vector)?;
            let coupling = coupling(&mut q, &reward)?;
            q.finish()?;
            Experiment::CostSweep(CostSweepParams {
                family,
                reference,
                coupling,
                m: f.req("m", count)?,
                epsilons: f.checked("epsilons", reals, |v| v.iter().all(check_epsilon), EPSILON_RANGE)?,
                grid: grid(doc, &family)?,
                reward,
            })
        }
        other => {
            return Err(CliError::invalid(
                "experiment.kind".into(),
                f.raw("kind").map_or(0, |e| e.line),
                format!("unknown experiment '{other}'"),
            ))
        }
    };
    f.finish()?;
    let plan = ExperimentPlan {
        experiment,
        master_seed,
    };
    plan.validate()?;
    if let Some(c) = &claim {
        filter_audit::mc::Claim::parse(c)?;
    }
    Ok(McRun { plan, claim })
}

// ---------------------------------------------------------------------------
// canonical rendering

fn fmt_reals(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn fmt_coords(v: &[usize]) -> String {
    v.iter().map(|c| (c + 1).to_string()).collect::<Vec<_>>().join(", ")
}

fn fmt_counts(v: &[usize]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
}

fn fmt_user_estimator(spec: &EstimatorSpec) -> String {
    match spec {
        EstimatorSpec::Mvue => "mvue".into(),
        EstimatorSpec::Biased(b) => format!("biased({})", fmt_reals(b)),
        EstimatorSpec::Inflated(c) => format!("inflated({c})"),
    }
}

fn estimator_name(e: Estimator) -> &'static str {
    match e {
        Estimator::Mvue => "mvue",
        Estimator::Mle => "mle",
    }
}

fn info_name(k: InfoKind) -> &'static str {
    match k {
        InfoKind::ThetaTilde => "theta-tilde",
        InfoKind::Midpoint => "midpoint",
        InfoKind::Oracle => "oracle",
    }
}

fn render_model(out: &mut String, family: &Family) {
    out.push_str("\n[model]\n");
    let _ = writeln!(out, "family = {}", family.name());
    if let Family::GaussianKnownVar { variance } = family {
        let _ = writeln!(out, "variance = {variance}");
    }
}

fn render_audit_config(out: &mut String, c: &AuditConfig) {
    let _ = writeln!(out, "epsilon = {}", c.epsilon);
    let _ = writeln!(out, "m = {}", c.m);
    let _ = writeln!(out, "estimator = {}", estimator_name(c.estimator));
    match &c.info_point {
        InfoPoint::AtThetaTilde => out.push_str("info_point = theta-tilde\n"),
        InfoPoint::AtMidpoint => out.push_str("info_point = midpoint\n"),
        InfoPoint::AtOracleTheta(theta) => {
            out.push_str("info_point = oracle\n");
            let _ = writeln!(out, "oracle_theta = {}", fmt_reals(theta.values()));
        }
    }
}

fn render_reward(out: &mut String, reward: &RewardSpec) {
    out.push_str("\n[reward]\n");
    match &reward.kind {
        RewardKind::MeanOnly { target } => {
            out.push_str("kind = mean-only\n");
            let _ = writeln!(out, "target = {target}");
        }
        RewardKind::GeneralGrid { .. } => out.push_str("kind = grid\n"),
    }
    if !reward.omega.is_empty() {
        let _ = writeln!(out, "omega = {}", fmt_coords(&reward.omega));
    }
    if let RewardKind::GeneralGrid { table } = &reward.kind {
        out.push_str("\n[reward.table]\n");
        for (point, value) in table {
            let _ = writeln!(out, "{} = {value}", fmt_reals(point.values()));
        }
    }
}

fn render_query(out: &mut String, reference: &ParamVector, coupling: &Coupling) {
    out.push_str("\n[query]\n");
    let _ = writeln!(out, "reference = {}", fmt_reals(reference.values()));
    match coupling {
        Coupling::Fixed => out.push_str("coupling = fixed\n"),
        Coupling::SharedOmega(c) => {
            out.push_str("coupling = shared-omega\n");
            let _ = writeln!(out, "coupling_coords = {}", fmt_coords(c));
        }
    }
}

fn render_grid(out: &mut String, grid: &GridSpec) {
    out.push_str("\n[grid]\n");
    for (i, axis) in grid.axes.iter().enumerate() {
        let _ = writeln!(out, "axis{} = {}", i + 1, fmt_reals(axis));
    }
}

/// Canonical text of a configuration; `parse_config(render(c))` returns `c`.
pub fn render(config: &RunConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "command = {}", config.command.name());
    let _ = writeln!(out, "seed = {}", config.seed);
    match &config.spec {
        RunSpec::Audit(run) => {
            render_model(&mut out, &run.config.family);
            out.push_str("\n[audit]\n");
            render_audit_config(&mut out, &run.config);
            let _ = writeln!(out, "symmetrized = {}", run.symmetrized);
            if config.command == Command::AuditBatch {
                let _ = writeln!(out, "alpha = {}", run.alpha);
            }
            out.push_str("\n[platform]\n");
            let tokens: Vec<(String, Vec<f64>)> = match &run.platform.mapping {
                Mapping::Constant(theta) => {
                    out.push_str("kind = constant\n");
                    let _ = writeln!(out, "theta = {}", fmt_reals(theta.values()));
                    Vec::new()
                }
                Mapping::Lookup(table) => {
                    out.push_str("kind = lookup\n");
                    table.iter().map(|(k, v)| (k.clone(), v.values().to_vec())).collect()
                }
                Mapping::AffineShift { base, deltas } => {
                    out.push_str("kind = affine\n");
                    let _ = writeln!(out, "base = {}", fmt_reals(base.values()));
                    deltas.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
                }
            };
            if !tokens.is_empty() {
                out.push_str("\n[platform.tokens]\n");
                for (k, v) in tokens {
                    let _ = writeln!(out, "{k} = {}", fmt_reals(&v));
                }
            }
            if let Some(inf) = &run.platform.inflation {
                out.push_str("\n[inflation]\n");
                let _ = writeln!(out, "kappa = {}", inf.kappa);
                let _ = writeln!(out, "coords = {}", fmt_coords(&inf.coords));
                if let Some(t) = &inf.tokens {
                    let _ = writeln!(out, "tokens = {}", t.join(", "));
                }
            }
            for pair in &run.pairs {
                out.push_str("\n[pair]\n");
                let _ = writeln!(out, "x = {}", pair.x);
                let _ = writeln!(out, "x_prime = {}", pair.x_prime);
                let _ = writeln!(out, "label = {}", pair.label);
            }
        }
        RunSpec::Mc(run) => render_mc(&mut out, run),
        RunSpec::Cost(run) => {
            render_model(&mut out, &run.query.config.family);
            out.push_str("\n[audit]\n");
            render_audit_config(&mut out, &run.query.config);
            render_reward(&mut out, &run.reward);
            render_query(&mut out, &run.query.reference, &run.query.coupling);
            render_grid(&mut out, &run.grid);
        }
        RunSpec::Diversity(run) => {
            render_model(&mut out, &run.family);
            out.push_str("\n[diversity]\n");
            let _ = writeln!(out, "z0 = {}", fmt_reals(run.z0.values()));
            let _ = writeln!(out, "z1 = {}", fmt_reals(run.z1.values()));
            let _ = writeln!(out, "v = {}", fmt_reals(&run.direction));
        }
        RunSpec::Decision(run) => {
            render_model(&mut out, &run.family);
            out.push_str("\n[decision]\n");
            let _ = writeln!(out, "weights = {}", fmt_reals(&run.values.v1.weights));
            let _ = writeln!(out, "intercept = {}", run.values.v1.intercept);
            let _ = writeln!(out, "estimator = {}", fmt_user_estimator(&run.estimator));
            let _ = writeln!(out, "theta0 = {}", fmt_reals(run.theta0.values()));
            let _ = writeln!(out, "rho = {}", run.rho);
            let _ = writeln!(out, "m = {}", run.m);
            let _ = writeln!(out, "calibration_trials = {}", run.calibration_trials);
            for (id, theta) in &run.queries {
                out.push_str("\n[query]\n");
                let _ = writeln!(out, "id = {id}");
                let _ = writeln!(out, "theta = {}", fmt_reals(theta.values()));
            }
        }
    }
    out
}

fn render_mc(out: &mut String, run: &McRun) {
    let exp = &run.plan.experiment;
    let family = match exp {
        Experiment::FprCalibration(p) | Experiment::PowerCurve(p) => Some(p.family),
        Experiment::Unbiasedness(p) => Some(p.family),
        Experiment::ZTestEquivalence(_) => None,
        Experiment::GullibilityPanel(p) => Some(p.family),
        Experiment::DiversitySweep(p) => Some(p.family),
        Experiment::CostSweep(p) => Some(p.family),
    };
    if let Some(f) = &family {
        render_model(out, f);
    }
    out.push_str("\n[experiment]\n");
    let _ = writeln!(out, "kind = {}", run.plan.id().name());
    match exp {
        Experiment::FprCalibration(p) | Experiment::PowerCurve(p) => {
            let _ = writeln!(out, "theta = {}", fmt_reals(p.theta.values()));
            let _ = writeln!(out, "theta_prime = {}", fmt_reals(p.theta_prime.values()));
            let _ = writeln!(out, "epsilons = {}", fmt_reals(&p.epsilons));
            let _ = writeln!(out, "ms = {}", fmt_counts(&p.ms));
            let _ = writeln!(out, "trials = {}", p.trials);
            let _ = writeln!(out, "info = {}", info_name(p.info));
            let _ = writeln!(out, "estimator = {}", estimator_name(p.estimator));
        }
        Experiment::Unbiasedness(p) => {
            let thetas: Vec<String> = p.thetas.iter().map(|t| fmt_reals(t.values())).collect();
            let _ = writeln!(out, "thetas = {}", thetas.join("; "));
            let _ = writeln!(out, "m = {}", p.m);
            let _ = writeln!(out, "trials = {}", p.trials);
        }
        Experiment::ZTestEquivalence(p) => {
            let _ = writeln!(out, "trials = {}", p.trials);
        }
        Experiment::GullibilityPanel(p) => {
            let _ = writeln!(out, "theta = {}", fmt_reals(p.theta.values()));
            let _ = writeln!(out, "theta_prime = {}", fmt_reals(p.theta_prime.values()));
            let _ = writeln!(out, "theta0 = {}", fmt_reals(p.theta0.values()));
            let _ = writeln!(out, "weights = {}", fmt_reals(&p.values.v1.weights));
            let _ = writeln!(out, "intercept = {}", p.values.v1.intercept);
            let _ = writeln!(out, "rho = {}", p.rho);
            let _ = writeln!(out, "m = {}", p.m);
            let _ = writeln!(out, "trials = {}", p.trials);
            let panel: Vec<String> = p.panel.iter().map(fmt_user_estimator).collect();
            let _ = writeln!(out, "panel = {}", panel.join("; "));
        }
        Experiment::DiversitySweep(p) => {
            let _ = writeln!(out, "theta_star = {}", fmt_reals(p.theta_star.values()));
            let _ = writeln!(out, "reference = {}", fmt_reals(p.reference.values()));
            let _ = writeln!(out, "omega = {}", fmt_coords(&p.omega));
            let _ = writeln!(out, "epsilon = {}", p.epsilon);
            let _ = writeln!(out, "m = {}", p.m);
            let _ = writeln!(out, "kappas = {}", fmt_reals(&p.kappas));
        }
        Experiment::CostSweep(p) => {
            let _ = writeln!(out, "m = {}", p.m);
            let _ = writeln!(out, "epsilons = {}", fmt_reals(&p.epsilons));
        }
    }
    if let Some(c) = &run.claim {
        let _ = writeln!(out, "claim = {c}");
    }
    if let Experiment::CostSweep(p) = exp {
        render_reward(out, &p.reward);
        render_query(out, &p.reference, &p.coupling);
        render_grid(out, &p.grid);
    }
}
