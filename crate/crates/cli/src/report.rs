//! Running a parsed configuration and writing its results.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use filter_audit::audit::batch_from_verdicts;
use filter_audit::decision::{calibrate_eta, decide, form_belief, DecisionRecord};
use filter_audit::mc::{run_experiment, summarize_text, CurvePoint, SummaryRecord};
use filter_audit::regcost::{cost_of_regulation, diversity_compare, RegCostReport};
use filter_audit::rng::derive_seed;
use filter_audit::{
    audit_batch, audit_pair, audit_symmetrized, make_platform, AuditVerdict, BatchVerdict, Error,
    ParamVector,
};

use crate::config::{render, Command, RunConfig, RunSpec};
use crate::error::{CliError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveReport {
    pub experiment: String,
    pub master_seed: u64,
    pub points: Vec<CurvePoint>,
    pub summary: Option<SummaryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityReport {
    pub family: String,
    pub z0: ParamVector,
    pub z1: ParamVector,
    pub v: Vec<f64>,
    /// `v' (I(z1) - I(z0)) v`; positive when `z0` is more diverse along `v`.
    pub value: f64,
    pub z0_more_diverse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionReport {
    pub estimator: String,
    pub eta: f64,
    pub within_optimality_premises: bool,
    pub records: Vec<DecisionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "report", rename_all = "kebab-case")]
pub enum Report {
    Audit(AuditVerdict),
    Batch(BatchVerdict),
    Curves(CurveReport),
    Cost(RegCostReport),
    Diversity(DiversityReport),
    Decision(DecisionReport),
}

impl Report {
    /// 0 for a pass (or a report without a verdict), 2 for H1 or a failed check.
    pub fn exit_code(&self) -> i32 {
        let failed = match self {
            Report::Audit(v) => v.is_h1(),
            Report::Batch(b) => !b.passed,
            Report::Curves(c) => c.summary.as_ref().is_some_and(|s| !s.passed),
            Report::Cost(_) | Report::Diversity(_) | Report::Decision(_) => false,
        };
        if failed {
            2
        } else {
            0
        }
    }

    /// One-line summary for the terminal.
    pub fn headline(&self) -> String {
        match self {
            Report::Audit(v) => format!(
                "{:?} statistic={} threshold={}",
                v.hypothesis, v.statistic, v.threshold
            ),
            Report::Batch(b) => format!(
                "{} h1={}/{} alpha={}",
                if b.passed { "PASS" } else { "FAIL" },
                b.h1_count,
                b.per_pair.len(),
                b.alpha
            ),
            Report::Curves(c) => match &c.summary {
                Some(s) => format!(
                    "{} {} points, claim {}: {} violation(s)",
                    c.experiment,
                    c.points.len(),
                    if s.passed { "holds" } else { "fails" },
                    s.violations.len()
                ),
                None => format!("{} {} points", c.experiment, c.points.len()),
            },
            Report::Cost(r) => format!(
                "cost={} feasible={}/{} witness_kappa={}",
                r.cost,
                r.feasible_points,
                r.grid_points,
                r.witness_kappa.map_or("none".into(), |k| k.to_string())
            ),
            Report::Diversity(d) => format!("value={} z0_more_diverse={}", d.value, d.z0_more_diverse),
            Report::Decision(d) => format!("eta={} decisions={}", d.eta, d.records.len()),
        }
    }
}

fn audit_batch_symmetrized(
    run: &crate::config::AuditRun,
    platform: &filter_audit::platform::SimPlatform,
    seed: u64,
) -> Result<BatchVerdict> {
    let verdicts = run
        .pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            audit_symmetrized(&run.config, platform, pair, derive_seed(seed, i as u64)).map_err(|e| {
                Error::Audit {
                    label: pair.label.clone(),
                    source: Box::new(e),
                }
            })
        })
        .collect::<filter_audit::Result<Vec<_>>>()?;
    Ok(batch_from_verdicts(verdicts, run.alpha))
}

/// Runs the configuration. Everything random derives from `config.seed`.
pub fn execute(config: &RunConfig) -> Result<Report> {
    let seed = config.seed;
    Ok(match &config.spec {
        RunSpec::Audit(run) => {
            let platform = make_platform(run.platform.clone())?;
            if config.command == Command::AuditBatch {
                if run.symmetrized {
                    Report::Batch(audit_batch_symmetrized(run, &platform, seed)?)
                } else {
                    Report::Batch(audit_batch(&run.config, &platform, &run.pairs, run.alpha, seed)?)
                }
            } else if run.symmetrized {
                Report::Audit(audit_symmetrized(&run.config, &platform, &run.pairs[0], seed)?)
            } else {
                Report::Audit(audit_pair(&run.config, &platform, &run.pairs[0], seed)?)
            }
        }
        RunSpec::Mc(run) => {
            let points = run_experiment(&run.plan)?;
            let summary = run
                .claim
                .as_deref()
                .map(|c| summarize_text(&points, c))
                .transpose()?;
            Report::Curves(CurveReport {
                experiment: run.plan.id().name().to_string(),
                master_seed: run.plan.master_seed,
                points,
                summary,
            })
        }
        RunSpec::Cost(run) => Report::Cost(cost_of_regulation(&run.reward, &run.query, &run.grid)?),
        RunSpec::Diversity(run) => {
            let value = diversity_compare(&run.family, &run.z0, &run.z1, &run.direction)?;
            Report::Diversity(DiversityReport {
                family: run.family.name().to_string(),
                z0: run.z0.clone(),
                z1: run.z1.clone(),
                v: run.direction.clone(),
                value,
                z0_more_diverse: value > 0.0,
            })
        }
        RunSpec::Decision(run) => {
            let eta = calibrate_eta(
                &run.values,
                &run.family,
                &run.theta0,
                run.m,
                run.rho,
                run.calibration_trials,
                derive_seed(seed, 0),
            )?;
            let records = run
                .queries
                .iter()
                .enumerate()
                .map(|(i, (id, theta))| {
                    let i = i as u64;
                    let feed = run.family.sample_feed(theta, run.m, derive_seed(derive_seed(seed, 1), i))?;
                    let belief = form_belief(
                        &run.estimator,
                        &run.family,
                        &feed,
                        derive_seed(derive_seed(seed, 2), i),
                    )?;
                    Ok(decide(id, &run.values, &belief, eta))
                })
                .collect::<filter_audit::Result<Vec<_>>>()?;
            Report::Decision(DecisionReport {
                estimator: run.estimator.label(),
                eta,
                within_optimality_premises: run.values.within_optimality_premises(),
                records,
            })
        }
    })
}

/// Text of `run.meta`: version header, then the canonical config (seed included).
pub fn run_meta(config: &RunConfig) -> String {
    format!(
        "# filter-audit {VERSION}\n# canonical config echo; parse it with the same command to reproduce this run\n{}",
        render(config)
    )
}

pub fn report_json(report: &Report) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    Ok(text)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes `report.json`, `run.meta`, and `curves.csv` / `decisions.csv` when
/// the report has rows. Returns the paths written.
pub fn emit_report(report: &Report, config: &RunConfig, outdir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(outdir).map_err(|e| CliError::io(outdir, e))?;
    let mut written = Vec::new();

    let path = outdir.join("report.json");
    fs::write(&path, report_json(report)?).map_err(|e| CliError::io(&path, e))?;
    written.push(path);

    match report {
        Report::Curves(c) => {
            let path = outdir.join("curves.csv");
            write_csv(&path, &c.points)?;
            written.push(path);
        }
        Report::Decision(d) => {
            let path = outdir.join("decisions.csv");
            write_csv(&path, &d.records)?;
            written.push(path);
        }
        _ => {}
    }

    let path = outdir.join("run.meta");
    fs::write(&path, run_meta(config)).map_err(|e| CliError::io(&path, e))?;
    written.push(path);
    Ok(written)
}
