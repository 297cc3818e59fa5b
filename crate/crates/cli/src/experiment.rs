//! Runs a parsed config over its `(V, seed)` grid and writes the CSV outputs.
//!
//! `summary.csv` has one row per grid cell, in config order (V outer, seed
//! inner). Its columns are, for `L` constraints:
//!
//! `v, seed, slots, avg_penalty, lp_objective, gap, avg_metric_1..L,
//! avg_queue_1..L, final_queue_1..L, max_violation, frames,
//! sample_path_violations, key_feature_checked, key_feature_violations,
//! drift_worst_excess, drift_worst_std_error, drift_holds`
//!
//! Fields that do not apply (no benchmark, diagnostic not requested, `v` for
//! a stationary policy) are left empty. Floats carry 9 significant digits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use renewal_dpp::sim::stream_rng;
use renewal_dpp::{
    extract_reference_point, run, solve_lp, stationary_policy_weights, validate_model, ArrivalDist,
    DriftDiagnostic, DriftSummary, KeyFeatureCheck, LpSolution, LpStatus, PolicySpec, RunConfig, RunMetrics,
    SamplePathCheck, TradeoffParameter, ValidationReport,
};

use crate::config::{ExperimentConfig, PolicyKind};
use crate::CliError;

pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    /// `None` for stationary policies.
    pub v: Option<f64>,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub sample_path_violations: u64,
    /// `(checked, violations)` when `check` is on.
    pub key_feature: Option<(u64, u64)>,
    pub drift: Option<Vec<DriftSummary>>,
}

impl CellResult {
    /// Largest excess of a time-average metric over its bound, or zero.
    pub fn max_violation(&self, bounds: &[f64]) -> f64 {
        self.metrics.avg_metrics.iter().zip(bounds).fold(0.0f64, |acc, (g, d)| acc.max(g - d))
    }

    pub fn check_failures(&self) -> u64 {
        self.sample_path_violations + self.key_feature.map_or(0, |(_, v)| v)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub lp: LpSolution,
    pub bounds: Vec<f64>,
    pub cells: Vec<CellResult>,
    pub check: bool,
    pub out_dir: PathBuf,
}

impl ExperimentReport {
    pub fn check_failures(&self) -> u64 {
        self.cells.iter().map(CellResult::check_failures).sum()
    }

    pub fn lp_objective(&self) -> Option<f64> {
        (self.lp.status == LpStatus::Optimal).then_some(self.lp.objective)
    }
}

fn run_cell(cfg: &ExperimentConfig, lp: &LpSolution, policy: &PolicySpec, v: Option<f64>, seed: u64) -> Result<CellResult, CliError> {
    let inst = &cfg.instance;
    let models = &inst.models;
    let mut path = SamplePathCheck::new(inst.external.dim());
    let mut key = match (cfg.diagnostics.check, v) {
        (true, Some(v)) => Some(KeyFeatureCheck::new(models, v)),
        _ => None,
    };
    let mut drift = match (cfg.diagnostics.drift, v) {
        (true, Some(v)) => {
            let reference = extract_reference_point(&inst.lp, lp)?;
            Some(DriftDiagnostic::for_models(models, &inst.external, reference, v)?)
        }
        _ => None,
    };
    let mut config = RunConfig::new(cfg.slots, seed);
    if cfg.trajectory {
        config = config.with_trajectory();
    }
    let metrics = run(models, &inst.external, policy, &config, (&mut path, (key.as_mut(), drift.as_mut())))?;
    Ok(CellResult {
        v,
        seed,
        metrics,
        sample_path_violations: path.violations,
        key_feature: key.map(|k| (k.checked, k.violations)),
        drift: drift.map(|d| d.summaries()),
    })
}

fn policies(cfg: &ExperimentConfig, lp: &LpSolution) -> Result<Vec<(Option<f64>, PolicySpec)>, CliError> {
    match &cfg.policy {
        PolicyKind::DppRatio { solver } => cfg
            .v
            .iter()
            .map(|&v| Ok((Some(v), PolicySpec::DppRatio { v: TradeoffParameter::new(v)?, solver: *solver })))
            .collect(),
        PolicyKind::Stationary { weights } => {
            let weights = match weights {
                Some(w) => w.clone(),
                None => stationary_policy_weights(&cfg.instance.models, lp)?,
            };
            Ok(vec![(None, PolicySpec::RandomizedStationary { weights })])
        }
    }
}

/// Runs every grid cell (in parallel) and writes `summary.csv`, `lp.csv` and
/// the optional trajectories into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport, CliError> {
    let lp = solve_lp(&cfg.instance.lp)?;
    if lp.status != LpStatus::Optimal {
        let needs_lp = cfg.diagnostics.drift || matches!(cfg.policy, PolicyKind::Stationary { weights: None });
        if needs_lp {
            return Err(CliError::Runtime(renewal_dpp::Error::NotOptimal(lp.status)));
        }
    }
    let grid: Vec<(Option<f64>, PolicySpec, u64)> = policies(cfg, &lp)?
        .into_iter()
        .flat_map(|(v, p)| cfg.seeds.iter().map(move |&s| (v, p.clone(), s)))
        .collect();
    let cells = grid
        .par_iter()
        .map(|(v, policy, seed)| run_cell(cfg, &lp, policy, *v, *seed))
        .collect::<Result<Vec<_>, _>>()?;

    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let report = ExperimentReport {
        lp,
        bounds: cfg.instance.lp.bounds.clone(),
        cells,
        check: cfg.diagnostics.check,
        out_dir: out_dir.to_path_buf(),
    };
    write_summary(&report, &out_dir.join("summary.csv"))?;
    write_lp(cfg, &report.lp, &out_dir.join("lp.csv"))?;
    for cell in &report.cells {
        if let Some(traj) = &cell.metrics.queue_trajectory {
            let v = cell.v.map_or_else(|| "stationary".to_string(), |v| v.to_string());
            let path = out_dir.join(format!("trajectory_{v}_{}.csv", cell.seed));
            let mut w = csv_writer(&path)?;
            let mut header = vec!["slot".to_string()];
            header.extend((1..=cfg.instance.external.dim()).map(|l| format!("q_{l}")));
            w.write_record(&header)?;
            for (slot, q) in &traj.points {
                let mut row = vec![slot.to_string()];
                row.extend(q.iter().map(|x| fmt_float(*x)));
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| CliError::io(&path, e))?;
        }
    }
    Ok(report)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn summary_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> =
        ["v", "seed", "slots", "avg_penalty", "lp_objective", "gap"].iter().map(|s| s.to_string()).collect();
    for prefix in ["avg_metric", "avg_queue", "final_queue"] {
        h.extend((1..=dim).map(|l| format!("{prefix}_{l}")));
    }
    h.extend(
        [
            "max_violation",
            "frames",
            "sample_path_violations",
            "key_feature_checked",
            "key_feature_violations",
            "drift_worst_excess",
            "drift_worst_std_error",
            "drift_holds",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

fn summary_row(report: &ExperimentReport, cell: &CellResult) -> Vec<String> {
    let m = &cell.metrics;
    let lp = report.lp_objective();
    let mut row = vec![
        cell.v.map(fmt_float).unwrap_or_default(),
        cell.seed.to_string(),
        m.slots.to_string(),
        fmt_float(m.avg_penalty),
        lp.map(fmt_float).unwrap_or_default(),
        lp.map(|e| fmt_float(m.avg_penalty - e)).unwrap_or_default(),
    ];
    for values in [&m.avg_metrics, &m.avg_queues, &m.final_queues] {
        row.extend(values.iter().map(|x| fmt_float(*x)));
    }
    row.push(fmt_float(cell.max_violation(&report.bounds)));
    row.push(m.frames_per_system.iter().sum::<u64>().to_string());
    row.push(cell.sample_path_violations.to_string());
    match cell.key_feature {
        Some((checked, violations)) => {
            row.push(checked.to_string());
            row.push(violations.to_string());
        }
        None => row.extend([String::new(), String::new()]),
    }
    match cell.drift.as_ref().and_then(|d| d.iter().max_by(|a, b| a.mean_excess.total_cmp(&b.mean_excess))) {
        Some(worst) => {
            row.push(fmt_float(worst.mean_excess));
            row.push(fmt_float(worst.std_error));
            row.push(cell.drift.as_ref().is_some_and(|d| d.iter().all(|s| s.holds)).to_string());
        }
        None => row.extend([String::new(), String::new(), String::new()]),
    }
    row
}

fn write_summary(report: &ExperimentReport, path: &Path) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(summary_header(report.bounds.len()))?;
    for cell in &report.cells {
        w.write_record(summary_row(report, cell))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Long-format benchmark solution: `kind, system, index, value`, with
/// 1-based system, action and constraint indices.
pub fn write_lp(cfg: &ExperimentConfig, lp: &LpSolution, path: &Path) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["kind", "system", "index", "value"])?;
    let status = match lp.status {
        LpStatus::Optimal => "optimal",
        LpStatus::Infeasible => "infeasible",
        LpStatus::Unbounded => "unbounded",
    };
    w.write_record(["status", "", "", status])?;
    let bounds = &cfg.instance.lp.bounds;
    for (l, d) in bounds.iter().enumerate() {
        w.write_record(["bound", "", &(l + 1).to_string(), &fmt_float(*d)])?;
    }
    if lp.status == LpStatus::Optimal {
        w.write_record(["objective", "", "", &fmt_float(lp.objective)])?;
        for (n, weights) in lp.weights.iter().enumerate() {
            for (a, theta) in weights.iter().enumerate() {
                w.write_record(["weight", &(n + 1).to_string(), &(a + 1).to_string(), &fmt_float(*theta)])?;
            }
        }
        for (l, g) in lp.achieved.iter().enumerate() {
            w.write_record(["achieved", "", &(l + 1).to_string(), &fmt_float(*g)])?;
        }
        for (l, gamma) in lp.multipliers.iter().enumerate() {
            w.write_record(["multiplier", "", &(l + 1).to_string(), &fmt_float(*gamma)])?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `E[X] - E[min(X, cap)]` for `X ~ Poisson(mean)`.
pub fn poisson_clip_bias(mean: f64, cap: f64) -> f64 {
    let mut log_p = -mean;
    let mut bias = 0.0;
    let mut k = 0.0f64;
    let tail_end = mean + 40.0 * mean.sqrt().max(1.0);
    while k <= tail_end {
        if k > cap {
            bias += (k - cap) * log_p.exp();
        }
        k += 1.0;
        log_p += mean.ln() - k.ln();
    }
    bias
}

/// Human-readable summary printed after a run.
pub fn render_report(cfg: &ExperimentConfig, report: &ExperimentReport) -> String {
    let mut out = String::new();
    let dim = report.bounds.len();
    match report.lp_objective() {
        Some(e) => out.push_str(&format!("benchmark objective {e:.6}\n")),
        None => out.push_str(&format!("benchmark status {:?}\n", report.lp.status)),
    }
    for (l, comp) in cfg.instance.external.components.iter().enumerate() {
        if let ArrivalDist::Poisson { mean, cap } = comp.dist {
            out.push_str(&format!(
                "external {}: poisson({mean}) clipped at {cap}, mean shifted by {:.3e}\n",
                l + 1,
                poisson_clip_bias(mean, cap)
            ));
        }
    }
    out.push_str(&format!("{:>10} {:>6} {:>14} {:>12}", "v", "seed", "avg_penalty", "violation"));
    for l in 1..=dim {
        out.push_str(&format!(" {:>10}", format!("queue_{l}")));
    }
    out.push('\n');
    for cell in &report.cells {
        let v = cell.v.map_or_else(|| "-".to_string(), |v| v.to_string());
        out.push_str(&format!(
            "{v:>10} {:>6} {:>14.6} {:>12.4e}",
            cell.seed,
            cell.metrics.avg_penalty,
            cell.max_violation(&report.bounds)
        ));
        for q in &cell.metrics.avg_queues {
            out.push_str(&format!(" {q:>10.3}"));
        }
        out.push('\n');
    }
    if report.check {
        out.push_str(&format!("check: {} violation(s)\n", report.check_failures()));
    }
    out.push_str(&format!("wrote {}\n", report.out_dir.display()));
    out
}

/// Samples every distinct system definition and checks its declarations.
pub fn validate_instance(cfg: &ExperimentConfig, samples: u64, seed: u64) -> Vec<(String, ValidationReport)> {
    cfg.instance
        .groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut rng = stream_rng(seed, i as u64);
            (g.name.clone(), validate_model(&g.model, samples, &mut rng))
        })
        .collect()
}

pub fn render_validation(reports: &[(String, ValidationReport)]) -> String {
    let mut out = String::new();
    for (name, report) in reports {
        out.push_str(&format!(
            "{name}: y_max {} z_max {} residual bound {}\n",
            report.bounds.y_max, report.bounds.z_max, report.residual_bound
        ));
        for a in &report.actions {
            out.push_str(&format!(
                "  action {}: {} frames, length {:.4} (declared {}), max z-score {:.2}, {} bound violation(s), {} flagged residual(s)\n",
                a.action.0 + 1,
                a.samples,
                a.length.mean,
                a.declared.t_hat,
                a.max_z_score(),
                a.violation_count,
                a.flagged_residuals().count()
            ));
            for r in a.flagged_residuals() {
                out.push_str(&format!(
                    "    E[(T - {})^2 | T >= {}] = {:.3} exceeds {}\n",
                    r.s, r.s, r.estimate, report.residual_bound
                ));
            }
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}
