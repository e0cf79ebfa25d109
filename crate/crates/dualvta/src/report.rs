//! CSV tables and the optimization summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dualvta_core::optimizer::MinimalAmplitude;

use crate::config::StrategyKind;
use crate::pipeline::{ArmResult, Comparison, OptimizationRun, PipelineError};

pub const COMPARISON_COLUMNS: [&str; 9] = [
    "method",
    "total",
    "exclusive",
    "missed",
    "total_pct_of_dual",
    "target_pct",
    "nontarget_pct",
    "target_pct_of_dual",
    "nontarget_pct_of_dual",
];

pub const COVERAGE_COLUMNS: [&str; 6] =
    ["target", "method", "target_pct", "nontarget_pct", "target_pct_of_dual", "nontarget_pct_of_dual"];

pub const RANKING_COLUMNS: [&str; 6] = ["rank", "configuration", "lambda_v", "objective", "coverage_pct", "status"];

/// Fixed six-decimal rendering so tables diff cleanly.
pub fn num(v: f64) -> String {
    format!("{v:.6}")
}

/// Scientific rendering for quantities spanning many decades.
pub fn sci(v: f64) -> String {
    format!("{v:.6e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, PipelineError> {
    let err = |e: csv::Error| PipelineError::Write { path: path.to_path_buf(), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|source| PipelineError::Write { path: path.to_path_buf(), source })?;
    Ok(path.to_path_buf())
}

pub fn write_floating(dir: &Path, arms: &[ArmResult]) -> Result<PathBuf, PipelineError> {
    let rows: Vec<Vec<String>> = arms
        .iter()
        .flat_map(|a| {
            a.floating.iter().map(move |f| {
                vec![
                    a.name.clone(),
                    f.contact.to_string(),
                    num(f.potential_v),
                    sci(f.net_current_a),
                    sci(a.driven_current_a),
                ]
            })
        })
        .collect();
    write_csv(&dir.join("floating.csv"), &["arm", "contact", "potential_v", "net_current_a", "driven_current_a"], &rows)
}

/// One row per region; the coverage columns refer to `target` and stay empty
/// without one.
pub fn comparison_rows(cmp: &Comparison, target: Option<&str>) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (_, report) in &cmp.reports {
        for r in &report.rows {
            let cov = target.and_then(|t| cmp.coverage.iter().find(|c| c.target == t && c.method == r.method));
            let mut row = vec![r.method.clone(), r.total.to_string(), r.exclusive.to_string(), r.missed.to_string(), opt(r.total_pct_of_dual)];
            match cov {
                Some(c) => row.extend([
                    num(c.report.target_pct),
                    num(c.report.nontarget_pct),
                    opt(c.report.target_pct_of_dual),
                    opt(c.report.nontarget_pct_of_dual),
                ]),
                None => row.extend(std::iter::repeat(String::new()).take(4)),
            }
            rows.push(row);
        }
    }
    rows
}

pub fn write_comparison(dir: &Path, cmp: &Comparison, target: Option<&str>) -> Result<PathBuf, PipelineError> {
    write_csv(&dir.join("comparison.csv"), &COMPARISON_COLUMNS, &comparison_rows(cmp, target))
}

pub fn write_coverage(dir: &Path, cmp: &Comparison) -> Result<PathBuf, PipelineError> {
    let rows: Vec<Vec<String>> = cmp
        .coverage
        .iter()
        .map(|c| {
            vec![
                c.target.clone(),
                c.method.clone(),
                num(c.report.target_pct),
                num(c.report.nontarget_pct),
                opt(c.report.target_pct_of_dual),
                opt(c.report.nontarget_pct_of_dual),
            ]
        })
        .collect();
    write_csv(&dir.join("coverage.csv"), &COVERAGE_COLUMNS, &rows)
}

fn status(a: &MinimalAmplitude) -> (&'static str, String) {
    match a {
        MinimalAmplitude::Feasible(v) => ("feasible", num(*v)),
        MinimalAmplitude::AboveBound(v) => ("above_bound", num(*v)),
        MinimalAmplitude::Unreachable => ("unreachable", String::new()),
    }
}

/// Ranking (configurations) or amplitude table (amplitudes), plus a text
/// summary of the winner.
pub fn write_optimization(dir: &Path, o: &OptimizationRun) -> Result<Vec<PathBuf>, PipelineError> {
    let r = &o.result;
    let mut files = Vec::new();
    match o.strategy {
        StrategyKind::Configurations => {
            let rows: Vec<Vec<String>> = r
                .ranking
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let (s, lambda) = status(&c.amplitude);
                    let rank = if c.objective.is_some() { (i + 1).to_string() } else { String::new() };
                    vec![rank, c.configuration.to_string(), lambda, opt(c.objective), opt(c.coverage_pct), s.into()]
                })
                .collect();
            files.push(write_csv(&dir.join("optimization_ranking.csv"), &RANKING_COLUMNS, &rows)?);
        }
        StrategyKind::Amplitudes => {
            let rows: Vec<Vec<String>> = r.amplitudes.iter().map(|(c, v)| vec![c.to_string(), num(*v)]).collect();
            files.push(write_csv(&dir.join("optimization_amplitudes.csv"), &["contact", "amplitude_v"], &rows)?);
        }
    }
    let mut s = String::new();
    let strategy = match o.strategy {
        StrategyKind::Configurations => "configurations",
        StrategyKind::Amplitudes => "amplitudes",
    };
    let bank = match o.bank {
        crate::config::BankKind::SingleLead => "single_lead",
        crate::config::BankKind::DualGeometry => "dual_geometry",
    };
    let _ = writeln!(s, "strategy: {strategy}");
    let _ = writeln!(s, "bank: {bank}");
    let _ = writeln!(s, "metric: {}", o.metric.name());
    let _ = writeln!(s, "threshold: {}", o.threshold);
    let _ = writeln!(s, "target: {} ({} nodes, {} required)", o.target, o.target_nodes, o.required_nodes);
    let _ = writeln!(s, "feasible: {}", if r.feasible { "yes" } else { "no" });
    if r.feasible {
        if let Some(c) = &r.configuration {
            let _ = writeln!(s, "configuration: {c}");
        }
        for (c, v) in &r.amplitudes {
            let _ = writeln!(s, "amplitude {c}: {} V", num(*v));
        }
        let _ = writeln!(s, "objective: {}", num(r.objective));
        let _ = writeln!(s, "coverage_pct: {}", num(r.coverage_pct));
        if r.grid_resolution {
            let _ = writeln!(s, "note: optimum over the amplitude lattice");
        }
    }
    let path = dir.join("optimization_summary.txt");
    std::fs::write(&path, s).map_err(|source| PipelineError::Write { path: path.clone(), source })?;
    files.push(path);
    Ok(files)
}
