//! Run manifest: what was computed, from which configuration, with which
//! solver settings. No timestamps or host details, so identical inputs give
//! identical bytes.

use std::path::Path;

use serde::Serialize;

use dualvta_core::solver::Preconditioner;
use dualvta_core::Reduction;

use crate::config::{BoundaryKind, LoadedScenario};
use crate::pipeline::{Domain, Outputs, PipelineError, Stage};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SolverRecord {
    pub relative_tolerance: f64,
    pub max_iterations: usize,
    pub preconditioner: &'static str,
    pub reduction: &'static str,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FloatingRecord {
    pub contact: String,
    pub potential_v: f64,
    pub net_current_a: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SolveRecord {
    pub name: String,
    pub unknowns: Option<usize>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub driven_current_a: Option<f64>,
    pub floating: Vec<FloatingRecord>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MaskRecord {
    pub label: String,
    pub active_nodes: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub stage: &'static str,
    pub config_sha256: String,
    pub domain_dims: [usize; 3],
    pub domain_spacing_mm: [f64; 3],
    pub domain_origin_mm: [f64; 3],
    pub boundary: &'static str,
    pub isotropic_fallbacks: usize,
    pub evaluation_center_mm: [f64; 3],
    pub evaluation_side_mm: f64,
    pub evaluation_spacing_mm: f64,
    pub evaluation_nodes: usize,
    pub pulse_width_us: f64,
    pub ef_threshold_v_per_mm: f64,
    pub af_threshold_v_per_mm2: Option<f64>,
    pub solver: SolverRecord,
    pub solves: Vec<SolveRecord>,
    pub masks: Vec<MaskRecord>,
    pub optimization_feasible: Option<bool>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(loaded: &LoadedScenario, domain: &Domain, stage: Stage, out: &Outputs) -> Self {
        let mut solves: Vec<SolveRecord> = out
            .arms
            .iter()
            .map(|a| SolveRecord {
                name: a.name.clone(),
                unknowns: Some(a.unknowns),
                iterations: a.solution.iterations.unwrap_or(0),
                relative_residual: a.solution.residual_norm.unwrap_or(0.0),
                driven_current_a: Some(a.driven_current_a),
                floating: a
                    .floating
                    .iter()
                    .map(|f| FloatingRecord { contact: f.contact.to_string(), potential_v: f.potential_v, net_current_a: f.net_current_a })
                    .collect(),
            })
            .collect();
        if let Some(o) = &out.optimization {
            solves.extend(o.solves.iter().map(|(name, iterations, residual)| SolveRecord {
                name: format!("bank {name}"),
                unknowns: None,
                iterations: *iterations,
                relative_residual: *residual,
                driven_current_a: None,
                floating: Vec::new(),
            }));
        }
        let s = &domain.solver;
        Manifest {
            tool: "dualvta",
            version: env!("CARGO_PKG_VERSION"),
            stage: stage.name(),
            config_sha256: loaded.digest.clone(),
            domain_dims: domain.grid.dims(),
            domain_spacing_mm: domain.grid.spacing(),
            domain_origin_mm: domain.grid.origin(),
            boundary: match domain.boundary {
                BoundaryKind::Grounded => "grounded",
                BoundaryKind::Insulated => "insulated",
            },
            isotropic_fallbacks: domain.isotropic_fallbacks,
            evaluation_center_mm: domain.eval.center(),
            evaluation_side_mm: domain.eval.side(),
            evaluation_spacing_mm: domain.eval.spacing(),
            evaluation_nodes: domain.eval.len(),
            pulse_width_us: domain.pulse_width_us,
            ef_threshold_v_per_mm: domain.ef_threshold,
            af_threshold_v_per_mm2: domain.af_threshold,
            solver: SolverRecord {
                relative_tolerance: s.relative_tolerance,
                max_iterations: s.max_iterations,
                preconditioner: match s.preconditioner {
                    Preconditioner::None => "none",
                    Preconditioner::Diagonal => "jacobi",
                },
                reduction: match s.reduction {
                    Reduction::FixedOrder => "fixed_order",
                    Reduction::Unordered => "unordered",
                },
            },
            solves,
            masks: out
                .comparison
                .iter()
                .flat_map(|c| c.masks.iter().map(|m| MaskRecord { label: m.label(), active_nodes: m.count() }))
                .collect(),
            optimization_feasible: out.optimization.as_ref().map(|o| o.result.feasible),
            files: out.files.clone(),
        }
    }
}

pub fn write(dir: &Path, m: &Manifest) -> Result<(), PipelineError> {
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(m).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|source| PipelineError::Write { path, source })
}
