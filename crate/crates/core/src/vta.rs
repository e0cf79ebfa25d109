//! Thresholded activation regions, the single-lead approximations of the
//! dual-lead region, and comparison/coverage statistics against it.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::activation::{ActivationField, EvaluationGrid, Metric};
use crate::math;
use crate::volume::{MaskVolume, Volume};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Dual,
    /// Lead index (0-based).
    Single(usize),
    /// Union of single-lead regions.
    Superposed,
    /// Region of the superposed physical quantity.
    Combined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VtaMask {
    pub eval: EvaluationGrid,
    pub active: Vec<bool>,
    pub metric: Metric,
    pub provenance: Provenance,
}

impl VtaMask {
    pub fn count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Short name such as `dual_ef`, `single2_af`, `V_ef`, `C_af`.
    pub fn label(&self) -> String {
        let m = self.metric.name();
        match self.provenance {
            Provenance::Dual => format!("dual_{m}"),
            Provenance::Single(k) => format!("single{}_{m}", k + 1),
            Provenance::Superposed => format!("V_{m}"),
            Provenance::Combined => format!("C_{m}"),
        }
    }

    /// The mask with every node outside `keep` cleared.
    pub fn restricted_to(&self, keep: &[bool]) -> Result<VtaMask> {
        if keep.len() != self.active.len() {
            return Err(Error::SizeMismatch { expected: self.active.len(), actual: keep.len() });
        }
        let mut out = self.clone();
        for (a, k) in out.active.iter_mut().zip(keep) {
            *a &= *k;
        }
        Ok(out)
    }

    pub fn to_volume(&self) -> Result<MaskVolume> {
        Volume::new(*self.eval.lattice(), self.active.clone())
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold.is_finite() && threshold > 0.0 { Ok(()) } else { Err(Error::InvalidThreshold(threshold)) }
}

/// Nodes whose metric is at least `threshold` (and that lie in tissue).
pub fn threshold_vta(field: &ActivationField, metric: Metric, threshold: f64, provenance: Provenance) -> Result<VtaMask> {
    check_threshold(threshold)?;
    let values = field.values(metric)?;
    let active = values.iter().zip(&field.valid).map(|(v, ok)| *ok && *v >= threshold).collect();
    Ok(VtaMask { eval: field.eval, active, metric, provenance })
}

pub fn superpose_vtas(m1: &VtaMask, m2: &VtaMask) -> Result<VtaMask> {
    if !m1.eval.matches(&m2.eval) {
        return Err(Error::GridMismatch);
    }
    if m1.metric != m2.metric {
        return Err(Error::MetricMismatch);
    }
    let active = m1.active.iter().zip(&m2.active).map(|(a, b)| *a || *b).collect();
    Ok(VtaMask { eval: m1.eval, active, metric: m1.metric, provenance: Provenance::Superposed })
}

fn check_pair(f1: &ActivationField, f2: &ActivationField) -> Result<()> {
    if !f1.eval.matches(&f2.eval) {
        return Err(Error::GridMismatch);
    }
    if f1.ef.e.len() != f1.eval.len() || f2.ef.e.len() != f2.eval.len() {
        return Err(Error::MissingData("electric field vectors"));
    }
    Ok(())
}

/// `||E1 + E2|| >= threshold`.
pub fn combined_ef_vta(f1: &ActivationField, f2: &ActivationField, threshold: f64) -> Result<VtaMask> {
    check_threshold(threshold)?;
    check_pair(f1, f2)?;
    let active = (0..f1.eval.len())
        .map(|i| f1.valid[i] && f2.valid[i] && math::norm(math::add(f1.ef.e[i], f2.ef.e[i])) >= threshold)
        .collect();
    Ok(VtaMask { eval: f1.eval, active, metric: Metric::EfNorm, provenance: Provenance::Combined })
}

/// `max_s |phi_tan,1(s) + phi_tan,2(s)| >= threshold`, both fields sampled on
/// the same axons.
pub fn combined_af_vta(f1: &ActivationField, f2: &ActivationField, threshold: f64) -> Result<VtaMask> {
    check_threshold(threshold)?;
    check_pair(f1, f2)?;
    let a1 = f1.af.as_ref().ok_or(Error::MissingData("activating function"))?;
    let a2 = f2.af.as_ref().ok_or(Error::MissingData("activating function"))?;
    if !a1.same_axons(a2) {
        let first = a1.directions.iter().zip(&a2.directions).position(|(x, y)| x != y).unwrap_or(0);
        return Err(Error::AxonMismatch(first));
    }
    let active = (0..f1.eval.len())
        .map(|i| {
            let phi = a1.phi_tan_of(i).iter().zip(a2.phi_tan_of(i)).fold(0.0f64, |m, (x, y)| m.max((x + y).abs()));
            f1.valid[i] && f2.valid[i] && phi >= threshold
        })
        .collect();
    Ok(VtaMask { eval: f1.eval, active, metric: Metric::AfMax, provenance: Provenance::Combined })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub total: usize,
    /// Active in the method but not in the dual region.
    pub exclusive: usize,
    /// Active in the dual region but not in the method.
    pub missed: usize,
    /// Percentages of the dual total; `None` when the dual region is empty.
    pub total_pct_of_dual: Option<f64>,
    pub exclusive_pct_of_dual: Option<f64>,
    pub missed_pct_of_dual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub dual_total: usize,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn normalized(&self) -> bool {
        self.dual_total > 0
    }
}

fn pct(n: usize, of: usize) -> Option<f64> {
    (of > 0).then(|| 100.0 * n as f64 / of as f64)
}

pub fn compare_to_dual(dual: &VtaMask, methods: &[&VtaMask]) -> Result<ComparisonReport> {
    let dual_total = dual.count();
    let mut rows = Vec::with_capacity(methods.len());
    for m in methods {
        if !m.eval.matches(&dual.eval) {
            return Err(Error::GridMismatch);
        }
        let (mut total, mut exclusive, mut missed) = (0, 0, 0);
        for (a, d) in m.active.iter().zip(&dual.active) {
            total += usize::from(*a);
            exclusive += usize::from(*a && !*d);
            missed += usize::from(*d && !*a);
        }
        rows.push(ComparisonRow {
            method: m.label(),
            total,
            exclusive,
            missed,
            total_pct_of_dual: pct(total, dual_total),
            exclusive_pct_of_dual: pct(exclusive, dual_total),
            missed_pct_of_dual: pct(missed, dual_total),
        });
    }
    Ok(ComparisonReport { dual_total, rows })
}

/// Target region on the evaluation grid; its complement is every other node.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub name: String,
    pub eval: EvaluationGrid,
    pub target: Vec<bool>,
}

impl TargetSpec {
    pub fn new(name: impl Into<String>, eval: EvaluationGrid, target: Vec<bool>) -> Result<Self> {
        if target.len() != eval.len() {
            return Err(Error::SizeMismatch { expected: eval.len(), actual: target.len() });
        }
        Ok(TargetSpec { name: name.into(), eval, target })
    }

    /// Nearest-neighbor resampling of a mask volume; nodes outside it are
    /// non-target.
    pub fn from_mask(name: impl Into<String>, mask: &MaskVolume, eval: EvaluationGrid) -> Self {
        let g = mask.grid();
        let target = (0..eval.len())
            .map(|i| match g.nearest(eval.node(i)) {
                Some([a, b, c]) => *mask.get(a, b, c),
                None => false,
            })
            .collect();
        TargetSpec { name: name.into(), eval, target }
    }

    pub fn target_count(&self) -> usize {
        self.target.iter().filter(|t| **t).count()
    }

    pub fn complement_count(&self) -> usize {
        self.target.len() - self.target_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    /// Percent of target nodes active.
    pub target_pct: f64,
    /// Percent of non-target nodes active.
    pub nontarget_pct: f64,
    /// Ratios to the dual region's percentages, in percent; `None` when the
    /// dual value is zero.
    pub target_pct_of_dual: Option<f64>,
    pub nontarget_pct_of_dual: Option<f64>,
}

fn coverage_pcts(mask: &VtaMask, target: &TargetSpec) -> (f64, f64) {
    let (mut inside, mut outside) = (0usize, 0usize);
    for (a, t) in mask.active.iter().zip(&target.target) {
        if *a {
            if *t {
                inside += 1;
            } else {
                outside += 1;
            }
        }
    }
    let nc = target.complement_count();
    (
        100.0 * inside as f64 / target.target_count() as f64,
        if nc > 0 { 100.0 * outside as f64 / nc as f64 } else { 0.0 },
    )
}

pub fn coverage(mask: &VtaMask, target: &TargetSpec, dual: &VtaMask) -> Result<CoverageReport> {
    if !mask.eval.matches(&target.eval) || !dual.eval.matches(&target.eval) {
        return Err(Error::GridMismatch);
    }
    if target.target_count() == 0 {
        return Err(Error::EmptyTarget);
    }
    let (t, n) = coverage_pcts(mask, target);
    let (dt, dn) = coverage_pcts(dual, target);
    let ratio = |x: f64, d: f64| (d > 0.0).then(|| 100.0 * x / d);
    Ok(CoverageReport {
        target_pct: t,
        nontarget_pct: n,
        target_pct_of_dual: ratio(t, dt),
        nontarget_pct_of_dual: ratio(n, dn),
    })
}
