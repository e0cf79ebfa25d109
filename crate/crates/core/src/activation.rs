//! Activation metrics on the evaluation grid: the electric-field norm and the
//! maximum activating function along a straight axon centered on each node.

use alloc::format;
use alloc::vec::Vec;

use crate::math::{self, Sym3, Vec3};
use crate::par;
use crate::solver::FieldSolution;
use crate::volume::{ScalarVolume, VoxelGrid};
use crate::{Error, Result};

/// Cubic lattice of evaluation nodes, `(side / spacing + 1)^3` of them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationGrid {
    center: Vec3,
    side: f64,
    spacing: f64,
    lattice: VoxelGrid,
}

impl EvaluationGrid {
    pub fn new(center: Vec3, side: f64, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0 && side.is_finite() && side >= 0.0) {
            return Err(Error::InvalidGrid(format!("evaluation side {side} / spacing {spacing} must be positive")));
        }
        let steps = libm::round(side / spacing);
        if (steps * spacing - side).abs() > 1e-9 * side.max(1.0) {
            return Err(Error::InvalidGrid(format!("evaluation spacing {spacing} does not divide side {side}")));
        }
        let n = steps as usize + 1;
        let half = steps * spacing / 2.0;
        let origin = [center[0] - half, center[1] - half, center[2] - half];
        let lattice = VoxelGrid::new([n; 3], [spacing; 3], origin)?;
        Ok(EvaluationGrid { center, side, spacing, lattice })
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Nodes per axis.
    pub fn per_axis(&self) -> usize {
        self.lattice.dims()[0]
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn node(&self, idx: usize) -> Vec3 {
        self.lattice.center_of(idx)
    }

    /// The nodes as a voxel grid, for exporting per-node values as volumes.
    pub fn lattice(&self) -> &VoxelGrid {
        &self.lattice
    }

    pub fn matches(&self, other: &EvaluationGrid) -> bool {
        self.lattice.matches(&other.lattice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Orientation {
    Fixed(Vec3),
    /// Per node, the direction perpendicular to `reference` maximizing
    /// `|t^T H t|` at the node.
    WorstCasePerpendicular { reference: Vec3 },
    /// Caller-supplied unit direction per node, so that several fields can be
    /// sampled along identical axons.
    PerNode(Vec<Vec3>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxonPolicy {
    pub length: f64,
    pub step: f64,
    pub orientation: Orientation,
}

impl AxonPolicy {
    pub fn new(length: f64, step: f64, orientation: Orientation) -> Result<Self> {
        let p = AxonPolicy { length, step, orientation };
        p.samples()?;
        match &p.orientation {
            Orientation::Fixed(t) => unit(*t)?,
            Orientation::WorstCasePerpendicular { reference } => {
                unit(*reference).map_err(|_| Error::DegenerateAxis("reference axis must have unit norm".into()))?
            }
            Orientation::PerNode(ts) => {
                for t in ts {
                    unit(*t)?;
                }
            }
        }
        Ok(p)
    }

    /// 1 mm axon sampled every 0.1 mm.
    pub fn standard(orientation: Orientation) -> Result<Self> {
        AxonPolicy::new(1.0, 0.1, orientation)
    }

    /// Number of sample points along the axon, endpoints included.
    pub fn samples(&self) -> Result<usize> {
        if !(self.length.is_finite() && self.length >= 0.0 && self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidSetting(format!(
                "axon length {} and step {} must be positive",
                self.length, self.step
            )));
        }
        let m = libm::round(self.length / self.step);
        if (m * self.step - self.length).abs() > 1e-9 * self.length.max(1.0) {
            return Err(Error::InvalidSetting(format!(
                "axon step {} does not divide length {}",
                self.step, self.length
            )));
        }
        Ok(m as usize + 1)
    }

    /// Signed offsets of the samples from the axon center, mm.
    pub fn offsets(&self) -> Result<Vec<f64>> {
        let n = self.samples()?;
        Ok((0..n).map(|j| j as f64 * self.step - self.length / 2.0).collect())
    }
}

fn unit(t: Vec3) -> Result<()> {
    let n = math::norm(t);
    if (n - 1.0).abs() <= 1e-9 {
        Ok(())
    } else {
        Err(Error::InvalidSetting(format!("axon direction must have unit norm, got {n}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    EfNorm,
    AfMax,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::EfNorm => "ef",
            Metric::AfMax => "af",
        }
    }
}

/// Pulse-width dependent activation thresholds, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    metric: Metric,
    points: Vec<(f64, f64)>,
}

impl ThresholdTable {
    pub fn new(metric: Metric, points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidThresholdTable("table is empty".into()));
        }
        for (k, &(pw, th)) in points.iter().enumerate() {
            if !(th.is_finite() && th > 0.0) {
                return Err(Error::InvalidThresholdTable(format!("threshold at {pw} us must be > 0")));
            }
            if !pw.is_finite() || (k > 0 && !(pw > points[k - 1].0)) {
                return Err(Error::InvalidThresholdTable("pulse widths must be strictly increasing".into()));
            }
        }
        Ok(ThresholdTable { metric, points })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn threshold_for(&self, pulse_width_us: f64) -> Result<f64> {
        let (min, max) = (self.points[0].0, self.points[self.points.len() - 1].0);
        if !(pulse_width_us >= min && pulse_width_us <= max) {
            return Err(Error::PulseWidthOutOfSpan { pulse_width: pulse_width_us, min, max });
        }
        for w in self.points.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if pulse_width_us <= x1 {
                let t = (pulse_width_us - x0) / (x1 - x0);
                return Ok(y0 + t * (y1 - y0));
            }
        }
        Ok(self.points[self.points.len() - 1].1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfField {
    /// `E = -grad u` per node, V/mm.
    pub e: Vec<Vec3>,
    pub norm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfField {
    pub length: f64,
    pub step: f64,
    pub directions: Vec<Vec3>,
    pub samples: usize,
    /// `-t^T H t` per node and sample, node-major, V/mm^2.
    pub phi_tan: Vec<f64>,
    pub phi_max: Vec<f64>,
    pub hessian_center: Vec<Sym3>,
}

impl AfField {
    pub fn phi_tan_of(&self, node: usize) -> &[f64] {
        &self.phi_tan[node * self.samples..(node + 1) * self.samples]
    }

    /// Whether both fields were sampled along the same axons.
    pub fn same_axons(&self, other: &AfField) -> bool {
        self.samples == other.samples
            && self.length == other.length
            && self.step == other.step
            && self.directions == other.directions
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationField {
    pub eval: EvaluationGrid,
    /// Nodes whose nearest solver voxel lies in tissue.
    pub valid: Vec<bool>,
    pub ef: EfField,
    pub af: Option<AfField>,
}

impl ActivationField {
    pub fn values(&self, metric: Metric) -> Result<&[f64]> {
        match metric {
            Metric::EfNorm => Ok(&self.ef.norm),
            Metric::AfMax => self.af.as_ref().map(|a| a.phi_max.as_slice()).ok_or(Error::MissingData("activating function")),
        }
    }

    /// Per-node values as a volume on the evaluation lattice.
    pub fn to_volume(&self, metric: Metric) -> Result<ScalarVolume> {
        ScalarVolume::new(*self.eval.lattice(), self.values(metric)?.to_vec())
    }
}

/// `-grad u` by central differences with the solver spacing.
pub fn field_at(u: &ScalarVolume, p: Vec3) -> Result<Vec3> {
    let h = u.grid().spacing();
    let mut e = [0.0; 3];
    for a in 0..3 {
        let mut lo = p;
        let mut hi = p;
        lo[a] -= h[a];
        hi[a] += h[a];
        e[a] = -(u.trilinear(hi)? - u.trilinear(lo)?) / (2.0 * h[a]);
    }
    Ok(e)
}

/// Hessian by central second differences with the solver spacing.
///
/// Second differences on lattice-aligned steps commute with trilinear
/// interpolation, so this equals the interpolated voxel-level difference
/// Hessian and is exact for quadratic potentials.
pub fn hessian_at(u: &ScalarVolume, p: Vec3) -> Result<Sym3> {
    let h = u.grid().spacing();
    let at = |d: [f64; 3]| u.trilinear([p[0] + d[0], p[1] + d[1], p[2] + d[2]]);
    let u0 = at([0.0; 3])?;
    let mut diag = [0.0; 3];
    for a in 0..3 {
        let mut d = [0.0; 3];
        d[a] = h[a];
        let up = at(d)?;
        d[a] = -h[a];
        let um = at(d)?;
        diag[a] = (up - 2.0 * u0 + um) / (h[a] * h[a]);
    }
    let mixed = |a: usize, b: usize| -> Result<f64> {
        let mut s = 0.0;
        for (sa, sb, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
            let mut d = [0.0; 3];
            d[a] = sa * h[a];
            d[b] = sb * h[b];
            s += w * at(d)?;
        }
        Ok(s / (4.0 * h[a] * h[b]))
    };
    Ok(Sym3::new(diag[0], diag[1], diag[2], mixed(0, 1)?, mixed(0, 2)?, mixed(1, 2)?))
}

/// Unit `t` perpendicular to `reference` maximizing `|t^T H t|`, from the
/// eigen-decomposition of `H` restricted to the perpendicular plane. The sign
/// is fixed so the first non-negligible component is positive.
pub fn worst_case_direction(h: &Sym3, reference: Vec3) -> Vec3 {
    let (e1, e2) = math::perpendicular_basis(reference);
    let a = h.quad(e1);
    let c = h.quad(e2);
    let b = h.bilinear(e1, e2);
    let mean = 0.5 * (a + c);
    let radius = math::sqrt(0.25 * (a - c) * (a - c) + b * b);
    // Angle of the eigenvector of the larger eigenvalue; the smaller one is
    // perpendicular to it.
    let mut theta = 0.5 * libm::atan2(2.0 * b, a - c);
    if (mean - radius).abs() > (mean + radius).abs() {
        theta += core::f64::consts::FRAC_PI_2;
    }
    let t = math::add(math::scale(e1, libm::cos(theta)), math::scale(e2, libm::sin(theta)));
    canonical_sign(t)
}

fn canonical_sign(t: Vec3) -> Vec3 {
    for c in t {
        if c.abs() > 1e-12 {
            return if c < 0.0 { math::scale(t, -1.0) } else { t };
        }
    }
    t
}

/// Worst-case perpendicular directions for a set of per-node Hessians.
pub fn worst_case_directions(hessians: &[Sym3], reference: Vec3) -> Result<Vec<Vec3>> {
    let reference = math::normalize(reference).ok_or_else(|| Error::DegenerateAxis("zero reference axis".into()))?;
    Ok(par::collect(hessians.len(), |i| worst_case_direction(&hessians[i], reference)))
}

/// Node-wise sum of several fields' center Hessians, e.g. to choose one set of
/// axon directions shared by a bank of unit fields.
pub fn summed_center_hessians(fields: &[&ActivationField]) -> Result<Vec<Sym3>> {
    let first = fields.first().ok_or(Error::MissingData("activation fields"))?;
    let mut out = alloc::vec![Sym3::ZERO; first.eval.len()];
    for f in fields {
        if !f.eval.matches(&first.eval) {
            return Err(Error::GridMismatch);
        }
        let af = f.af.as_ref().ok_or(Error::MissingData("activating function"))?;
        for (o, h) in out.iter_mut().zip(&af.hessian_center) {
            *o = o.plus(h);
        }
    }
    Ok(out)
}

fn validity(solution: &FieldSolution, eval: &EvaluationGrid) -> Vec<bool> {
    let grid = solution.potential.grid();
    par::collect(eval.len(), |i| match grid.nearest(eval.node(i)) {
        Some([a, b, c]) => !solution.is_blocked(grid.linear(a, b, c)),
        None => false,
    })
}

fn collect_results<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    par::collect(n, f).into_iter().collect()
}

pub fn ef_field(solution: &FieldSolution, eval: &EvaluationGrid) -> Result<EfField> {
    let u = &solution.potential;
    let e = collect_results(eval.len(), |i| field_at(u, eval.node(i)))?;
    let norm = e.iter().map(|v| math::norm(*v)).collect();
    Ok(EfField { e, norm })
}

pub fn af_max_field(solution: &FieldSolution, eval: &EvaluationGrid, policy: &AxonPolicy) -> Result<AfField> {
    let u = &solution.potential;
    let offsets = policy.offsets()?;
    let samples = offsets.len();
    if let Orientation::PerNode(ts) = &policy.orientation {
        if ts.len() != eval.len() {
            return Err(Error::AxonMismatch(ts.len()));
        }
    }
    let reference = match &policy.orientation {
        Orientation::WorstCasePerpendicular { reference } => Some(
            math::normalize(*reference).ok_or_else(|| Error::DegenerateAxis("zero reference axis".into()))?,
        ),
        _ => None,
    };
    let per_node = collect_results(eval.len(), |i| {
        let p = eval.node(i);
        let hc = hessian_at(u, p)?;
        let t = match (&policy.orientation, reference) {
            (Orientation::Fixed(t), _) => *t,
            (Orientation::PerNode(ts), _) => ts[i],
            (_, Some(r)) => worst_case_direction(&hc, r),
            _ => unreachable!(),
        };
        let mut phi = Vec::with_capacity(samples);
        for &s in &offsets {
            let h = if s == 0.0 { hc } else { hessian_at(u, math::add(p, math::scale(t, s)))? };
            phi.push(-h.quad(t));
        }
        Ok((hc, t, phi))
    })?;
    let mut af = AfField {
        length: policy.length,
        step: policy.step,
        directions: Vec::with_capacity(eval.len()),
        samples,
        phi_tan: Vec::with_capacity(eval.len() * samples),
        phi_max: Vec::with_capacity(eval.len()),
        hessian_center: Vec::with_capacity(eval.len()),
    };
    for (hc, t, phi) in per_node {
        af.phi_max.push(phi.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        af.phi_tan.extend_from_slice(&phi);
        af.directions.push(t);
        af.hessian_center.push(hc);
    }
    Ok(af)
}

/// EF metrics, plus AF metrics when `policy` is given.
pub fn activation_field(
    solution: &FieldSolution,
    eval: &EvaluationGrid,
    policy: Option<&AxonPolicy>,
) -> Result<ActivationField> {
    Ok(ActivationField {
        eval: *eval,
        valid: validity(solution, eval),
        ef: ef_field(solution, eval)?,
        af: policy.map(|p| af_max_field(solution, eval, p)).transpose()?,
    })
}
