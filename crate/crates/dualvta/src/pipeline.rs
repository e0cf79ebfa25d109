//! Scenario execution: domain setup, one solve per arm, activation metrics,
//! thresholded regions with their comparison and coverage tables, and the
//! optional configuration/amplitude search.

use std::path::{Path, PathBuf};

use dualvta_core::activation::{
    activation_field, summed_center_hessians, worst_case_directions, ActivationField, AxonPolicy, EvaluationGrid,
    Metric, Orientation, ThresholdTable,
};
use dualvta_core::conductivity::{
    from_isotropic, homogeneous, isotropic_from_labels, restrict_heterogeneity_box, tensor_from_diffusion, TissueClass,
    TissueTable,
};
use dualvta_core::geometry::{
    average_lead_axis, lowermost_contacts_center, voxelize_leads, ConductorMap, ContactRef, ContactRole, LeadSpec,
    StimulationSetting,
};
use dualvta_core::math::{normalize, norm, sub, Vec3};
use dualvta_core::optimizer::{
    default_feasible_set, strategy1_optimize, strategy2_enumerate, BankGeometry, ConfigurationBank,
    ContactConfiguration, OptimizationResult, OptimizationSpec, UnitSolutionBank,
};
use dualvta_core::solver::{
    assemble, driven_current, floating_net_current, solve, DiscreteSystem, FieldSolution, OuterBoundary, SolverConfig,
};
use dualvta_core::volume::{TensorVolume, VoxelGrid};
use dualvta_core::vta::{
    combined_af_vta, combined_ef_vta, compare_to_dual, coverage, superpose_vtas, threshold_vta, ComparisonReport,
    CoverageReport, Provenance, TargetSpec, VtaMask,
};

use crate::config::{
    contact_ref, ArmConfig, ArmKind, BankKind, BoundaryKind, ConductivityConfig, ConfigError, DrivenContact,
    LoadedScenario, OrientationConfig, RoleKind, StrategyKind, TargetConfig, TissueSource, DEFAULT_TISSUES,
};
use crate::io::{self, IoError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{context}: {source}")]
    Core { context: String, source: dualvta_core::Error },
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    /// 2 for solver non-convergence, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Core { source: dualvta_core::Error::NotConverged { .. }, .. } => 2,
            _ => 1,
        }
    }
}

pub(crate) trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, PipelineError>;
}

impl<T> Context<T> for dualvta_core::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, PipelineError> {
        self.map_err(|source| PipelineError::Core { context: what(), source })
    }
}

fn invalid(field: &str, message: impl Into<String>) -> PipelineError {
    PipelineError::Config(ConfigError::Invalid { field: field.into(), message: message.into() })
}

/// Everything derived from the scenario before any solve.
#[derive(Debug, Clone)]
pub struct Domain {
    pub grid: VoxelGrid,
    pub leads: Vec<LeadSpec>,
    pub map: ConductorMap,
    pub sigma: TensorVolume,
    pub isotropic_fallbacks: usize,
    pub eval: EvaluationGrid,
    pub pulse_width_us: f64,
    pub ef_threshold: f64,
    pub af_threshold: Option<f64>,
    pub axon: Option<AxonPolicy>,
    pub targets: Vec<TargetSpec>,
    pub boundary: BoundaryKind,
    pub solver: SolverConfig,
}

/// Bounds the leads grown by `padding`, and the `reach` box around `anchor`.
fn padded_grid(leads: &[LeadSpec], h: f64, padding: f64, anchor: Vec3, reach: f64) -> Result<VoxelGrid, PipelineError> {
    let mut lo: Vec3 = std::array::from_fn(|a| anchor[a] - reach);
    let mut hi: Vec3 = std::array::from_fn(|a| anchor[a] + reach);
    for lead in leads {
        let mut pts = vec![lead.tip()];
        for c in lead.contacts() {
            for s in [c.axial_offset, c.axial_offset + c.height] {
                pts.push(std::array::from_fn(|a| lead.tip()[a] + s * lead.axis()[a]));
            }
        }
        let r = lead.shaft_radius() + padding;
        for p in pts {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a] - r);
                hi[a] = hi[a].max(p[a] + r);
            }
        }
    }
    let first: [i64; 3] = std::array::from_fn(|a| ((lo[a] - anchor[a]) / h).floor() as i64);
    let last: [i64; 3] = std::array::from_fn(|a| ((hi[a] - anchor[a]) / h).ceil() as i64);
    let dims = std::array::from_fn(|a| (last[a] - first[a] + 1) as usize);
    let origin = std::array::from_fn(|a| anchor[a] + first[a] as f64 * h);
    VoxelGrid::new(dims, [h; 3], origin).context(|| "domain".into())
}

fn tissue_table(source: &TissueSource) -> Result<TissueTable, PipelineError> {
    let classes = match source {
        TissueSource::Preset(_) => DEFAULT_TISSUES
            .iter()
            .map(|(label, name, sigma)| TissueClass { label: *label, name: (*name).into(), sigma: *sigma })
            .collect(),
        TissueSource::Table(rows) => rows
            .iter()
            .map(|r| TissueClass { label: r.label, name: r.name.clone(), sigma: r.sigma_s_per_mm })
            .collect(),
    };
    TissueTable::new(classes).context(|| "conductivity.tissues".into())
}

fn target_spec(loaded: &LoadedScenario, t: &TargetConfig, eval: EvaluationGrid) -> Result<TargetSpec, PipelineError> {
    if let Some(p) = &t.mask {
        return Ok(TargetSpec::from_mask(t.name.clone(), &io::read_mask(&loaded.resolve(p))?, eval));
    }
    let inside: Box<dyn Fn(Vec3) -> bool> = match (&t.sphere, &t.aabb) {
        (Some(s), _) => {
            let (c, r) = (s.center_mm, s.radius_mm);
            Box::new(move |p| norm(sub(p, c)) <= r)
        }
        (_, Some(b)) => {
            let (lo, hi) = (b.min_mm, b.max_mm);
            Box::new(move |p| (0..3).all(|a| lo[a] <= p[a] && p[a] <= hi[a]))
        }
        _ => unreachable!("validated"),
    };
    TargetSpec::new(t.name.clone(), eval, (0..eval.len()).map(|i| inside(eval.node(i))).collect())
        .context(|| format!("target '{}'", t.name))
}

pub fn prepare(loaded: &LoadedScenario) -> Result<Domain, PipelineError> {
    let s = &loaded.scenario;
    let leads = loaded.lead_specs();
    let center = match s.evaluation.center_mm {
        Some(c) => c,
        None => lowermost_contacts_center(&leads).context(|| "evaluation.center_mm".into())?,
    };
    let eval = EvaluationGrid::new(center, s.evaluation.side_mm, s.evaluation.spacing_mm).context(|| "evaluation".into())?;

    let (grid, sigma, isotropic_fallbacks) = match &s.conductivity {
        ConductivityConfig::Homogeneous { sigma_s_per_mm } => {
            let h = s.domain.spacing_mm.expect("validated");
            let grid = match (s.domain.dims, s.domain.origin_mm) {
                (Some(dims), Some(origin)) => VoxelGrid::new(dims, [h; 3], origin).context(|| "domain".into())?,
                _ => {
                    // Axon samples and derivative stencils reach past the evaluation box.
                    let reach = 0.5 * s.evaluation.side_mm + 0.5 * s.axon.length_mm + 2.0 * h;
                    padded_grid(&leads, h, s.domain.padding_mm, center, reach)?
                }
            };
            (grid, homogeneous(grid, *sigma_s_per_mm), 0)
        }
        ConductivityConfig::Volumes { labels, tissues, diffusion, heterogeneity_box } => {
            let labels = io::read_labels(&loaded.resolve(labels))?;
            let grid = *labels.grid();
            if let Some(h) = s.domain.spacing_mm {
                if grid.spacing() != [h; 3] {
                    return Err(invalid("domain.spacing_mm", format!("label volume spacing is {:?}", grid.spacing())));
                }
            }
            let iso = isotropic_from_labels(&labels, &tissue_table(tissues)?).context(|| "conductivity.labels".into())?;
            let (mut tensors, fallbacks) = match diffusion {
                Some(p) => {
                    let d = io::read_tensor(&loaded.resolve(p))?;
                    let t = tensor_from_diffusion(&iso, &d).context(|| "conductivity.diffusion".into())?;
                    (t.tensors, t.isotropic_fallbacks)
                }
                None => (from_isotropic(&iso), 0),
            };
            if let Some(b) = heterogeneity_box {
                let c = match b.center_mm {
                    Some(c) => c,
                    None => lowermost_contacts_center(&leads).context(|| "conductivity.heterogeneity_box".into())?,
                };
                tensors = restrict_heterogeneity_box(&tensors, c, b.half_width_mm, b.sigma_background_s_per_mm);
            }
            (grid, tensors, fallbacks)
        }
    };
    let map = voxelize_leads(&grid, &leads).context(|| "leads".into())?;

    let pw = s.stimulation.pulse_width_us;
    let ef_table = ThresholdTable::new(Metric::EfNorm, s.thresholds.ef_v_per_mm.clone()).context(|| "thresholds.ef_v_per_mm".into())?;
    let ef_threshold = ef_table.threshold_for(pw).context(|| "thresholds.ef_v_per_mm".into())?;
    let af_threshold = match &s.thresholds.af_v_per_mm2 {
        Some(points) => {
            let t = ThresholdTable::new(Metric::AfMax, points.clone()).context(|| "thresholds.af_v_per_mm2".into())?;
            Some(t.threshold_for(pw).context(|| "thresholds.af_v_per_mm2".into())?)
        }
        None => None,
    };
    let wants_af = af_threshold.is_some()
        || s.optimization.as_ref().is_some_and(|o| o.metric == crate::config::MetricName::Af);
    let axon = if wants_af {
        let orientation = match &s.axon.orientation {
            OrientationConfig::Fixed(v) => Orientation::Fixed(normalize(*v).expect("validated")),
            OrientationConfig::WorstCasePerpendicular => {
                Orientation::WorstCasePerpendicular { reference: average_lead_axis(&leads).context(|| "leads".into())? }
            }
        };
        Some(AxonPolicy::new(s.axon.length_mm, s.axon.step_mm, orientation).context(|| "axon".into())?)
    } else {
        None
    };
    let targets = s.targets.iter().map(|t| target_spec(loaded, t, eval)).collect::<Result<Vec<_>, _>>()?;
    Ok(Domain {
        grid,
        leads,
        map,
        sigma,
        isotropic_fallbacks,
        eval,
        pulse_width_us: pw,
        ef_threshold,
        af_threshold,
        axon,
        targets,
        boundary: s.domain.boundary,
        solver: s.solver.solver_config(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloatingReport {
    pub contact: ContactRef,
    pub potential_v: f64,
    pub net_current_a: f64,
}

#[derive(Debug, Clone)]
pub struct ArmResult {
    /// `dual`, `single<k>` or `aware<k>`, with 1-based lead numbers.
    pub name: String,
    pub kind: ArmKind,
    pub lead: Option<usize>,
    pub setting: StimulationSetting,
    pub solution: FieldSolution,
    pub unknowns: usize,
    pub floating: Vec<FloatingReport>,
    pub driven_current_a: f64,
}

fn role(c: &DrivenContact) -> ContactRole {
    match c.role {
        RoleKind::Cathode => ContactRole::Cathode { voltage: c.voltage_v.expect("validated") },
        RoleKind::Anode => ContactRole::AnodeGround,
        RoleKind::Floating => ContactRole::Floating,
    }
}

fn setting_of(contacts: &[DrivenContact], pulse_width_us: f64) -> Result<StimulationSetting, PipelineError> {
    let mut s = StimulationSetting::new(pulse_width_us).context(|| "stimulation".into())?;
    for c in contacts {
        s = s.with(contact_ref(c), role(c)).context(|| "stimulation".into())?;
    }
    Ok(s)
}

/// Map with only `keep` among the leads.
fn single_lead_map(map: &ConductorMap, leads: usize, keep: usize) -> ConductorMap {
    (0..leads).filter(|l| *l != keep).fold(map.clone(), |m, l| m.without_lead(l))
}

pub fn arm_name(kind: ArmKind, lead: Option<usize>) -> String {
    match (kind, lead) {
        (ArmKind::Dual, _) => "dual".into(),
        (ArmKind::Single, Some(l)) => format!("single{}", l + 1),
        (ArmKind::GeometryAware, Some(l)) => format!("aware{}", l + 1),
        _ => unreachable!("validated"),
    }
}

fn boundary(kind: BoundaryKind) -> OuterBoundary<'static> {
    match kind {
        BoundaryKind::Grounded => OuterBoundary::Grounded,
        BoundaryKind::Insulated => OuterBoundary::Insulated,
    }
}

fn solve_system(
    domain: &Domain,
    map: &ConductorMap,
    setting: &StimulationSetting,
    what: &str,
) -> Result<(DiscreteSystem, FieldSolution), PipelineError> {
    let sys = assemble(&domain.sigma, map, setting, boundary(domain.boundary)).context(|| format!("assembling {what}"))?;
    let sol = solve(&sys, &domain.solver).context(|| format!("solving {what}"))?;
    Ok((sys, sol))
}

pub fn solve_arm(loaded: &LoadedScenario, domain: &Domain, arm: &ArmConfig) -> Result<ArmResult, PipelineError> {
    let stim = &loaded.scenario.stimulation;
    let setting = match (&arm.contacts, arm.lead) {
        (Some(c), _) => setting_of(c, stim.pulse_width_us)?,
        (None, Some(l)) => setting_of(&stim.contacts, stim.pulse_width_us)?.restricted_to_lead(l),
        (None, None) => setting_of(&stim.contacts, stim.pulse_width_us)?,
    };
    let map = match (arm.kind, arm.lead) {
        (ArmKind::Single, Some(l)) => single_lead_map(&domain.map, domain.leads.len(), l),
        _ => domain.map.clone(),
    };
    let name = arm_name(arm.kind, arm.lead);
    let (sys, solution) = solve_system(domain, &map, &setting, &format!("arm {name}"))?;
    let mut floating = Vec::new();
    for c in sys.floating_contacts() {
        floating.push(FloatingReport {
            contact: c,
            potential_v: solution.floating_potentials[&c],
            net_current_a: floating_net_current(&solution, &sys, c).context(|| format!("arm {name}"))?,
        });
    }
    let driven_current_a = driven_current(&solution, &sys).context(|| format!("arm {name}"))?;
    Ok(ArmResult { name, kind: arm.kind, lead: arm.lead, setting, solution, unknowns: sys.unknowns(), floating, driven_current_a })
}

pub fn solve_arms(loaded: &LoadedScenario, domain: &Domain) -> Result<Vec<ArmResult>, PipelineError> {
    loaded.arms().iter().map(|a| solve_arm(loaded, domain, a)).collect()
}

/// Activation fields for a set of solutions sampled along one shared set of
/// axons: with worst-case orientation, the directions of `reference` (an
/// index into `solutions`) are reused for every other solution.
pub fn shared_activation(
    domain: &Domain,
    solutions: &[&FieldSolution],
    reference: usize,
) -> Result<Vec<ActivationField>, PipelineError> {
    let eval = &domain.eval;
    let Some(policy) = &domain.axon else {
        return solutions.iter().map(|s| activation_field(s, eval, None).context(|| "activation".into())).collect();
    };
    if matches!(policy.orientation, Orientation::Fixed(_)) {
        return solutions.iter().map(|s| activation_field(s, eval, Some(policy)).context(|| "activation".into())).collect();
    }
    let first = activation_field(solutions[reference], eval, Some(policy)).context(|| "activation".into())?;
    let dirs = first.af.as_ref().expect("policy given").directions.clone();
    let shared = AxonPolicy { orientation: Orientation::PerNode(dirs), ..policy.clone() };
    let mut out = Vec::with_capacity(solutions.len());
    for (i, s) in solutions.iter().enumerate() {
        if i == reference {
            out.push(first.clone());
        } else {
            out.push(activation_field(s, eval, Some(&shared)).context(|| "activation".into())?);
        }
    }
    Ok(out)
}

pub fn arm_activation(domain: &Domain, arms: &[ArmResult]) -> Result<Vec<ActivationField>, PipelineError> {
    let reference = arms.iter().position(|a| a.kind == ArmKind::Dual).unwrap_or(0);
    shared_activation(domain, &arms.iter().map(|a| &a.solution).collect::<Vec<_>>(), reference)
}

#[derive(Debug, Clone)]
pub struct CoverageRow {
    pub target: String,
    pub method: String,
    pub report: CoverageReport,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    /// Per metric: dual, single per lead, then `V` and `C` when there are two
    /// single-lead arms.
    pub masks: Vec<VtaMask>,
    pub reports: Vec<(Metric, ComparisonReport)>,
    pub coverage: Vec<CoverageRow>,
}

impl Comparison {
    pub fn mask(&self, label: &str) -> Option<&VtaMask> {
        self.masks.iter().find(|m| m.label() == label)
    }
}

pub fn compare(domain: &Domain, arms: &[ArmResult], fields: &[ActivationField]) -> Result<Comparison, PipelineError> {
    let ctx = || "comparison".to_string();
    let dual_idx = arms.iter().position(|a| a.kind == ArmKind::Dual).ok_or_else(|| invalid("arms", "comparisons need a dual arm"))?;
    let mut singles: Vec<(usize, usize)> =
        arms.iter().enumerate().filter(|(_, a)| a.kind == ArmKind::Single).map(|(i, a)| (a.lead.expect("validated"), i)).collect();
    singles.sort();
    let keep = &fields[dual_idx].valid;
    let mut metrics = vec![(Metric::EfNorm, domain.ef_threshold)];
    if let Some(t) = domain.af_threshold {
        metrics.push((Metric::AfMax, t));
    }
    let (mut masks, mut reports, mut cov) = (Vec::new(), Vec::new(), Vec::new());
    for (metric, th) in metrics {
        let dual = threshold_vta(&fields[dual_idx], metric, th, Provenance::Dual).context(ctx)?;
        let mut group = vec![dual.clone()];
        for (lead, i) in &singles {
            group.push(threshold_vta(&fields[*i], metric, th, Provenance::Single(*lead)).context(ctx)?.restricted_to(keep).context(ctx)?);
        }
        if let [(_, a), (_, b)] = singles[..] {
            group.push(superpose_vtas(&group[1], &group[2]).context(ctx)?);
            let c = match metric {
                Metric::EfNorm => combined_ef_vta(&fields[a], &fields[b], th),
                Metric::AfMax => combined_af_vta(&fields[a], &fields[b], th),
            };
            group.push(c.context(ctx)?.restricted_to(keep).context(ctx)?);
        }
        reports.push((metric, compare_to_dual(&dual, &group.iter().collect::<Vec<_>>()).context(ctx)?));
        for t in &domain.targets {
            for m in &group {
                cov.push(CoverageRow {
                    target: t.name.clone(),
                    method: m.label(),
                    report: coverage(m, t, &dual).context(|| format!("coverage of '{}'", t.name))?,
                });
            }
        }
        masks.extend(group);
    }
    Ok(Comparison { masks, reports, coverage: cov })
}

#[derive(Debug, Clone)]
pub struct OptimizationRun {
    pub strategy: StrategyKind,
    pub metric: Metric,
    pub threshold: f64,
    pub target: String,
    pub target_nodes: usize,
    pub required_nodes: usize,
    pub bank: BankKind,
    pub result: OptimizationResult,
    pub solves: Vec<(String, usize, f64)>,
}

fn bank_solve(
    domain: &Domain,
    bank: BankKind,
    config: &ContactConfiguration,
) -> Result<FieldSolution, PipelineError> {
    let setting = config.setting(1.0, domain.pulse_width_us).context(|| format!("configuration {config}"))?;
    let map = match bank {
        BankKind::DualGeometry => domain.map.clone(),
        BankKind::SingleLead => {
            let leads: std::collections::BTreeSet<usize> =
                config.cathodes().iter().chain(config.anodes()).map(|c| c.lead).collect();
            if leads.len() > 1 {
                return Err(invalid(
                    "optimization.bank",
                    format!("configuration {config} spans several leads; use the dual_geometry bank"),
                ));
            }
            single_lead_map(&domain.map, domain.leads.len(), *leads.first().expect("non-empty cathodes"))
        }
    };
    Ok(solve_system(domain, &map, &setting, &format!("configuration {config}"))?.1)
}

/// Activation fields for a bank of solutions; worst-case axons follow the
/// summed center Hessians so every field shares them.
fn bank_activation(domain: &Domain, solutions: &[FieldSolution]) -> Result<Vec<ActivationField>, PipelineError> {
    let ctx = || "optimization bank".to_string();
    let Some(policy) = &domain.axon else {
        return solutions.iter().map(|s| activation_field(s, &domain.eval, None).context(ctx)).collect();
    };
    let shared = match &policy.orientation {
        Orientation::WorstCasePerpendicular { reference } => {
            let probe = AxonPolicy { orientation: Orientation::Fixed(*reference), ..policy.clone() };
            let first: Vec<ActivationField> =
                solutions.iter().map(|s| activation_field(s, &domain.eval, Some(&probe))).collect::<Result<_, _>>().context(ctx)?;
            let sum = summed_center_hessians(&first.iter().collect::<Vec<_>>()).context(ctx)?;
            AxonPolicy { orientation: Orientation::PerNode(worst_case_directions(&sum, *reference).context(ctx)?), ..policy.clone() }
        }
        _ => policy.clone(),
    };
    solutions.iter().map(|s| activation_field(s, &domain.eval, Some(&shared)).context(ctx)).collect()
}

pub fn optimize(loaded: &LoadedScenario, domain: &Domain) -> Result<Option<OptimizationRun>, PipelineError> {
    let Some(o) = &loaded.scenario.optimization else { return Ok(None) };
    let metric = o.metric.metric();
    let threshold = match (o.threshold, metric) {
        (Some(t), _) => t,
        (None, Metric::EfNorm) => domain.ef_threshold,
        (None, Metric::AfMax) => domain.af_threshold.expect("validated"),
    };
    let target = domain.targets.iter().find(|t| t.name == o.target).expect("validated").clone();
    let target_nodes = target.target_count();
    let mut spec = OptimizationSpec::new(metric, threshold, o.coverage_fraction, target);
    spec.max_amplitude = o.max_amplitude_v;
    spec.amplitude_step = o.amplitude_step_v;
    spec.signed = o.signed;
    spec.validate().context(|| "optimization".into())?;
    let required_nodes = spec.required_points();

    let contacts: Vec<ContactRef> = domain
        .leads
        .iter()
        .enumerate()
        .flat_map(|(l, lead)| lead.contacts().iter().map(move |c| ContactRef::new(l, c.id)))
        .collect();
    let configs: Vec<ContactConfiguration> = match o.strategy {
        StrategyKind::Amplitudes => contacts.iter().map(|c| ContactConfiguration::monopolar(*c)).collect(),
        StrategyKind::Configurations => match &o.configurations {
            Some(list) => list
                .iter()
                .map(|e| {
                    let r = |v: &[(usize, u32)]| v.iter().map(|(l, c)| ContactRef::new(*l, *c)).collect();
                    ContactConfiguration::new(r(&e.cathodes), r(&e.anodes))
                })
                .collect::<Result<_, _>>()
                .context(|| "optimization.configurations".into())?,
            None => default_feasible_set(&contacts, o.cross_lead),
        },
    };
    let mut unique = configs.clone();
    unique.sort_by_key(|c| format!("{c}"));
    unique.dedup();
    let mut solutions = Vec::with_capacity(unique.len());
    let mut solves = Vec::with_capacity(unique.len());
    for c in &unique {
        let s = bank_solve(domain, o.bank, c)?;
        solves.push((format!("{c}"), s.iterations.unwrap_or(0), s.residual_norm.unwrap_or(0.0)));
        solutions.push(s);
    }
    let fields = bank_activation(domain, &solutions)?;
    let geometry = match o.bank {
        BankKind::DualGeometry => BankGeometry::DualGeometry,
        BankKind::SingleLead => BankGeometry::SingleLead,
    };
    let result = match o.strategy {
        StrategyKind::Amplitudes => {
            let entries = unique.iter().map(|c| c.cathodes()[0]).zip(fields).collect();
            let bank = UnitSolutionBank::new(geometry, entries).context(|| "optimization bank".into())?;
            strategy1_optimize(&bank, &spec).context(|| "optimization".into())?
        }
        StrategyKind::Configurations => {
            let bank = ConfigurationBank::new(unique.iter().cloned().zip(fields).collect()).context(|| "optimization bank".into())?;
            strategy2_enumerate(&bank, &spec, &configs).context(|| "optimization".into())?
        }
    };
    Ok(Some(OptimizationRun {
        strategy: o.strategy,
        metric,
        threshold,
        target: o.target.clone(),
        target_nodes,
        required_nodes,
        bank: o.bank,
        result,
        solves,
    }))
}

/// How far a command runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Solve,
    Activation,
    Compare,
    Optimize,
    Run,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Solve => "solve",
            Stage::Activation => "activation",
            Stage::Compare => "compare",
            Stage::Optimize => "optimize",
            Stage::Run => "run",
        }
    }

    fn solves_arms(self) -> bool {
        self != Stage::Optimize
    }

    fn activation(self) -> bool {
        matches!(self, Stage::Activation | Stage::Compare | Stage::Run)
    }

    fn compare(self) -> bool {
        matches!(self, Stage::Compare | Stage::Run)
    }

    fn optimize(self) -> bool {
        matches!(self, Stage::Optimize | Stage::Run)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outputs {
    pub arms: Vec<ArmResult>,
    pub fields: Vec<ActivationField>,
    pub comparison: Option<Comparison>,
    pub optimization: Option<OptimizationRun>,
    /// Files written, relative to the output directory, in write order.
    pub files: Vec<String>,
}

impl Outputs {
    /// An optimization ran and found nothing feasible.
    pub fn infeasible(&self) -> bool {
        self.optimization.as_ref().is_some_and(|o| !o.result.feasible)
    }
}

/// Runs `stage` and writes its artifacts plus `manifest.json`. `log` receives
/// one line per step.
pub fn run(loaded: &LoadedScenario, stage: Stage, log: &mut dyn FnMut(&str)) -> Result<Outputs, PipelineError> {
    let out_dir = loaded.output_dir();
    std::fs::create_dir_all(&out_dir).map_err(|source| PipelineError::Write { path: out_dir.clone(), source })?;
    let domain = prepare(loaded)?;
    log(&format!("domain {:?} voxels at {} mm, evaluation {} nodes", domain.grid.dims(), domain.grid.spacing()[0], domain.eval.len()));
    let mut out = Outputs::default();
    let mut files = Vec::new();
    let record = |p: PathBuf, files: &mut Vec<String>| {
        files.push(rel(&out_dir, &p));
        if p.extension().is_some_and(|e| e == "hdr") {
            files.push(rel(&out_dir, &p.with_extension("raw")));
        }
    };
    if stage.solves_arms() {
        for arm in loaded.arms() {
            let r = solve_arm(loaded, &domain, &arm)?;
            log(&format!(
                "solved {}: {} unknowns, {} iterations, residual {:.2e}",
                r.name,
                r.unknowns,
                r.solution.iterations.unwrap_or(0),
                r.solution.residual_norm.unwrap_or(0.0)
            ));
            record(io::write_scalar(&out_dir, &format!("potential_{}", r.name), &r.solution.potential)?, &mut files);
            out.arms.push(r);
        }
        record(crate::report::write_floating(&out_dir, &out.arms)?, &mut files);
    }
    if stage.activation() {
        out.fields = arm_activation(&domain, &out.arms)?;
        for (arm, f) in out.arms.iter().zip(&out.fields) {
            record(io::write_scalar(&out_dir, &format!("ef_norm_{}", arm.name), &f.to_volume(Metric::EfNorm).context(|| "activation".into())?)?, &mut files);
            if f.af.is_some() {
                record(io::write_scalar(&out_dir, &format!("af_max_{}", arm.name), &f.to_volume(Metric::AfMax).context(|| "activation".into())?)?, &mut files);
            }
        }
        log("activation fields written");
    }
    if stage.compare() && out.arms.iter().any(|a| a.kind == ArmKind::Dual) {
        let cmp = compare(&domain, &out.arms, &out.fields)?;
        for m in &cmp.masks {
            record(io::write_mask(&out_dir, &format!("vta_{}", m.label()), &m.to_volume().context(|| "masks".into())?)?, &mut files);
        }
        record(crate::report::write_comparison(&out_dir, &cmp, domain.targets.first().map(|t| t.name.as_str()))?, &mut files);
        if !domain.targets.is_empty() {
            record(crate::report::write_coverage(&out_dir, &cmp)?, &mut files);
        }
        log(&format!("{} activation regions compared", cmp.masks.len()));
        out.comparison = Some(cmp);
    }
    if stage.optimize() {
        if let Some(o) = optimize(loaded, &domain)? {
            for p in crate::report::write_optimization(&out_dir, &o)? {
                record(p, &mut files);
            }
            log(&format!("optimization {}", if o.result.feasible { "feasible" } else { "infeasible" }));
            out.optimization = Some(o);
        }
    }
    files.push("manifest.json".into());
    out.files = files;
    crate::manifest::write(&out_dir, &crate::manifest::Manifest::new(loaded, &domain, stage, &out))?;
    Ok(out)
}

fn rel(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned()
}
