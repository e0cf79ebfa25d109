//! Scenario files: one JSON document describing geometry, conductivity,
//! stimulation arms, evaluation, thresholds, targets and optimization.
//!
//! Lengths are in mm, conductivities in S/mm, voltages in V and pulse widths
//! in microseconds; key names carry the unit. Relative paths resolve against
//! the scenario file's directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dualvta_core::activation::Metric;
use dualvta_core::geometry::{ContactRef, ContactSpec, LeadSpec};
use dualvta_core::math::{normalize, Vec3};
use dualvta_core::solver::Preconditioner;
use dualvta_core::Reduction;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{field}: {message}")]
    Parse { field: String, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub domain: DomainConfig,
    pub leads: Vec<LeadConfig>,
    pub stimulation: StimulationConfig,
    /// Defaults to the dual arm plus one single-lead arm per lead.
    #[serde(default)]
    pub arms: Option<Vec<ArmConfig>>,
    pub conductivity: ConductivityConfig,
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub axon: AxonConfig,
    pub thresholds: ThresholdConfig,
    #[serde(default)]
    pub targets: Vec<TargetConfig>,
    #[serde(default)]
    pub optimization: Option<OptimizationConfig>,
    #[serde(default)]
    pub solver: SolverSection,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    #[default]
    Grounded,
    Insulated,
}

/// Either an explicit grid (`dims` + `origin_mm`) or a grid padded around the
/// contacts and aligned so the evaluation center is a voxel center. Volume
/// conductivity sources bring their own grid, and `dims`/`origin_mm` must then
/// be absent.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub spacing_mm: Option<f64>,
    #[serde(default = "default_padding")]
    pub padding_mm: f64,
    pub dims: Option<[usize; 3]>,
    pub origin_mm: Option<Vec3>,
    #[serde(default)]
    pub boundary: BoundaryKind,
}

fn default_padding() -> f64 {
    20.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub enum LeadTemplate {
    #[serde(rename = "3387")]
    Model3387,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LeadConfig {
    pub tip_mm: Vec3,
    /// Tip-to-proximal direction; normalized on load.
    pub axis: Vec3,
    pub template: Option<LeadTemplate>,
    pub shaft_radius_mm: Option<f64>,
    pub insulated_length_mm: Option<f64>,
    pub contacts: Option<Vec<ContactConfig>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ContactConfig {
    pub id: u32,
    pub offset_mm: f64,
    pub height_mm: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum RoleKind {
    Cathode,
    Anode,
    Floating,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DrivenContact {
    pub lead: usize,
    pub contact: u32,
    pub role: RoleKind,
    /// Required for cathodes.
    pub voltage_v: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StimulationConfig {
    pub pulse_width_us: f64,
    pub contacts: Vec<DrivenContact>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ArmKind {
    /// All leads present, full stimulation.
    Dual,
    /// One lead alone, the others removed from the domain.
    Single,
    /// One lead driven, the others present and floating.
    GeometryAware,
}

/// `contacts` overrides the stimulation's roles; by default an arm on `lead`
/// uses the stimulation restricted to that lead.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub kind: ArmKind,
    pub lead: Option<usize>,
    pub contacts: Option<Vec<DrivenContact>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum TissueSource {
    Preset(String),
    Table(Vec<TissueEntry>),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TissueEntry {
    pub label: u32,
    pub name: String,
    pub sigma_s_per_mm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    /// Defaults to the midpoint of the lowermost contacts.
    pub center_mm: Option<Vec3>,
    pub half_width_mm: f64,
    pub sigma_background_s_per_mm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConductivityConfig {
    Homogeneous {
        sigma_s_per_mm: f64,
    },
    Volumes {
        labels: PathBuf,
        tissues: TissueSource,
        diffusion: Option<PathBuf>,
        heterogeneity_box: Option<BoxConfig>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub side_mm: f64,
    pub spacing_mm: f64,
    /// Defaults to the midpoint of the lowermost contacts.
    pub center_mm: Option<Vec3>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OrientationConfig {
    WorstCasePerpendicular,
    Fixed(Vec3),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AxonConfig {
    #[serde(default = "default_axon_length")]
    pub length_mm: f64,
    #[serde(default = "default_axon_step")]
    pub step_mm: f64,
    #[serde(default = "default_orientation")]
    pub orientation: OrientationConfig,
}

fn default_axon_length() -> f64 {
    1.0
}

fn default_axon_step() -> f64 {
    0.1
}

fn default_orientation() -> OrientationConfig {
    OrientationConfig::WorstCasePerpendicular
}

impl Default for AxonConfig {
    fn default() -> Self {
        AxonConfig { length_mm: default_axon_length(), step_mm: default_axon_step(), orientation: default_orientation() }
    }
}

/// `(pulse width us, threshold)` points; AF metrics run only when `af_v_per_mm2`
/// is present.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub ef_v_per_mm: Vec<(f64, f64)>,
    pub af_v_per_mm2: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SphereConfig {
    pub center_mm: Vec3,
    pub radius_mm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AabbConfig {
    pub min_mm: Vec3,
    pub max_mm: Vec3,
}

/// Exactly one of `mask`, `sphere`, `aabb`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub name: String,
    pub mask: Option<PathBuf>,
    pub sphere: Option<SphereConfig>,
    pub aabb: Option<AabbConfig>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Rank contact configurations by minimal-amplitude spill.
    Configurations,
    /// Optimize a per-contact amplitude vector.
    Amplitudes,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum BankKind {
    SingleLead,
    #[default]
    DualGeometry,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Ef,
    Af,
}

impl MetricName {
    pub fn metric(self) -> Metric {
        match self {
            MetricName::Ef => Metric::EfNorm,
            MetricName::Af => Metric::AfMax,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigurationEntry {
    /// `[lead, contact]` pairs.
    pub cathodes: Vec<(usize, u32)>,
    #[serde(default)]
    pub anodes: Vec<(usize, u32)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OptimizationConfig {
    pub strategy: StrategyKind,
    pub metric: MetricName,
    pub target: String,
    pub coverage_fraction: f64,
    /// Overrides the threshold table at the stimulation pulse width.
    pub threshold: Option<f64>,
    #[serde(default = "default_max_amplitude")]
    pub max_amplitude_v: f64,
    #[serde(default = "default_amplitude_step")]
    pub amplitude_step_v: f64,
    #[serde(default)]
    pub signed: bool,
    #[serde(default)]
    pub bank: BankKind,
    #[serde(default)]
    pub cross_lead: bool,
    /// Defaults to monopolar plus within-lead bipolar configurations.
    pub configurations: Option<Vec<ConfigurationEntry>>,
}

fn default_max_amplitude() -> f64 {
    10.0
}

fn default_amplitude_step() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerName {
    None,
    #[default]
    Jacobi,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReductionName {
    #[default]
    FixedOrder,
    Unordered,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tolerance")]
    pub relative_tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub preconditioner: PreconditionerName,
    #[serde(default)]
    pub reduction: ReductionName,
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_max_iterations() -> usize {
    20_000
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            relative_tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            preconditioner: PreconditionerName::default(),
            reduction: ReductionName::default(),
        }
    }
}

impl SolverSection {
    pub fn solver_config(&self) -> dualvta_core::solver::SolverConfig {
        dualvta_core::solver::SolverConfig {
            relative_tolerance: self.relative_tolerance,
            max_iterations: self.max_iterations,
            preconditioner: match self.preconditioner {
                PreconditionerName::None => Preconditioner::None,
                PreconditionerName::Jacobi => Preconditioner::Diagonal,
            },
            reduction: match self.reduction {
                ReductionName::FixedOrder => Reduction::FixedOrder,
                ReductionName::Unordered => Reduction::Unordered,
            },
        }
    }
}

/// Tissue conductivities used when `tissues` is `"default"`. Labels: 0
/// background, 1 gray, 2 white, 3 csf. These are generic literature-style
/// values, not fitted to any dataset; pin explicit values for reproducible
/// studies.
pub const DEFAULT_TISSUES: [(u32, &str, f64); 4] =
    [(0, "background", 1.23e-4), (1, "gray", 1.23e-4), (2, "white", 7.54e-5), (3, "csf", 2.0e-3)];

/// A parsed scenario plus where it came from.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub base_dir: PathBuf,
    /// SHA-256 of the file bytes.
    pub digest: String,
}

impl LoadedScenario {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() { p.to_path_buf() } else { self.base_dir.join(p) }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.scenario.output_dir)
    }
}

pub fn load(path: &Path) -> Result<LoadedScenario, ConfigError> {
    let bytes = fs::read(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let loaded = parse(&bytes, base_dir)?;
    Ok(loaded)
}

pub fn parse(bytes: &[u8], base_dir: PathBuf) -> Result<LoadedScenario, ConfigError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        ConfigError::Parse { field: if field == "." { "<root>".into() } else { field }, message: e.into_inner().to_string() }
    })?;
    let digest = hex::encode(Sha256::digest(bytes));
    let loaded = LoadedScenario { scenario, base_dir, digest };
    loaded.validate()?;
    Ok(loaded)
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 { Ok(()) } else { Err(invalid(field, format!("must be positive and finite, got {v}"))) }
}

fn check_file(field: &str, loaded: &LoadedScenario, p: &Path) -> Result<(), ConfigError> {
    let full = loaded.resolve(p);
    if full.is_file() { Ok(()) } else { Err(invalid(field, format!("file not found: {}", full.display()))) }
}

impl LoadedScenario {
    fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        let d = &s.domain;
        if let Some(h) = d.spacing_mm {
            positive("domain.spacing_mm", h)?;
        }
        if d.padding_mm.is_nan() || d.padding_mm < 0.0 {
            return Err(invalid("domain.padding_mm", "must be >= 0"));
        }
        if d.dims.is_some() != d.origin_mm.is_some() {
            return Err(invalid("domain", "dims and origin_mm go together"));
        }
        match &s.conductivity {
            ConductivityConfig::Homogeneous { sigma_s_per_mm } => {
                positive("conductivity.sigma_s_per_mm", *sigma_s_per_mm)?;
                if d.spacing_mm.is_none() {
                    return Err(invalid("domain.spacing_mm", "required for homogeneous conductivity"));
                }
            }
            ConductivityConfig::Volumes { labels, tissues, diffusion, heterogeneity_box } => {
                if d.dims.is_some() {
                    return Err(invalid("domain.dims", "the grid comes from conductivity.labels"));
                }
                check_file("conductivity.labels", self, labels)?;
                if let Some(p) = diffusion {
                    check_file("conductivity.diffusion", self, p)?;
                }
                match tissues {
                    TissueSource::Preset(name) if name != "default" => {
                        return Err(invalid("conductivity.tissues", format!("unknown preset '{name}'")));
                    }
                    TissueSource::Table(rows) => {
                        for (i, r) in rows.iter().enumerate() {
                            positive(&format!("conductivity.tissues[{i}].sigma_s_per_mm"), r.sigma_s_per_mm)?;
                        }
                    }
                    _ => {}
                }
                if let Some(b) = heterogeneity_box {
                    if b.half_width_mm.is_nan() || b.half_width_mm < 0.0 {
                        return Err(invalid("conductivity.heterogeneity_box.half_width_mm", "must be >= 0"));
                    }
                    positive("conductivity.heterogeneity_box.sigma_background_s_per_mm", b.sigma_background_s_per_mm)?;
                }
            }
        }
        if s.leads.is_empty() {
            return Err(invalid("leads", "at least one lead is required"));
        }
        for (i, l) in s.leads.iter().enumerate() {
            lead_spec(l).map_err(|m| invalid(format!("leads[{i}]"), m))?;
        }
        positive("stimulation.pulse_width_us", s.stimulation.pulse_width_us)?;
        self.check_contacts("stimulation.contacts", &s.stimulation.contacts, None)?;
        let arms = self.arms();
        let mut duals = 0;
        for (i, arm) in arms.iter().enumerate() {
            let field = format!("arms[{i}]");
            match (arm.kind, arm.lead) {
                (ArmKind::Dual, None) => duals += 1,
                (ArmKind::Dual, Some(_)) => return Err(invalid(format!("{field}.lead"), "dual arms take no lead")),
                (_, None) => return Err(invalid(format!("{field}.lead"), "required for single-lead arms")),
                (_, Some(l)) if l >= s.leads.len() => {
                    return Err(invalid(format!("{field}.lead"), format!("no lead {l} ({} defined)", s.leads.len())));
                }
                _ => {}
            }
            if let Some(c) = &arm.contacts {
                self.check_contacts(&format!("{field}.contacts"), c, arm.lead.filter(|_| arm.kind == ArmKind::Single))?;
            }
        }
        if duals > 1 {
            return Err(invalid("arms", "at most one dual arm"));
        }
        let singles: BTreeSet<usize> = arms.iter().filter(|a| a.kind == ArmKind::Single).filter_map(|a| a.lead).collect();
        if singles.len() != arms.iter().filter(|a| a.kind == ArmKind::Single).count() {
            return Err(invalid("arms", "one single-lead arm per lead at most"));
        }
        let e = &s.evaluation;
        positive("evaluation.side_mm", e.side_mm)?;
        positive("evaluation.spacing_mm", e.spacing_mm)?;
        positive("axon.length_mm", s.axon.length_mm)?;
        positive("axon.step_mm", s.axon.step_mm)?;
        if let OrientationConfig::Fixed(v) = &s.axon.orientation {
            if normalize(*v).is_none() {
                return Err(invalid("axon.orientation.fixed", "direction must be nonzero"));
            }
        }
        if s.thresholds.ef_v_per_mm.is_empty() {
            return Err(invalid("thresholds.ef_v_per_mm", "at least one point is required"));
        }
        let mut names = BTreeSet::new();
        for (i, t) in s.targets.iter().enumerate() {
            let field = format!("targets[{i}]");
            if !names.insert(t.name.as_str()) {
                return Err(invalid(format!("{field}.name"), format!("duplicate target '{}'", t.name)));
            }
            let given = t.mask.is_some() as u8 + t.sphere.is_some() as u8 + t.aabb.is_some() as u8;
            if given != 1 {
                return Err(invalid(&field, "exactly one of mask, sphere, aabb"));
            }
            if let Some(p) = &t.mask {
                check_file(&format!("{field}.mask"), self, p)?;
            }
            if let Some(sp) = &t.sphere {
                positive(&format!("{field}.sphere.radius_mm"), sp.radius_mm)?;
            }
        }
        if let Some(o) = &s.optimization {
            if !names.contains(o.target.as_str()) {
                return Err(invalid("optimization.target", format!("no target named '{}'", o.target)));
            }
            if !(0.0..=1.0).contains(&o.coverage_fraction) {
                return Err(invalid("optimization.coverage_fraction", "must lie in [0, 1]"));
            }
            if let Some(t) = o.threshold {
                positive("optimization.threshold", t)?;
            }
            positive("optimization.max_amplitude_v", o.max_amplitude_v)?;
            positive("optimization.amplitude_step_v", o.amplitude_step_v)?;
            if o.metric == MetricName::Af && s.thresholds.af_v_per_mm2.is_none() && o.threshold.is_none() {
                return Err(invalid("optimization.threshold", "AF optimization needs an AF threshold"));
            }
            if let Some(list) = &o.configurations {
                if list.is_empty() {
                    return Err(invalid("optimization.configurations", "must not be empty"));
                }
                for (i, c) in list.iter().enumerate() {
                    for (j, (lead, contact)) in c.cathodes.iter().chain(&c.anodes).enumerate() {
                        self.check_contact_ref(&format!("optimization.configurations[{i}][{j}]"), *lead, *contact)?;
                    }
                }
            }
        }
        let sv = &s.solver;
        positive("solver.relative_tolerance", sv.relative_tolerance)?;
        if sv.max_iterations == 0 {
            return Err(invalid("solver.max_iterations", "must be > 0"));
        }
        Ok(())
    }

    fn check_contact_ref(&self, field: &str, lead: usize, contact: u32) -> Result<(), ConfigError> {
        let leads = &self.scenario.leads;
        let spec = leads.get(lead).ok_or_else(|| invalid(field, format!("no lead {lead} ({} defined)", leads.len())))?;
        let spec = lead_spec(spec).map_err(|m| invalid(field, m))?;
        if spec.contact(contact).is_none() {
            return Err(invalid(field, format!("lead {lead} has no contact {contact}")));
        }
        Ok(())
    }

    fn check_contacts(&self, field: &str, contacts: &[DrivenContact], only_lead: Option<usize>) -> Result<(), ConfigError> {
        let mut seen = BTreeSet::new();
        for (i, c) in contacts.iter().enumerate() {
            let f = format!("{field}[{i}]");
            self.check_contact_ref(&f, c.lead, c.contact)?;
            if let Some(l) = only_lead {
                if c.lead != l {
                    return Err(invalid(format!("{f}.lead"), format!("single-lead arm on lead {l} cannot drive lead {}", c.lead)));
                }
            }
            if !seen.insert((c.lead, c.contact)) {
                return Err(invalid(&f, "contact listed twice"));
            }
            match (c.role, c.voltage_v) {
                (RoleKind::Cathode, None) => return Err(invalid(format!("{f}.voltage_v"), "required for cathodes")),
                (RoleKind::Cathode, Some(v)) if !v.is_finite() => return Err(invalid(format!("{f}.voltage_v"), "must be finite")),
                (RoleKind::Anode | RoleKind::Floating, Some(_)) => {
                    return Err(invalid(format!("{f}.voltage_v"), "only cathodes take a voltage"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn arms(&self) -> Vec<ArmConfig> {
        self.scenario.arms.clone().unwrap_or_else(|| {
            let mut arms = vec![ArmConfig { kind: ArmKind::Dual, lead: None, contacts: None }];
            if self.scenario.leads.len() > 1 {
                arms.extend((0..self.scenario.leads.len()).map(|l| ArmConfig { kind: ArmKind::Single, lead: Some(l), contacts: None }));
            }
            arms
        })
    }

    pub fn lead_specs(&self) -> Vec<LeadSpec> {
        self.scenario.leads.iter().map(|l| lead_spec(l).expect("validated")).collect()
    }
}

pub fn lead_spec(l: &LeadConfig) -> Result<LeadSpec, String> {
    let axis = normalize(l.axis).ok_or("axis must be nonzero")?;
    match l.template {
        Some(LeadTemplate::Model3387) => {
            if l.shaft_radius_mm.is_some() || l.insulated_length_mm.is_some() || l.contacts.is_some() {
                return Err("template leads take only tip_mm and axis".into());
            }
            LeadSpec::template_3387(l.tip_mm, axis).map_err(|e| e.to_string())
        }
        None => {
            let radius = l.shaft_radius_mm.ok_or("shaft_radius_mm is required without a template")?;
            let length = l.insulated_length_mm.ok_or("insulated_length_mm is required without a template")?;
            let contacts = l.contacts.as_ref().ok_or("contacts are required without a template")?;
            let contacts =
                contacts.iter().map(|c| ContactSpec { id: c.id, axial_offset: c.offset_mm, height: c.height_mm }).collect();
            LeadSpec::new(l.tip_mm, axis, radius, length, contacts).map_err(|e| e.to_string())
        }
    }
}

pub fn contact_ref(c: &DrivenContact) -> ContactRef {
    ContactRef::new(c.lead, c.contact)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal() -> serde_json::Value {
        serde_json::json!({
            "domain": { "spacing_mm": 0.5 },
            "leads": [
                { "tip_mm": [-1.0, 0.0, 0.0], "axis": [0.0, 0.0, 1.0], "template": "3387" },
                { "tip_mm": [1.0, 0.0, 0.0], "axis": [0.0, 0.0, 2.0], "template": "3387" }
            ],
            "stimulation": {
                "pulse_width_us": 60.0,
                "contacts": [
                    { "lead": 0, "contact": 0, "role": "cathode", "voltage_v": -3.0 },
                    { "lead": 1, "contact": 0, "role": "cathode", "voltage_v": -3.0 }
                ]
            },
            "conductivity": { "kind": "homogeneous", "sigma_s_per_mm": 2e-4 },
            "evaluation": { "side_mm": 10.0, "spacing_mm": 0.5 },
            "thresholds": { "ef_v_per_mm": [[60.0, 0.2]] },
            "output_dir": "out"
        })
    }

    fn parse_value(v: &serde_json::Value) -> Result<LoadedScenario, ConfigError> {
        parse(&serde_json::to_vec(v).unwrap(), PathBuf::from("/nonexistent"))
    }

    fn field_of(r: Result<LoadedScenario, ConfigError>) -> String {
        match r {
            Err(ConfigError::Parse { field, .. } | ConfigError::Invalid { field, .. }) => field,
            other => panic!("expected a field error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_scenario_loads_with_defaults() {
        let s = parse_value(&minimal()).unwrap();
        assert_eq!(s.arms().len(), 3);
        assert_eq!(s.scenario.axon, AxonConfig::default());
        assert_eq!(s.scenario.solver.solver_config(), dualvta_core::solver::SolverConfig::default());
        assert_eq!(s.lead_specs()[1].axis(), [0.0, 0.0, 1.0]);
        assert_eq!(s.digest.len(), 64);
        assert_eq!(s.output_dir(), PathBuf::from("/nonexistent/out"));
    }

    #[test]
    fn type_errors_name_the_field() {
        let mut v = minimal();
        v["evaluation"]["spacing_mm"] = serde_json::json!("fine");
        assert_eq!(field_of(parse_value(&v)), "evaluation.spacing_mm");
        let mut v = minimal();
        v["stimulation"]["contacts"][1]["role"] = serde_json::json!("sink");
        assert_eq!(field_of(parse_value(&v)), "stimulation.contacts[1].role");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let mut v = minimal();
        v["conductivity"] = serde_json::json!({
            "kind": "volumes", "labels": "labels.hdr", "tissues": "default"
        });
        v["domain"] = serde_json::json!({});
        assert_eq!(field_of(parse_value(&v)), "conductivity.labels");
        let mut v = minimal();
        v["stimulation"]["contacts"][0]["contact"] = serde_json::json!(7);
        assert_eq!(field_of(parse_value(&v)), "stimulation.contacts[0]");
        let mut v = minimal();
        v["arms"] = serde_json::json!([{ "kind": "single", "lead": 2 }]);
        assert_eq!(field_of(parse_value(&v)), "arms[0].lead");
        let mut v = minimal();
        v["stimulation"]["contacts"][0]["voltage_v"] = serde_json::Value::Null;
        assert_eq!(field_of(parse_value(&v)), "stimulation.contacts[0].voltage_v");
        let mut v = minimal();
        v["optimization"] = serde_json::json!({
            "strategy": "configurations", "metric": "ef", "target": "stn", "coverage_fraction": 0.5
        });
        assert_eq!(field_of(parse_value(&v)), "optimization.target");
    }

    #[test]
    fn digest_tracks_bytes() {
        let a = parse_value(&minimal()).unwrap().digest;
        let mut v = minimal();
        v["output_dir"] = serde_json::json!("elsewhere");
        assert_ne!(a, parse_value(&v).unwrap().digest);
        assert_eq!(a, parse_value(&minimal()).unwrap().digest);
    }
}
