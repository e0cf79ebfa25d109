//! Stimulation optimization over banks of unit-amplitude activation fields.
//!
//! Amplitudes are cathodic voltage magnitudes: a unit field comes from a solve
//! with its cathodes at -1 V, and every metric scales linearly with the
//! amplitude.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::activation::{ActivationField, Metric};
use crate::geometry::{ContactRef, ContactRole, StimulationSetting};
use crate::math::{self, Vec3};
use crate::par;
use crate::vta::TargetSpec;
use crate::{Error, Result};

/// Cathode set plus optional grounded anodes, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContactConfiguration {
    cathodes: Vec<ContactRef>,
    anodes: Vec<ContactRef>,
}

impl ContactConfiguration {
    pub fn new(mut cathodes: Vec<ContactRef>, mut anodes: Vec<ContactRef>) -> Result<Self> {
        cathodes.sort();
        cathodes.dedup();
        anodes.sort();
        anodes.dedup();
        if cathodes.is_empty() {
            return Err(Error::InvalidOptimization("configuration needs a cathode".into()));
        }
        if let Some(c) = cathodes.iter().find(|c| anodes.contains(c)) {
            return Err(Error::InvalidOptimization(format!("{c} is both cathode and anode")));
        }
        Ok(ContactConfiguration { cathodes, anodes })
    }

    pub fn monopolar(c: ContactRef) -> Self {
        ContactConfiguration { cathodes: vec![c], anodes: Vec::new() }
    }

    pub fn bipolar(cathode: ContactRef, anode: ContactRef) -> Result<Self> {
        ContactConfiguration::new(vec![cathode], vec![anode])
    }

    pub fn cathodes(&self) -> &[ContactRef] {
        &self.cathodes
    }

    pub fn anodes(&self) -> &[ContactRef] {
        &self.anodes
    }

    /// The setting that drives this configuration at `amplitude` volts.
    pub fn setting(&self, amplitude: f64, pulse_width_us: f64) -> Result<StimulationSetting> {
        let mut s = StimulationSetting::new(pulse_width_us)?;
        for c in &self.cathodes {
            s = s.with(*c, ContactRole::Cathode { voltage: -amplitude })?;
        }
        for a in &self.anodes {
            s = s.with(*a, ContactRole::AnodeGround)?;
        }
        Ok(s)
    }
}

impl fmt::Display for ContactConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (list, sign) in [(&self.cathodes, '-'), (&self.anodes, '+')] {
            for c in list.iter() {
                if !first {
                    f.write_str(" ")?;
                }
                write!(f, "{c}{sign}")?;
                first = false;
            }
        }
        Ok(())
    }
}

/// Monopolar configurations, ordered cathode/anode pairs within each lead and,
/// with `cross_lead`, one-cathode-per-lead pairs.
pub fn default_feasible_set(contacts: &[ContactRef], cross_lead: bool) -> Vec<ContactConfiguration> {
    let mut sorted = contacts.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut out: Vec<_> = sorted.iter().map(|c| ContactConfiguration::monopolar(*c)).collect();
    for c in &sorted {
        for a in &sorted {
            if c != a && c.lead == a.lead {
                out.push(ContactConfiguration { cathodes: vec![*c], anodes: vec![*a] });
            }
        }
    }
    if cross_lead {
        for c1 in &sorted {
            for c2 in &sorted {
                if c1.lead < c2.lead {
                    out.push(ContactConfiguration { cathodes: vec![*c1, *c2], anodes: Vec::new() });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankGeometry {
    /// Unit solves contain only the driven contact's lead.
    SingleLead,
    /// Unit solves contain every lead, the others floating.
    DualGeometry,
}

/// One unit-amplitude activation field per contact (others floating).
#[derive(Debug, Clone)]
pub struct UnitSolutionBank {
    pub geometry: BankGeometry,
    contacts: Vec<ContactRef>,
    fields: Vec<ActivationField>,
}

fn check_shared(fields: &[&ActivationField]) -> Result<()> {
    let first = fields.first().ok_or(Error::MissingData("unit fields"))?;
    for f in fields {
        if !f.eval.matches(&first.eval) {
            return Err(Error::GridMismatch);
        }
        match (&first.af, &f.af) {
            (Some(a), Some(b)) if !a.same_axons(b) => {
                let i = a.directions.iter().zip(&b.directions).position(|(x, y)| x != y).unwrap_or(0);
                return Err(Error::AxonMismatch(i));
            }
            (Some(_), None) | (None, Some(_)) => return Err(Error::MissingData("activating function")),
            _ => {}
        }
    }
    Ok(())
}

impl UnitSolutionBank {
    pub fn new(geometry: BankGeometry, entries: Vec<(ContactRef, ActivationField)>) -> Result<Self> {
        let mut entries = entries;
        entries.sort_by_key(|(c, _)| *c);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidOptimization(format!("contact {} appears twice", w[0].0)));
            }
        }
        check_shared(&entries.iter().map(|(_, f)| f).collect::<Vec<_>>())?;
        let (contacts, fields) = entries.into_iter().unzip();
        Ok(UnitSolutionBank { geometry, contacts, fields })
    }

    pub fn contacts(&self) -> &[ContactRef] {
        &self.contacts
    }

    pub fn fields(&self) -> &[ActivationField] {
        &self.fields
    }

    pub fn field(&self, c: ContactRef) -> Option<&ActivationField> {
        self.contacts.iter().position(|k| *k == c).map(|i| &self.fields[i])
    }
}

/// Unit-amplitude field per stimulation configuration.
#[derive(Debug, Clone, Default)]
pub struct ConfigurationBank {
    entries: Vec<(ContactConfiguration, ActivationField)>,
}

impl ConfigurationBank {
    pub fn new(entries: Vec<(ContactConfiguration, ActivationField)>) -> Result<Self> {
        check_shared(&entries.iter().map(|(_, f)| f).collect::<Vec<_>>())?;
        Ok(ConfigurationBank { entries })
    }

    /// Monopolar configurations from a unit bank.
    pub fn monopolar(bank: &UnitSolutionBank) -> Self {
        ConfigurationBank {
            entries: bank
                .contacts
                .iter()
                .zip(&bank.fields)
                .map(|(c, f)| (ContactConfiguration::monopolar(*c), f.clone()))
                .collect(),
        }
    }

    pub fn get(&self, c: &ContactConfiguration) -> Option<&ActivationField> {
        self.entries.iter().find(|(k, _)| k == c).map(|(_, f)| f)
    }

    pub fn configurations(&self) -> impl Iterator<Item = &ContactConfiguration> {
        self.entries.iter().map(|(c, _)| c)
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationSpec {
    pub metric: Metric,
    pub threshold: f64,
    /// Required fraction of target nodes at or above threshold.
    pub coverage_fraction: f64,
    pub target: TargetSpec,
    pub max_amplitude: f64,
    pub amplitude_step: f64,
    /// Allow negative (anodic) amplitudes in Strategy 1.
    pub signed: bool,
}

impl OptimizationSpec {
    pub fn new(metric: Metric, threshold: f64, coverage_fraction: f64, target: TargetSpec) -> Self {
        OptimizationSpec {
            metric,
            threshold,
            coverage_fraction,
            target,
            max_amplitude: 10.0,
            amplitude_step: 0.1,
            signed: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::InvalidThreshold(self.threshold));
        }
        if !(0.0..=1.0).contains(&self.coverage_fraction) {
            return Err(Error::InvalidOptimization(format!("coverage fraction {} not in [0, 1]", self.coverage_fraction)));
        }
        if !(self.max_amplitude.is_finite() && self.max_amplitude > 0.0) {
            return Err(Error::InvalidOptimization("amplitude bound must be positive".into()));
        }
        if !(self.amplitude_step.is_finite() && self.amplitude_step > 0.0 && self.amplitude_step <= self.max_amplitude) {
            return Err(Error::InvalidOptimization("amplitude step must lie in (0, bound]".into()));
        }
        if self.target.target_count() == 0 {
            return Err(Error::EmptyTarget);
        }
        Ok(())
    }

    /// `ceil(theta * n(target))`, at least one point.
    pub fn required_points(&self) -> usize {
        let n = self.target.target_count() as f64;
        (libm::ceil(self.coverage_fraction * n - 1e-9) as usize).max(1)
    }

    /// Highest grid index of the amplitude lattice.
    fn grid_steps(&self) -> i64 {
        libm::floor(self.max_amplitude / self.amplitude_step + 1e-9) as i64
    }
}

/// Unit metric per node, zero where the node is not in tissue.
fn unit_metric(field: &ActivationField, metric: Metric) -> Result<Vec<f64>> {
    let v = field.values(metric)?;
    Ok(v.iter().zip(&field.valid).map(|(x, ok)| if *ok { *x } else { 0.0 }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinimalAmplitude {
    Feasible(f64),
    /// Coverage reachable, but only above the amplitude bound.
    AboveBound(f64),
    /// Fewer than the required number of target nodes respond at all.
    Unreachable,
}

impl MinimalAmplitude {
    pub fn value(&self) -> Option<f64> {
        match self {
            MinimalAmplitude::Feasible(v) => Some(*v),
            _ => None,
        }
    }
}

/// Smallest `lambda` with `lambda * q >= threshold`, `lambda` close to
/// `threshold / q`.
fn scale_to_reach(threshold: f64, q: f64) -> f64 {
    let mut lambda = threshold / q;
    while lambda * q < threshold {
        lambda = f64::from_bits(lambda.to_bits() + 1);
    }
    lambda
}

fn minimal_amplitude_of(unit: &[f64], spec: &OptimizationSpec) -> MinimalAmplitude {
    let k = spec.required_points();
    let mut inside: Vec<f64> = unit.iter().zip(&spec.target.target).filter(|(_, t)| **t).map(|(v, _)| *v).collect();
    if inside.len() < k {
        return MinimalAmplitude::Unreachable;
    }
    inside.sort_by(|a, b| b.total_cmp(a));
    let q = inside[k - 1];
    if !(q > 0.0) {
        return MinimalAmplitude::Unreachable;
    }
    let lambda = scale_to_reach(spec.threshold, q);
    if lambda <= spec.max_amplitude { MinimalAmplitude::Feasible(lambda) } else { MinimalAmplitude::AboveBound(lambda) }
}

/// Exact minimal amplitude reaching the coverage constraint, from the
/// `ceil(theta n)`-th largest unit value in the target.
pub fn minimal_amplitude(field: &ActivationField, spec: &OptimizationSpec) -> Result<MinimalAmplitude> {
    spec.validate()?;
    if !field.eval.matches(&spec.target.eval) {
        return Err(Error::GridMismatch);
    }
    Ok(minimal_amplitude_of(&unit_metric(field, spec.metric)?, spec))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedConfiguration {
    pub configuration: ContactConfiguration,
    pub amplitude: MinimalAmplitude,
    /// `sum over the complement of lambda* psi`; `None` when infeasible.
    pub objective: Option<f64>,
    /// Percent of target nodes active at `lambda*`.
    pub coverage_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub feasible: bool,
    /// Strategy 2 winner.
    pub configuration: Option<ContactConfiguration>,
    /// Strategy 1 amplitudes per bank contact (V); for Strategy 2, the
    /// winner's cathodes at `lambda*`.
    pub amplitudes: Vec<(ContactRef, f64)>,
    pub objective: f64,
    pub coverage_pct: f64,
    /// Strategy 2: feasible configurations by rank, then infeasible ones in
    /// input order.
    pub ranking: Vec<RankedConfiguration>,
    /// The optimum is over the amplitude lattice only.
    pub grid_resolution: bool,
}

fn coverage_and_objective(values: &[f64], spec: &OptimizationSpec) -> (usize, f64) {
    let mut covered = 0;
    let mut objective = 0.0;
    for (v, t) in values.iter().zip(&spec.target.target) {
        if *t {
            covered += usize::from(*v >= spec.threshold);
        } else {
            objective += v;
        }
    }
    (covered, objective)
}

fn rank_order(a: &RankedConfiguration, b: &RankedConfiguration) -> Ordering {
    let fa = a.objective.unwrap_or(f64::INFINITY);
    let fb = b.objective.unwrap_or(f64::INFINITY);
    let la = a.amplitude.value().unwrap_or(f64::INFINITY);
    let lb = b.amplitude.value().unwrap_or(f64::INFINITY);
    fa.total_cmp(&fb).then(la.total_cmp(&lb)).then_with(|| a.configuration.cmp(&b.configuration))
}

fn finish_strategy2(mut ranked: Vec<RankedConfiguration>, spec: &OptimizationSpec) -> OptimizationResult {
    let (mut feasible, infeasible): (Vec<_>, Vec<_>) = ranked.drain(..).partition(|r| r.objective.is_some());
    feasible.sort_by(rank_order);
    let best = feasible.first().cloned();
    let mut ranking = feasible;
    ranking.extend(infeasible);
    match best {
        Some(b) => OptimizationResult {
            feasible: true,
            amplitudes: b.configuration.cathodes().iter().map(|c| (*c, b.amplitude.value().unwrap_or(0.0))).collect(),
            objective: b.objective.unwrap_or(0.0),
            coverage_pct: b.coverage_pct.unwrap_or(0.0),
            configuration: Some(b.configuration),
            ranking,
            grid_resolution: false,
        },
        None => {
            let _ = spec;
            OptimizationResult {
                feasible: false,
                configuration: None,
                amplitudes: Vec::new(),
                objective: f64::INFINITY,
                coverage_pct: 0.0,
                ranking,
                grid_resolution: false,
            }
        }
    }
}

fn lookup<'a>(bank: &'a ConfigurationBank, feasible: &[ContactConfiguration]) -> Result<Vec<&'a ActivationField>> {
    if feasible.is_empty() {
        return Err(Error::InvalidOptimization("feasible set is empty".into()));
    }
    feasible
        .iter()
        .map(|c| bank.get(c).ok_or_else(|| Error::MissingConfiguration(format!("{c}"))))
        .collect()
}

/// Strategy 2: minimal amplitude per configuration, ranked by the spill
/// objective over the target complement.
pub fn strategy2_enumerate(
    bank: &ConfigurationBank,
    spec: &OptimizationSpec,
    feasible: &[ContactConfiguration],
) -> Result<OptimizationResult> {
    spec.validate()?;
    let fields = lookup(bank, feasible)?;
    let n_t = spec.target.target_count() as f64;
    let ranked: Result<Vec<_>> = par::collect(feasible.len(), |i| {
        let f = fields[i];
        if !f.eval.matches(&spec.target.eval) {
            return Err(Error::GridMismatch);
        }
        let unit = unit_metric(f, spec.metric)?;
        let amplitude = minimal_amplitude_of(&unit, spec);
        let (objective, coverage_pct) = match amplitude {
            MinimalAmplitude::Feasible(l) => {
                let scaled: Vec<f64> = unit.iter().map(|v| l * v).collect();
                let (covered, obj) = coverage_and_objective(&scaled, spec);
                (Some(obj), Some(100.0 * covered as f64 / n_t))
            }
            _ => (None, None),
        };
        Ok(RankedConfiguration { configuration: feasible[i].clone(), amplitude, objective, coverage_pct })
    })
    .into_iter()
    .collect();
    Ok(finish_strategy2(ranked?, spec))
}

/// Superposes unit physical quantities for an amplitude vector and evaluates
/// the metric per node.
struct Superposer<'a> {
    metric: Metric,
    ef: Vec<&'a [Vec3]>,
    af: Vec<&'a [f64]>,
    valid: Vec<bool>,
    samples: usize,
}

impl<'a> Superposer<'a> {
    fn new(bank: &'a UnitSolutionBank, metric: Metric) -> Result<Self> {
        let n = bank.fields[0].eval.len();
        let mut valid = vec![true; n];
        for f in &bank.fields {
            for (v, ok) in valid.iter_mut().zip(&f.valid) {
                *v &= *ok;
            }
        }
        let (af, samples) = match metric {
            Metric::EfNorm => (Vec::new(), 0),
            Metric::AfMax => {
                let afs: Option<Vec<_>> = bank.fields.iter().map(|f| f.af.as_ref()).collect();
                let afs = afs.ok_or(Error::MissingData("activating function"))?;
                (afs.iter().map(|a| a.phi_tan.as_slice()).collect(), afs[0].samples)
            }
        };
        Ok(Superposer { metric, ef: bank.fields.iter().map(|f| f.ef.e.as_slice()).collect(), af, valid, samples })
    }

    fn values(&self, u: &[f64]) -> Vec<f64> {
        let n = self.valid.len();
        par::collect(n, |i| {
            if !self.valid[i] {
                return 0.0;
            }
            match self.metric {
                Metric::EfNorm => {
                    let mut e = [0.0; 3];
                    for (k, uk) in u.iter().enumerate() {
                        if *uk != 0.0 {
                            e = math::add(e, math::scale(self.ef[k][i], *uk));
                        }
                    }
                    math::norm(e)
                }
                Metric::AfMax => {
                    let s = self.samples;
                    let mut m = 0.0f64;
                    for j in 0..s {
                        let mut phi = 0.0;
                        for (k, uk) in u.iter().enumerate() {
                            if *uk != 0.0 {
                                phi += uk * self.af[k][i * s + j];
                            }
                        }
                        m = m.max(phi.abs());
                    }
                    m
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    steps: Vec<i64>,
    objective: f64,
    covered: usize,
}

fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    let sa: i64 = a.steps.iter().map(|s| s.abs()).sum();
    let sb: i64 = b.steps.iter().map(|s| s.abs()).sum();
    a.objective.total_cmp(&b.objective).then(sa.cmp(&sb)).then_with(|| a.steps.cmp(&b.steps))
}

struct Strategy1<'a> {
    sup: Superposer<'a>,
    spec: &'a OptimizationSpec,
    required: usize,
    lo: i64,
    hi: i64,
}

impl Strategy1<'_> {
    fn evaluate(&self, steps: &[i64]) -> Candidate {
        let u: Vec<f64> = steps.iter().map(|s| *s as f64 * self.spec.amplitude_step).collect();
        let (covered, objective) = coverage_and_objective(&self.sup.values(&u), self.spec);
        Candidate { steps: steps.to_vec(), objective, covered }
    }

    fn feasible(&self, c: &Candidate) -> bool {
        c.covered >= self.required
    }

    fn better(&self, c: &Candidate, best: &Option<Candidate>) -> bool {
        self.feasible(c) && best.as_ref().map_or(true, |b| candidate_order(c, b) == Ordering::Less)
    }

    fn descend(&self, start: Candidate) -> Candidate {
        let n = start.steps.len();
        let mut best = start;
        loop {
            let mut improved = false;
            for k in 0..n {
                let mut local: Option<Candidate> = Some(best.clone());
                for v in self.lo..=self.hi {
                    if v == best.steps[k] {
                        continue;
                    }
                    let mut s = best.steps.clone();
                    s[k] = v;
                    let c = self.evaluate(&s);
                    if self.better(&c, &local) {
                        local = Some(c);
                    }
                }
                let local = local.expect("seeded");
                if local != best {
                    best = local;
                    improved = true;
                }
            }
            // Pair moves trade amplitude between two contacts, which single
            // coordinates cannot do along a tight coverage constraint.
            for k in 0..n {
                for l in 0..n {
                    if k == l {
                        continue;
                    }
                    for (dk, dl) in [(-1, 1), (-1, 0), (1, -1), (-2, 1), (-1, 2)] {
                        let mut s = best.steps.clone();
                        s[k] += dk;
                        s[l] += dl;
                        if s.iter().any(|v| *v < self.lo || *v > self.hi) {
                            continue;
                        }
                        let c = self.evaluate(&s);
                        if self.better(&c, &Some(best.clone())) {
                            best = c;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                match self.frontier_move(&best) {
                    Some(c) => best = c,
                    None => return best,
                }
            }
        }
    }
}

impl Strategy1<'_> {
    /// For each ordered pair `(k, l)` and each lattice value of `u_k`, the
    /// smallest `u_l` restoring coverage (bisection, then verified). Follows
    /// the feasibility frontier where single and paired unit steps stall.
    fn frontier_move(&self, best: &Candidate) -> Option<Candidate> {
        let n = best.steps.len();
        let mut found: Option<Candidate> = None;
        let mut incumbent = Some(best.clone());
        for k in 0..n {
            for l in 0..n {
                if k == l {
                    continue;
                }
                for v in self.lo..=self.hi {
                    let mut s = best.steps.clone();
                    s[k] = v;
                    s[l] = self.hi;
                    if !self.feasible(&self.evaluate(&s)) {
                        continue;
                    }
                    let (mut lo, mut hi) = (self.lo.max(0) - 1, self.hi);
                    while hi - lo > 1 {
                        let mid = lo + (hi - lo) / 2;
                        s[l] = mid;
                        if self.feasible(&self.evaluate(&s)) { hi = mid } else { lo = mid }
                    }
                    s[l] = hi;
                    let c = self.evaluate(&s);
                    if self.better(&c, &incumbent) {
                        incumbent = Some(c.clone());
                        found = Some(c);
                    }
                }
            }
        }
        found
    }
}

fn strategy1_setup<'a>(bank: &'a UnitSolutionBank, spec: &'a OptimizationSpec) -> Result<Strategy1<'a>> {
    spec.validate()?;
    if bank.contacts.is_empty() {
        return Err(Error::MissingData("unit fields"));
    }
    if !bank.fields[0].eval.matches(&spec.target.eval) {
        return Err(Error::GridMismatch);
    }
    let hi = spec.grid_steps();
    Ok(Strategy1 {
        sup: Superposer::new(bank, spec.metric)?,
        spec,
        required: spec.required_points(),
        lo: if spec.signed { -hi } else { 0 },
        hi,
    })
}

fn strategy1_result(bank: &UnitSolutionBank, spec: &OptimizationSpec, best: Option<Candidate>) -> OptimizationResult {
    let n_t = spec.target.target_count() as f64;
    match best {
        Some(c) => OptimizationResult {
            feasible: true,
            configuration: None,
            amplitudes: bank
                .contacts
                .iter()
                .zip(&c.steps)
                .map(|(k, s)| (*k, *s as f64 * spec.amplitude_step))
                .collect(),
            objective: c.objective,
            coverage_pct: 100.0 * c.covered as f64 / n_t,
            ranking: Vec::new(),
            grid_resolution: true,
        },
        None => OptimizationResult {
            feasible: false,
            configuration: None,
            amplitudes: Vec::new(),
            objective: f64::INFINITY,
            coverage_pct: 0.0,
            ranking: Vec::new(),
            grid_resolution: true,
        },
    }
}

/// Strategy 1: per-contact amplitudes on the lattice `k * step`, minimizing
/// the spill objective under the coverage constraint. Coordinate descent with
/// pair and frontier moves, started from every feasible single-contact point
/// and from all contacts at the bound.
pub fn strategy1_optimize(bank: &UnitSolutionBank, spec: &OptimizationSpec) -> Result<OptimizationResult> {
    let s1 = strategy1_setup(bank, spec)?;
    let n = bank.contacts.len();
    let mut best: Option<Candidate> = None;
    for k in 0..n {
        let unit = unit_metric(&bank.fields[k], spec.metric)?;
        let lambda = match minimal_amplitude_of(&unit, spec) {
            MinimalAmplitude::Feasible(l) => l,
            _ => continue,
        };
        let mut step = libm::ceil(lambda / spec.amplitude_step - 1e-9) as i64;
        let mut start = None;
        while step <= s1.hi {
            let mut s = vec![0; n];
            s[k] = step;
            let c = s1.evaluate(&s);
            if s1.feasible(&c) {
                start = Some(c);
                break;
            }
            step += 1;
        }
        if let Some(start) = start {
            let c = s1.descend(start);
            if s1.better(&c, &best) {
                best = Some(c);
            }
        }
    }
    // Coverage may need several contacts at once; start from the bound too.
    let top = s1.evaluate(&vec![s1.hi; n]);
    if s1.feasible(&top) {
        let c = s1.descend(top);
        if s1.better(&c, &best) {
            best = Some(c);
        }
    }
    Ok(strategy1_result(bank, spec, best))
}

pub enum OracleMode<'a> {
    Strategy1(&'a UnitSolutionBank),
    Strategy2 { bank: &'a ConfigurationBank, feasible: &'a [ContactConfiguration] },
}

pub const ORACLE_MAX_CONTACTS: usize = 4;
pub const ORACLE_MAX_COMBINATIONS: u64 = 10_000;

/// Exhaustive reference for both strategies on small instances.
///
/// Strategy 2 recomputes each configuration's minimal amplitude by scanning
/// every candidate `threshold / psi_i` and counting coverage directly.
pub fn brute_force_oracle(mode: OracleMode<'_>, spec: &OptimizationSpec) -> Result<OptimizationResult> {
    spec.validate()?;
    match mode {
        OracleMode::Strategy2 { bank, feasible } => {
            let fields = lookup(bank, feasible)?;
            let contacts: alloc::collections::BTreeSet<_> =
                feasible.iter().flat_map(|c| c.cathodes().iter().chain(c.anodes())).collect();
            if contacts.len() > ORACLE_MAX_CONTACTS || feasible.len() as u64 > ORACLE_MAX_COMBINATIONS {
                return Err(Error::InstanceTooLarge(feasible.len() as u64));
            }
            let k = spec.required_points();
            let n_t = spec.target.target_count() as f64;
            let mut ranked = Vec::new();
            for (c, f) in feasible.iter().zip(fields) {
                let unit = unit_metric(f, spec.metric)?;
                let mut best: Option<f64> = None;
                for (i, &psi) in unit.iter().enumerate() {
                    if !spec.target.target[i] || !(psi > 0.0) {
                        continue;
                    }
                    let covered = unit.iter().zip(&spec.target.target).filter(|(v, t)| **t && **v >= psi).count();
                    if covered >= k {
                        let lambda = scale_to_reach(spec.threshold, psi);
                        if best.map_or(true, |b| lambda < b) {
                            best = Some(lambda);
                        }
                    }
                }
                let amplitude = match best {
                    None => MinimalAmplitude::Unreachable,
                    Some(l) if l > spec.max_amplitude => MinimalAmplitude::AboveBound(l),
                    Some(l) => MinimalAmplitude::Feasible(l),
                };
                let (objective, coverage_pct) = match amplitude {
                    MinimalAmplitude::Feasible(l) => {
                        let mut obj = 0.0;
                        let mut cov = 0;
                        for (v, t) in unit.iter().zip(&spec.target.target) {
                            let x = l * v;
                            if *t {
                                cov += usize::from(x >= spec.threshold);
                            } else {
                                obj += x;
                            }
                        }
                        (Some(obj), Some(100.0 * cov as f64 / n_t))
                    }
                    _ => (None, None),
                };
                ranked.push(RankedConfiguration { configuration: c.clone(), amplitude, objective, coverage_pct });
            }
            Ok(finish_strategy2(ranked, spec))
        }
        OracleMode::Strategy1(bank) => {
            let s1 = strategy1_setup(bank, spec)?;
            let n = bank.contacts.len();
            let levels = (s1.hi - s1.lo + 1) as u64;
            let total = levels.checked_pow(n as u32).unwrap_or(u64::MAX);
            if n > ORACLE_MAX_CONTACTS || total > ORACLE_MAX_COMBINATIONS {
                return Err(Error::InstanceTooLarge(total));
            }
            let mut best = None;
            let mut steps = vec![s1.lo; n];
            for _ in 0..total {
                let c = s1.evaluate(&steps);
                if s1.better(&c, &best) {
                    best = Some(c);
                }
                for s in steps.iter_mut() {
                    *s += 1;
                    if *s > s1.hi {
                        *s = s1.lo;
                    } else {
                        break;
                    }
                }
            }
            Ok(strategy1_result(bank, spec, best))
        }
    }
}
