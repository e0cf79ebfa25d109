//! Straight, ring-contact leads and their voxelization into a conductor label map.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::math::{self, Vec3};
use crate::volume::{MaskVolume, VoxelGrid};
use crate::{Error, Result};

/// Identifies one contact: lead index plus the contact id within that lead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContactRef {
    pub lead: usize,
    pub contact: u32,
}

impl ContactRef {
    pub const fn new(lead: usize, contact: u32) -> Self {
        ContactRef { lead, contact }
    }
}

impl fmt::Display for ContactRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}C{}", self.lead, self.contact)
    }
}

/// A ring contact, located along the lead axis from the tip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSpec {
    pub id: u32,
    /// Distance from the tip to the contact's lower edge, mm.
    pub axial_offset: f64,
    /// Contact height along the axis, mm.
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeadSpec {
    tip: Vec3,
    axis: Vec3,
    shaft_radius: f64,
    insulated_length: f64,
    contacts: Vec<ContactSpec>,
}

/// Dimensions of the default 3387-like template, mm.
pub mod template_3387 {
    pub const SHAFT_RADIUS: f64 = 0.635;
    pub const CONTACT_HEIGHT: f64 = 1.5;
    pub const CONTACT_GAP: f64 = 1.5;
    pub const FIRST_CONTACT_OFFSET: f64 = 1.5;
    pub const CONTACTS: u32 = 4;
    pub const MODELED_LENGTH: f64 = 100.0;
}

impl LeadSpec {
    /// Validates and builds a lead. `axis` points from the tip toward the proximal end.
    pub fn new(
        tip: Vec3,
        axis: Vec3,
        shaft_radius: f64,
        insulated_length: f64,
        contacts: Vec<ContactSpec>,
    ) -> Result<Self> {
        if tip.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidLead("tip must be finite".into()));
        }
        let n = math::norm(axis);
        if !((n - 1.0).abs() <= 1e-9) {
            return Err(Error::InvalidLead(format!("axis must have unit norm, got {n}")));
        }
        if !(shaft_radius.is_finite() && shaft_radius > 0.0) {
            return Err(Error::InvalidLead(format!("shaft radius must be > 0, got {shaft_radius}")));
        }
        if contacts.is_empty() {
            return Err(Error::InvalidLead("lead needs at least one contact".into()));
        }
        let mut prev_top = f64::NEG_INFINITY;
        for (k, c) in contacts.iter().enumerate() {
            if !(c.height.is_finite() && c.height > 0.0) {
                return Err(Error::InvalidLead(format!("contact {} height must be > 0", c.id)));
            }
            if !(c.axial_offset.is_finite() && c.axial_offset >= 0.0) {
                return Err(Error::InvalidLead(format!("contact {} offset must be >= 0", c.id)));
            }
            if c.axial_offset < prev_top {
                return Err(Error::InvalidLead(format!(
                    "contact {} overlaps or precedes the previous contact",
                    c.id
                )));
            }
            if contacts[..k].iter().any(|o| o.id == c.id) {
                return Err(Error::InvalidLead(format!("duplicate contact id {}", c.id)));
            }
            prev_top = c.axial_offset + c.height;
        }
        if !(insulated_length.is_finite() && insulated_length >= prev_top) {
            return Err(Error::InvalidLead(format!(
                "modeled length {insulated_length} must cover the contacts (>= {prev_top})"
            )));
        }
        Ok(LeadSpec { tip, axis, shaft_radius, insulated_length, contacts })
    }

    /// Four 1.5 mm ring contacts separated by 1.5 mm gaps, the lowest 1.5 mm above the tip.
    pub fn template_3387(tip: Vec3, axis: Vec3) -> Result<Self> {
        use template_3387::*;
        let contacts = (0..CONTACTS)
            .map(|id| ContactSpec {
                id,
                axial_offset: FIRST_CONTACT_OFFSET + id as f64 * (CONTACT_HEIGHT + CONTACT_GAP),
                height: CONTACT_HEIGHT,
            })
            .collect();
        LeadSpec::new(tip, axis, SHAFT_RADIUS, MODELED_LENGTH, contacts)
    }

    pub fn tip(&self) -> Vec3 {
        self.tip
    }

    pub fn axis(&self) -> Vec3 {
        self.axis
    }

    pub fn shaft_radius(&self) -> f64 {
        self.shaft_radius
    }

    pub fn insulated_length(&self) -> f64 {
        self.insulated_length
    }

    pub fn contacts(&self) -> &[ContactSpec] {
        &self.contacts
    }

    pub fn contact(&self, id: u32) -> Option<&ContactSpec> {
        self.contacts.iter().find(|c| c.id == id)
    }

    /// Point on the axis at the middle of a contact.
    pub fn contact_center(&self, c: &ContactSpec) -> Vec3 {
        math::add(self.tip, math::scale(self.axis, c.axial_offset + 0.5 * c.height))
    }

    /// The contact nearest the tip.
    pub fn lowermost_contact(&self) -> &ContactSpec {
        self.contacts
            .iter()
            .min_by(|a, b| a.axial_offset.total_cmp(&b.axial_offset))
            .expect("validated non-empty")
    }

    /// Mirror image across the plane `x[axis] = plane`.
    pub fn mirrored(&self, axis: usize, plane: f64) -> LeadSpec {
        let mut tip = self.tip;
        tip[axis] = 2.0 * plane - tip[axis];
        let mut dir = self.axis;
        dir[axis] = -dir[axis];
        LeadSpec { tip, axis: dir, ..self.clone() }
    }

    /// Body membership of a point: `None` outside the shaft, otherwise
    /// `Some(Some(contact_id))` on a contact or `Some(None)` on insulation.
    fn classify(&self, p: Vec3) -> Option<Option<u32>> {
        let d = math::sub(p, self.tip);
        let s = math::dot(d, self.axis);
        if s < 0.0 || s > self.insulated_length {
            return None;
        }
        let radial = math::sub(d, math::scale(self.axis, s));
        if math::dot(radial, radial) > self.shaft_radius * self.shaft_radius {
            return None;
        }
        let on = self
            .contacts
            .iter()
            .find(|c| s >= c.axial_offset && s < c.axial_offset + c.height)
            .map(|c| c.id);
        Some(on)
    }
}

/// Role of a contact in one stimulation snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContactRole {
    /// Driven at a fixed potential (negative by the cathodic convention), V.
    Cathode { voltage: f64 },
    /// Return path held at 0 V.
    AnodeGround,
    /// Undriven conductor carrying zero net current.
    Floating,
}

/// Constant-voltage stimulation setting. Contacts not listed are floating.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulationSetting {
    roles: BTreeMap<ContactRef, ContactRole>,
    pulse_width_us: f64,
}

impl StimulationSetting {
    pub fn new(pulse_width_us: f64) -> Result<Self> {
        if !(pulse_width_us.is_finite() && pulse_width_us > 0.0) {
            return Err(Error::InvalidSetting(format!("pulse width must be > 0, got {pulse_width_us}")));
        }
        Ok(StimulationSetting { roles: BTreeMap::new(), pulse_width_us })
    }

    pub fn with(mut self, contact: ContactRef, role: ContactRole) -> Result<Self> {
        if let ContactRole::Cathode { voltage } = role {
            if !voltage.is_finite() {
                return Err(Error::InvalidSetting(format!("voltage on {contact} must be finite")));
            }
        }
        self.roles.insert(contact, role);
        Ok(self)
    }

    pub fn set(&mut self, contact: ContactRef, role: ContactRole) {
        self.roles.insert(contact, role);
    }

    pub fn role(&self, contact: ContactRef) -> ContactRole {
        self.roles.get(&contact).copied().unwrap_or(ContactRole::Floating)
    }

    pub fn pulse_width_us(&self) -> f64 {
        self.pulse_width_us
    }

    /// Explicitly assigned roles, in contact order.
    pub fn roles(&self) -> impl Iterator<Item = (ContactRef, ContactRole)> + '_ {
        self.roles.iter().map(|(c, r)| (*c, *r))
    }

    pub fn cathodes(&self) -> impl Iterator<Item = (ContactRef, f64)> + '_ {
        self.roles.iter().filter_map(|(c, r)| match r {
            ContactRole::Cathode { voltage } => Some((*c, *voltage)),
            _ => None,
        })
    }

    /// The same setting with every voltage multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> StimulationSetting {
        let mut out = self.clone();
        for role in out.roles.values_mut() {
            if let ContactRole::Cathode { voltage } = role {
                *voltage *= factor;
            }
        }
        out
    }

    /// Only the roles on `lead`.
    pub fn restricted_to_lead(&self, lead: usize) -> StimulationSetting {
        StimulationSetting {
            roles: self.roles.iter().filter(|(c, _)| c.lead == lead).map(|(c, r)| (*c, *r)).collect(),
            pulse_width_us: self.pulse_width_us,
        }
    }
}

/// Per-voxel classification of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoxelLabel {
    Tissue,
    Insulator { lead: usize },
    Conductor(ContactRef),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConductorMap {
    grid: VoxelGrid,
    labels: Vec<VoxelLabel>,
}

impl ConductorMap {
    /// All-tissue map.
    pub fn empty(grid: VoxelGrid) -> Self {
        ConductorMap { grid, labels: alloc::vec![VoxelLabel::Tissue; grid.len()] }
    }

    /// Map from an arbitrary per-voxel-center labeling, for analytic shapes.
    pub fn from_fn(grid: VoxelGrid, mut f: impl FnMut(Vec3) -> VoxelLabel) -> Self {
        ConductorMap { grid, labels: (0..grid.len()).map(|i| f(grid.center_of(i))).collect() }
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn labels(&self) -> &[VoxelLabel] {
        &self.labels
    }

    pub fn label(&self, idx: usize) -> VoxelLabel {
        self.labels[idx]
    }

    /// Member voxels of every conductor, in contact order.
    pub fn conductors(&self) -> BTreeMap<ContactRef, Vec<usize>> {
        let mut out: BTreeMap<ContactRef, Vec<usize>> = BTreeMap::new();
        for (idx, l) in self.labels.iter().enumerate() {
            if let VoxelLabel::Conductor(c) = l {
                out.entry(*c).or_default().push(idx);
            }
        }
        out
    }

    pub fn count(&self, label: VoxelLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Voxels that are not tissue (lead bodies).
    pub fn blocked_mask(&self) -> MaskVolume {
        MaskVolume::new(self.grid, self.labels.iter().map(|l| *l != VoxelLabel::Tissue).collect())
            .expect("same grid")
    }

    /// The same map with one lead's voxels turned back into tissue.
    pub fn without_lead(&self, lead: usize) -> ConductorMap {
        let labels = self
            .labels
            .iter()
            .map(|&l| match l {
                VoxelLabel::Insulator { lead: k } if k == lead => VoxelLabel::Tissue,
                VoxelLabel::Conductor(c) if c.lead == lead => VoxelLabel::Tissue,
                other => other,
            })
            .collect();
        ConductorMap { grid: self.grid, labels }
    }

    /// Number of 6-connected components formed by each conductor's voxels.
    pub fn component_counts(&self) -> BTreeMap<ContactRef, usize> {
        let g = &self.grid;
        let [nx, ny, nz] = g.dims();
        let mut seen = alloc::vec![false; g.len()];
        let mut out = BTreeMap::new();
        let mut stack = Vec::new();
        for start in 0..g.len() {
            let VoxelLabel::Conductor(c) = self.labels[start] else { continue };
            if seen[start] {
                continue;
            }
            *out.entry(c).or_insert(0) += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(v) = stack.pop() {
                let [i, j, k] = g.ijk(v);
                let mut visit = |n: usize| {
                    if !seen[n] && self.labels[n] == VoxelLabel::Conductor(c) {
                        seen[n] = true;
                        stack.push(n);
                    }
                };
                if i > 0 {
                    visit(v - 1);
                }
                if i + 1 < nx {
                    visit(v + 1);
                }
                if j > 0 {
                    visit(v - nx);
                }
                if j + 1 < ny {
                    visit(v + nx);
                }
                if k > 0 {
                    visit(v - nx * ny);
                }
                if k + 1 < nz {
                    visit(v + nx * ny);
                }
            }
        }
        out
    }

    /// A 64-bit fingerprint of the labeling (FNV-1a), used to check that
    /// solutions share one conductor structure.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for d in self.grid.dims() {
            feed(d as u64);
        }
        for l in &self.labels {
            match l {
                VoxelLabel::Tissue => feed(0),
                VoxelLabel::Insulator { lead } => feed(1 + ((*lead as u64) << 8)),
                VoxelLabel::Conductor(c) => feed(2 + ((c.lead as u64) << 8) + (u64::from(c.contact) << 32)),
            }
        }
        h
    }
}

/// Labels every voxel whose center lies inside a lead body: conductor when its
/// axial coordinate falls within a contact span `[offset, offset + height)`,
/// insulator otherwise. Lead `k` in the slice becomes `ContactRef { lead: k, .. }`.
pub fn voxelize_leads(grid: &VoxelGrid, leads: &[LeadSpec]) -> Result<ConductorMap> {
    for (k, lead) in leads.iter().enumerate() {
        for c in lead.contacts() {
            let lo = math::add(lead.tip, math::scale(lead.axis, c.axial_offset));
            let hi = math::add(lead.tip, math::scale(lead.axis, c.axial_offset + c.height));
            if !grid.in_hull(lo) || !grid.in_hull(hi) || !grid.in_hull(lead.tip) {
                return Err(Error::LeadOutsideGrid { lead: k });
            }
        }
    }
    let mut labels = alloc::vec![VoxelLabel::Tissue; grid.len()];
    for (idx, label) in labels.iter_mut().enumerate() {
        let p = grid.center_of(idx);
        let mut owner: Option<usize> = None;
        for (k, lead) in leads.iter().enumerate() {
            if let Some(on) = lead.classify(p) {
                if let Some(first) = owner {
                    return Err(Error::LeadOverlap { first, second: k, voxel: idx });
                }
                owner = Some(k);
                *label = match on {
                    Some(contact) => VoxelLabel::Conductor(ContactRef::new(k, contact)),
                    None => VoxelLabel::Insulator { lead: k },
                };
            }
        }
    }
    let map = ConductorMap { grid: *grid, labels };
    let present = map.conductors();
    for (k, lead) in leads.iter().enumerate() {
        for c in lead.contacts() {
            let r = ContactRef::new(k, c.id);
            if !present.contains_key(&r) {
                return Err(Error::UnresolvedContact(r));
            }
        }
    }
    Ok(map)
}

/// Normalized mean of the lead axes, each sign-aligned to the first lead.
pub fn average_lead_axis(leads: &[LeadSpec]) -> Result<Vec3> {
    let first = leads.first().ok_or_else(|| Error::DegenerateAxis("no leads".into()))?.axis;
    let mut sum = [0.0; 3];
    for lead in leads {
        let a = if math::dot(lead.axis, first) < 0.0 { math::scale(lead.axis, -1.0) } else { lead.axis };
        sum = math::add(sum, a);
    }
    math::normalize(sum).ok_or_else(|| Error::DegenerateAxis("lead axes cancel".into()))
}

/// Center of the lowermost contact of a single lead, or the mean of the
/// lowermost-contact centers of several leads (the midpoint for two).
pub fn lowermost_contacts_center(leads: &[LeadSpec]) -> Result<Vec3> {
    if leads.is_empty() {
        return Err(Error::InvalidLead("no leads".into()));
    }
    let mut sum = [0.0; 3];
    for lead in leads {
        sum = math::add(sum, lead.contact_center(lead.lowermost_contact()));
    }
    Ok(math::scale(sum, 1.0 / leads.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z_lead(x: f64, y: f64) -> LeadSpec {
        LeadSpec::template_3387([x, y, 0.0], [0.0, 0.0, 1.0]).unwrap()
    }

    /// Brute-force count of voxel-center z-layers inside `[lo, hi)`.
    fn layers_in_span(grid: &VoxelGrid, lo: f64, hi: f64) -> usize {
        (0..grid.dims()[2]).filter(|&k| {
            let z = grid.center(0, 0, k)[2];
            z >= lo && z < hi
        }).count()
    }

    #[test]
    fn contact_slab_layer_count() {
        let grid = VoxelGrid::new([17, 17, 61], [0.25; 3], [-2.0, -2.0, -0.875]).unwrap();
        let lead = z_lead(0.0, 0.0);
        let map = voxelize_leads(&grid, core::slice::from_ref(&lead)).unwrap();
        let members = &map.conductors()[&ContactRef::new(0, 0)];
        let mut ks: Vec<usize> = members.iter().map(|&v| grid.ijk(v)[2]).collect();
        ks.sort_unstable();
        ks.dedup();
        assert_eq!(ks.len(), layers_in_span(&grid, 1.5, 3.0));
        assert_eq!(ks.len(), 6);
        assert!(map.component_counts().values().all(|&n| n == 1));
    }

    #[test]
    fn separated_leads_do_not_overlap() {
        let grid = VoxelGrid::new([81, 21, 61], [0.25; 3], [-10.0, -2.5, -1.0]).unwrap();
        let map = voxelize_leads(&grid, &[z_lead(-5.0, 0.0), z_lead(5.0, 0.0)]).unwrap();
        assert!(map.count(VoxelLabel::Insulator { lead: 0 }) > 0);
        assert!(map.count(VoxelLabel::Insulator { lead: 1 }) > 0);
        assert_eq!(map.conductors().len(), 8);
    }

    #[test]
    fn overlapping_leads_rejected() {
        let grid = VoxelGrid::new([41, 21, 61], [0.25; 3], [-5.0, -2.5, -1.0]).unwrap();
        let err = voxelize_leads(&grid, &[z_lead(0.0, 0.0), z_lead(0.5, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::LeadOverlap { first: 0, second: 1, .. }));
    }

    #[test]
    fn tip_outside_hull_rejected() {
        let grid = VoxelGrid::new([11, 11, 11], [0.5; 3], [0.0; 3]).unwrap();
        let lead = LeadSpec::template_3387([2.5, 2.5, -1.0], [0.0, 0.0, 1.0]).unwrap();
        assert_eq!(voxelize_leads(&grid, &[lead]), Err(Error::LeadOutsideGrid { lead: 0 }));
    }

    #[test]
    fn average_axis_examples() {
        let a = |v: Vec3| LeadSpec::template_3387([0.0; 3], v).unwrap();
        assert_eq!(average_lead_axis(&[a([0.0, 0.0, 1.0])]).unwrap(), [0.0, 0.0, 1.0]);
        assert_eq!(average_lead_axis(&[a([0.0, 0.0, 1.0]), a([0.0, 0.0, 1.0])]).unwrap(), [0.0, 0.0, 1.0]);
        let m = average_lead_axis(&[a([1.0, 0.0, 0.0]), a([0.0, 1.0, 0.0])]).unwrap();
        let r = core::f64::consts::FRAC_1_SQRT_2;
        assert!((m[0] - r).abs() < 1e-15 && (m[1] - r).abs() < 1e-15 && m[2] == 0.0);
        // opposite orientation of the same trajectory is aligned, not cancelled
        let m = average_lead_axis(&[a([0.0, 0.0, 1.0]), a([0.0, 0.0, -1.0])]).unwrap();
        assert_eq!(m, [0.0, 0.0, 1.0]);
        assert!(average_lead_axis(&[]).is_err());
    }

    #[test]
    fn lead_validation() {
        let c = |id, o, h| ContactSpec { id, axial_offset: o, height: h };
        assert!(LeadSpec::new([0.0; 3], [0.0, 0.0, 2.0], 0.6, 20.0, alloc::vec![c(0, 1.0, 1.0)]).is_err());
        assert!(LeadSpec::new([0.0; 3], [0.0, 0.0, 1.0], 0.0, 20.0, alloc::vec![c(0, 1.0, 1.0)]).is_err());
        assert!(LeadSpec::new([0.0; 3], [0.0, 0.0, 1.0], 0.6, 20.0, alloc::vec![c(0, 1.0, 1.0), c(1, 1.5, 1.0)])
            .is_err());
        assert!(LeadSpec::new([0.0; 3], [0.0, 0.0, 1.0], 0.6, 20.0, alloc::vec![c(0, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn mirrored_configuration_mirrors_map() {
        let n = [33, 17, 57];
        let h = 0.25;
        let origin = [-((n[0] - 1) as f64) * h / 2.0, -2.0, -1.0];
        let grid = VoxelGrid::new(n, [h; 3], origin).unwrap();
        let leads = [z_lead(-1.3, 0.1), z_lead(1.7, -0.2)];
        let mirrored: Vec<LeadSpec> = leads.iter().map(|l| l.mirrored(0, 0.0)).collect();
        let a = voxelize_leads(&grid, &leads).unwrap();
        let b = voxelize_leads(&grid, &mirrored).unwrap();
        for idx in 0..grid.len() {
            let [i, j, k] = grid.ijk(idx);
            let m = grid.linear(n[0] - 1 - i, j, k);
            assert_eq!(a.label(idx), b.label(m));
        }
    }

    #[test]
    fn lead_order_only_relabels() {
        let grid = VoxelGrid::new([41, 21, 61], [0.25; 3], [-5.0, -2.5, -1.0]).unwrap();
        let a = voxelize_leads(&grid, &[z_lead(-2.0, 0.0), z_lead(2.0, 0.0)]).unwrap();
        let b = voxelize_leads(&grid, &[z_lead(2.0, 0.0), z_lead(-2.0, 0.0)]).unwrap();
        let swap = |l: VoxelLabel| match l {
            VoxelLabel::Insulator { lead } => VoxelLabel::Insulator { lead: 1 - lead },
            VoxelLabel::Conductor(c) => VoxelLabel::Conductor(ContactRef::new(1 - c.lead, c.contact)),
            t => t,
        };
        assert!(a.labels().iter().zip(b.labels()).all(|(x, y)| swap(*x) == *y));
    }

    #[test]
    fn conductor_count_scales_quadratically_in_cross_section() {
        // Count the cross-section of one contact at three resolutions; the count
        // per unit height grows like 1/h^2.
        let mut per_layer = Vec::new();
        for h in [0.2, 0.1, 0.05] {
            let n = libm::round(3.0 / h) as usize + 1;
            let nz = libm::round(6.0 / h) as usize + 1;
            let grid = VoxelGrid::new([n, n, nz], [h; 3], [-1.5 - 0.013, -1.5 + 0.007, -0.5]).unwrap();
            let lead = LeadSpec::new(
                [0.0; 3],
                [0.0, 0.0, 1.0],
                0.635,
                20.0,
                alloc::vec![ContactSpec { id: 0, axial_offset: 1.5, height: 1.5 }],
            )
            .unwrap();
            let map = voxelize_leads(&grid, &[lead]).unwrap();
            let members = map.conductors()[&ContactRef::new(0, 0)].len();
            let layers = layers_in_span(&grid, 1.5, 3.0);
            per_layer.push(members as f64 / layers as f64 * h * h);
        }
        let area = core::f64::consts::PI * 0.635 * 0.635;
        for a in per_layer {
            assert!((a - area).abs() / area < 0.1, "area estimate {a} vs {area}");
        }
    }
}
