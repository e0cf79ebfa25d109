//! Cell-centered finite-volume operator.
//!
//! The discrete operator is the Hessian of the energy
//!
//! ```text
//! W(u) = 1/2 sum_faces T_f (u_a - u_b)^2
//!      + sum_vertices V (s_xy g_x g_y + s_xz g_x g_z + s_yz g_y g_z)
//! ```
//!
//! where `T_f` is the two-point transmissibility of a face (harmonic average of
//! the diagonal tensor component, or the half-cell value next to a metal
//! contact), and `g` is the gradient at a cell vertex from its eight
//! surrounding cells. The second sum carries the off-diagonal tensor terms and
//! is only present where all eight cells are tissue. The operator is therefore
//! symmetric by construction. Floating conductors own a single unknown; its row
//! is the sum of its member rows, i.e. the discrete net surface current.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{ConductorMap, ContactRef, ContactRole, StimulationSetting, VoxelLabel};
use crate::math::{Sym3, Vec3};
use crate::par;
use crate::volume::{TensorVolume, VoxelGrid};
use crate::{Error, Result};

/// Outer-boundary treatment of the tissue voxels on the outermost layer.
#[derive(Clone, Copy)]
pub enum OuterBoundary<'a> {
    /// Distant ground: boundary tissue voxels held at 0 V.
    Grounded,
    /// No-flux outer boundary.
    Insulated,
    /// Boundary tissue voxels held at `f(center)`.
    Prescribed(&'a (dyn Fn(Vec3) -> f64 + Sync)),
}

impl core::fmt::Debug for OuterBoundary<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            OuterBoundary::Grounded => "Grounded",
            OuterBoundary::Insulated => "Insulated",
            OuterBoundary::Prescribed(_) => "Prescribed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Node {
    Excluded,
    Fixed,
    Free(u32),
}

/// Identity of the Dirichlet/floating structure a solution was computed on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Structure {
    pub geometry: u64,
    pub boundary: &'static str,
    pub fixed_contacts: Vec<ContactRef>,
    pub floating_contacts: Vec<ContactRef>,
}

/// Assembled linear system `A x = b` over tissue unknowns plus one lumped
/// unknown per floating conductor.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub(crate) grid: VoxelGrid,
    pub(crate) nodes: Vec<Node>,
    pub(crate) fixed: Vec<f64>,
    pub(crate) trans: [Vec<f64>; 3],
    pub(crate) cross: Option<Vec<[f64; 3]>>,
    pub(crate) tissue_voxels: Vec<u32>,
    pub(crate) floating: Vec<(ContactRef, Vec<u32>)>,
    pub(crate) contacts: BTreeMap<ContactRef, (ContactRole, Vec<u32>)>,
    pub(crate) rhs: Vec<f64>,
    pub(crate) diag: Vec<f64>,
    pub(crate) structure: Structure,
    pub(crate) blocked: Vec<bool>,
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a + b > 0.0 { 2.0 * a * b / (a + b) } else { 0.0 }
}

fn diag_component(s: &Sym3, axis: usize) -> f64 {
    match axis {
        0 => s.xx,
        1 => s.yy,
        _ => s.zz,
    }
}

/// Builds the discrete system for one stimulation snapshot. Contacts absent
/// from `setting` float.
pub fn assemble(
    sigma: &TensorVolume,
    conductors: &ConductorMap,
    setting: &StimulationSetting,
    boundary: OuterBoundary<'_>,
) -> Result<DiscreteSystem> {
    let grid = *conductors.grid();
    if !sigma.grid().matches(&grid) {
        return Err(Error::GridMismatch);
    }
    let labels = conductors.labels();
    for (voxel, s) in sigma.values().iter().enumerate() {
        if labels[voxel] != VoxelLabel::Tissue {
            continue;
        }
        if !s.is_finite() {
            return Err(Error::NonFinite(voxel));
        }
        if !s.is_psd() {
            return Err(Error::NotPositiveSemiDefinite { voxel, min_eigenvalue: s.min_eigenvalue() });
        }
    }

    let members = conductors.conductors();
    for (c, _) in setting.roles() {
        if !matches!(setting.role(c), ContactRole::Floating) && !members.contains_key(&c) {
            return Err(Error::UnknownContact(c));
        }
    }

    let n = grid.len();
    let mut nodes = vec![Node::Excluded; n];
    let mut fixed = vec![0.0; n];
    let mut contacts = BTreeMap::new();
    let mut floating_refs = Vec::new();
    for (c, voxels) in &members {
        let role = setting.role(*c);
        let voxels: Vec<u32> = voxels.iter().map(|&v| v as u32).collect();
        match role {
            ContactRole::Cathode { voltage } => {
                for &v in &voxels {
                    nodes[v as usize] = Node::Fixed;
                    fixed[v as usize] = voltage;
                }
            }
            ContactRole::AnodeGround => {
                for &v in &voxels {
                    nodes[v as usize] = Node::Fixed;
                }
            }
            ContactRole::Floating => floating_refs.push(*c),
        }
        contacts.insert(*c, (role, voxels));
    }

    for (v, label) in labels.iter().enumerate() {
        if *label != VoxelLabel::Tissue {
            continue;
        }
        if grid.on_boundary(v) {
            match boundary {
                OuterBoundary::Grounded => nodes[v] = Node::Fixed,
                OuterBoundary::Prescribed(f) => {
                    nodes[v] = Node::Fixed;
                    fixed[v] = f(grid.center_of(v));
                }
                OuterBoundary::Insulated => nodes[v] = Node::Free(0),
            }
        } else {
            nodes[v] = Node::Free(0);
        }
    }
    if !nodes.contains(&Node::Fixed) {
        return Err(Error::SingularSystem);
    }

    let trans = transmissibilities(&grid, sigma, labels);
    let cross = cross_coefficients(&grid, sigma, labels);

    // Tissue voxels with no coupling at all carry no equation.
    for v in 0..n {
        if labels[v] == VoxelLabel::Tissue && nodes[v] == Node::Free(0) {
            let coupled = neighbor_faces(&grid, v).any(|(t, _)| trans_at(&trans, t) > 0.0)
                || cross.as_ref().is_some_and(|c| touches_cross(&grid, c, v));
            if !coupled {
                nodes[v] = Node::Excluded;
            }
        }
    }

    let mut tissue_voxels = Vec::new();
    for v in 0..n {
        if labels[v] == VoxelLabel::Tissue && nodes[v] == Node::Free(0) {
            nodes[v] = Node::Free(tissue_voxels.len() as u32);
            tissue_voxels.push(v as u32);
        }
    }
    let mut floating = Vec::new();
    for c in floating_refs {
        let id = (tissue_voxels.len() + floating.len()) as u32;
        let voxels = contacts[&c].1.clone();
        for &v in &voxels {
            nodes[v as usize] = Node::Free(id);
        }
        floating.push((c, voxels));
    }

    let fixed_contacts =
        contacts.iter().filter(|(_, (r, _))| !matches!(r, ContactRole::Floating)).map(|(c, _)| *c).collect();
    let structure = Structure {
        geometry: conductors.fingerprint(),
        boundary: match boundary {
            OuterBoundary::Grounded => "grounded",
            OuterBoundary::Insulated => "insulated",
            OuterBoundary::Prescribed(_) => "prescribed",
        },
        fixed_contacts,
        floating_contacts: floating.iter().map(|(c, _)| *c).collect(),
    };

    let blocked = labels.iter().map(|l| *l != VoxelLabel::Tissue).collect();
    let mut system = DiscreteSystem {
        grid,
        nodes,
        fixed,
        trans,
        cross,
        tissue_voxels,
        floating,
        contacts,
        rhs: Vec::new(),
        diag: Vec::new(),
        structure,
        blocked,
    };
    system.rhs = system.compute_rhs();
    system.diag = system.compute_diagonal();
    if system.diag.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::SingularSystem);
    }
    Ok(system)
}

fn trans_at(trans: &[Vec<f64>; 3], (axis, v): (usize, usize)) -> f64 {
    trans[axis][v]
}

/// `((axis, face_owner), neighbor)` for each existing face of voxel `v`; the
/// face owner is the lower voxel of the pair.
fn neighbor_faces(grid: &VoxelGrid, v: usize) -> impl Iterator<Item = ((usize, usize), usize)> {
    let c = grid.ijk(v);
    let dims = grid.dims();
    let strides = [grid.stride(0), grid.stride(1), grid.stride(2)];
    (0..3).flat_map(move |a| {
        let lo = (c[a] > 0).then(|| ((a, v - strides[a]), v - strides[a]));
        let hi = (c[a] + 1 < dims[a]).then(|| ((a, v), v + strides[a]));
        lo.into_iter().chain(hi)
    })
}

fn transmissibilities(grid: &VoxelGrid, sigma: &TensorVolume, labels: &[VoxelLabel]) -> [Vec<f64>; 3] {
    let h = grid.spacing();
    let dims = grid.dims();
    let s = sigma.values();
    let mut out = [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]];
    for (a, t) in out.iter_mut().enumerate() {
        let area = h[(a + 1) % 3] * h[(a + 2) % 3];
        let stride = grid.stride(a);
        let geo = area / h[a];
        for (v, tv) in t.iter_mut().enumerate() {
            if grid.ijk(v)[a] + 1 >= dims[a] {
                continue;
            }
            let w = v + stride;
            *tv = match (labels[v], labels[w]) {
                (VoxelLabel::Tissue, VoxelLabel::Tissue) => {
                    harmonic(diag_component(&s[v], a), diag_component(&s[w], a)) * geo
                }
                (VoxelLabel::Tissue, VoxelLabel::Conductor(_)) => 2.0 * diag_component(&s[v], a) * geo,
                (VoxelLabel::Conductor(_), VoxelLabel::Tissue) => 2.0 * diag_component(&s[w], a) * geo,
                _ => 0.0,
            };
        }
    }
    out
}

/// Off-diagonal vertex coefficients `V * mean(sigma_ij)` indexed by the lower
/// corner cell, or `None` when every tissue tensor is diagonal.
fn cross_coefficients(grid: &VoxelGrid, sigma: &TensorVolume, labels: &[VoxelLabel]) -> Option<Vec<[f64; 3]>> {
    let s = sigma.values();
    let any = s.iter().zip(labels).any(|(t, l)| *l == VoxelLabel::Tissue && !t.is_diagonal());
    if !any {
        return None;
    }
    let [nx, ny, nz] = grid.dims();
    let vol = grid.voxel_volume();
    let mut out = vec![[0.0; 3]; grid.len()];
    for k in 0..nz.saturating_sub(1) {
        for j in 0..ny.saturating_sub(1) {
            for i in 0..nx.saturating_sub(1) {
                let v = grid.linear(i, j, k);
                let mut sum = [0.0; 3];
                let mut all_tissue = true;
                for c in corner_cells(grid, v) {
                    if labels[c] != VoxelLabel::Tissue {
                        all_tissue = false;
                        break;
                    }
                    sum[0] += s[c].xy;
                    sum[1] += s[c].xz;
                    sum[2] += s[c].yz;
                }
                if all_tissue {
                    out[v] = [sum[0] * vol / 8.0, sum[1] * vol / 8.0, sum[2] * vol / 8.0];
                }
            }
        }
    }
    Some(out)
}

/// The eight cells around the vertex whose lower corner cell is `v`, ordered
/// by `(dk, dj, di)` bits.
#[inline]
fn corner_cells(grid: &VoxelGrid, v: usize) -> [usize; 8] {
    let sy = grid.stride(1);
    let sz = grid.stride(2);
    [v, v + 1, v + sy, v + sy + 1, v + sz, v + sz + 1, v + sz + sy, v + sz + sy + 1]
}

fn touches_cross(grid: &VoxelGrid, cross: &[[f64; 3]], v: usize) -> bool {
    vertices_of(grid, v).any(|(w, _)| cross[w] != [0.0; 3])
}

/// Lower-corner indices of the (up to eight) vertices of cell `v`, with the
/// sign of the cell's offset from each vertex per axis.
fn vertices_of(grid: &VoxelGrid, v: usize) -> impl Iterator<Item = (usize, [f64; 3])> {
    let c = grid.ijk(v);
    let dims = grid.dims();
    let g = *grid;
    (0..8).filter_map(move |bits| {
        let off = [bits & 1, (bits >> 1) & 1, (bits >> 2) & 1];
        let mut lower = [0usize; 3];
        let mut sign = [0.0; 3];
        for a in 0..3 {
            // off = 0: vertex below the cell (cell on its + side)
            if off[a] == 0 {
                if c[a] == 0 {
                    return None;
                }
                lower[a] = c[a] - 1;
                sign[a] = 1.0;
            } else {
                if c[a] + 1 >= dims[a] {
                    return None;
                }
                lower[a] = c[a];
                sign[a] = -1.0;
            }
        }
        Some((g.linear(lower[0], lower[1], lower[2]), sign))
    })
}

impl DiscreteSystem {
    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    /// Total unknown count: free tissue voxels plus floating conductors.
    pub fn unknowns(&self) -> usize {
        self.tissue_voxels.len() + self.floating.len()
    }

    pub fn tissue_unknowns(&self) -> usize {
        self.tissue_voxels.len()
    }

    pub fn floating_contacts(&self) -> impl Iterator<Item = ContactRef> + '_ {
        self.floating.iter().map(|(c, _)| *c)
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn has_cross_terms(&self) -> bool {
        self.cross.is_some()
    }

    pub fn role(&self, contact: ContactRef) -> Option<ContactRole> {
        self.contacts.get(&contact).map(|(r, _)| *r)
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut ws = Workspace::new(self);
        self.apply_with(x, y, &mut ws);
    }

    pub(crate) fn apply_with(&self, x: &[f64], y: &mut [f64], ws: &mut Workspace) {
        let nodes = &self.nodes;
        par::fill(&mut ws.full, |v| match nodes[v] {
            Node::Free(u) => x[u as usize],
            _ => 0.0,
        });
        self.full_operator(ws);
        self.restrict(&ws.out, y);
    }

    fn compute_rhs(&self) -> Vec<f64> {
        let mut ws = Workspace::new(self);
        ws.full.copy_from_slice(&self.fixed);
        for (v, n) in self.nodes.iter().enumerate() {
            if *n == Node::Excluded {
                ws.full[v] = 0.0;
            }
        }
        self.full_operator(&mut ws);
        let mut b = vec![0.0; self.unknowns()];
        self.restrict(&ws.out, &mut b);
        for bi in &mut b {
            *bi = -*bi;
        }
        b
    }

    fn compute_diagonal(&self) -> Vec<f64> {
        let h = self.grid.spacing();
        let w = [0.25 / h[0], 0.25 / h[1], 0.25 / h[2]];
        let mut d: Vec<f64> = self
            .tissue_voxels
            .iter()
            .map(|&v| {
                let v = v as usize;
                let mut sum: f64 = neighbor_faces(&self.grid, v).map(|(f, _)| trans_at(&self.trans, f)).sum();
                if let Some(cross) = &self.cross {
                    for (vx, s) in vertices_of(&self.grid, v) {
                        let c = cross[vx];
                        sum += 2.0
                            * (c[0] * s[0] * s[1] * w[0] * w[1]
                                + c[1] * s[0] * s[2] * w[0] * w[2]
                                + c[2] * s[1] * s[2] * w[1] * w[2]);
                    }
                }
                sum
            })
            .collect();
        let mut ws = Workspace::new(self);
        let mut e = vec![0.0; self.unknowns()];
        let mut y = vec![0.0; self.unknowns()];
        for l in self.tissue_voxels.len()..self.unknowns() {
            e[l] = 1.0;
            self.apply_with(&e, &mut y, &mut ws);
            d.push(y[l]);
            e[l] = 0.0;
        }
        d
    }

    /// `ws.out = K ws.full` on the free voxels (zero elsewhere).
    fn full_operator(&self, ws: &mut Workspace) {
        let [nx, ny, _] = self.grid.dims();
        let plane = nx * ny;
        let u = &ws.full;
        let nodes = &self.nodes;
        let [tx, ty, tz] = &self.trans;
        let dims = self.grid.dims();
        par::for_each_chunk(&mut ws.out, plane, |k, out| {
            for j in 0..ny {
                for i in 0..nx {
                    let local = i + nx * j;
                    let v = local + plane * k;
                    if !matches!(nodes[v], Node::Free(_)) {
                        out[local] = 0.0;
                        continue;
                    }
                    let uv = u[v];
                    let mut acc = 0.0;
                    if i + 1 < nx {
                        acc += tx[v] * (uv - u[v + 1]);
                    }
                    if i > 0 {
                        acc += tx[v - 1] * (uv - u[v - 1]);
                    }
                    if j + 1 < ny {
                        acc += ty[v] * (uv - u[v + nx]);
                    }
                    if j > 0 {
                        acc += ty[v - nx] * (uv - u[v - nx]);
                    }
                    if k + 1 < dims[2] {
                        acc += tz[v] * (uv - u[v + plane]);
                    }
                    if k > 0 {
                        acc += tz[v - plane] * (uv - u[v - plane]);
                    }
                    out[local] = acc;
                }
            }
        });
        if let Some(cross) = &self.cross {
            self.cross_operator(cross, ws);
        }
    }

    fn cross_operator(&self, cross: &[[f64; 3]], ws: &mut Workspace) {
        let grid = self.grid;
        let h = grid.spacing();
        let w = [0.25 / h[0], 0.25 / h[1], 0.25 / h[2]];
        let [nx, ny, nz] = grid.dims();
        let u = &ws.full;
        // Per-vertex dW/dg.
        par::fill(&mut ws.flux, |v| {
            let c = cross[v];
            if c == [0.0; 3] {
                return [0.0; 3];
            }
            let [i, j, k] = grid.ijk(v);
            if i + 1 >= nx || j + 1 >= ny || k + 1 >= nz {
                return [0.0; 3];
            }
            let cells = corner_cells(&grid, v);
            let mut g = [0.0; 3];
            for (bits, &cell) in cells.iter().enumerate() {
                let val = u[cell];
                g[0] += if bits & 1 == 1 { val } else { -val };
                g[1] += if bits & 2 == 2 { val } else { -val };
                g[2] += if bits & 4 == 4 { val } else { -val };
            }
            g = [g[0] * w[0], g[1] * w[1], g[2] * w[2]];
            [c[0] * g[1] + c[1] * g[2], c[0] * g[0] + c[2] * g[2], c[1] * g[0] + c[2] * g[1]]
        });
        let flux = &ws.flux;
        let nodes = &self.nodes;
        let plane = nx * ny;
        par::for_each_chunk(&mut ws.out, plane, |k, out| {
            for (local, o) in out.iter_mut().enumerate() {
                let v = local + plane * k;
                if !matches!(nodes[v], Node::Free(_)) {
                    continue;
                }
                let mut acc = 0.0;
                for (vx, s) in vertices_of(&grid, v) {
                    let f = flux[vx];
                    acc += s[0] * w[0] * f[0] + s[1] * w[1] * f[1] + s[2] * w[2] * f[2];
                }
                *o += acc;
            }
        });
    }

    fn restrict(&self, full: &[f64], y: &mut [f64]) {
        let nt = self.tissue_voxels.len();
        let tv = &self.tissue_voxels;
        par::fill(&mut y[..nt], |u| full[tv[u] as usize]);
        for (l, (_, members)) in self.floating.iter().enumerate() {
            y[nt + l] = members.iter().map(|&v| full[v as usize]).sum();
        }
    }

    /// Net current leaving the conductor's surface for a full potential field, A.
    pub(crate) fn conductor_current(&self, potential: &[f64], contact: ContactRef) -> Option<f64> {
        let (_, members) = self.contacts.get(&contact)?;
        let mut total = 0.0;
        for &v in members {
            let v = v as usize;
            for (f, nb) in neighbor_faces(&self.grid, v) {
                let t = trans_at(&self.trans, f);
                if t > 0.0 {
                    total += t * (potential[v] - potential[nb]);
                }
            }
        }
        Some(total)
    }
}

pub(crate) struct Workspace {
    full: Vec<f64>,
    out: Vec<f64>,
    flux: Vec<[f64; 3]>,
}

impl Workspace {
    pub(crate) fn new(system: &DiscreteSystem) -> Self {
        let n = system.grid.len();
        Workspace {
            full: vec![0.0; n],
            out: vec![0.0; n],
            flux: if system.cross.is_some() { vec![[0.0; 3]; n] } else { Vec::new() },
        }
    }
}
