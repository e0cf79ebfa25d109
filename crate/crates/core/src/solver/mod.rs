//! Quasi-static potential solve `div(sigma grad u) = 0` with Dirichlet
//! contacts, a grounded (or prescribed) outer boundary and zero-net-current
//! floating conductors.

mod cg;
mod system;

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

pub use system::{assemble, DiscreteSystem, OuterBoundary, Structure};
use system::Node;

use crate::geometry::{ContactRef, ContactRole};
use crate::par::Reduction;
use crate::volume::{MaskVolume, ScalarVolume, Volume};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    None,
    #[default]
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub relative_tolerance: f64,
    pub max_iterations: usize,
    pub preconditioner: Preconditioner,
    pub reduction: Reduction,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            relative_tolerance: 1e-8,
            max_iterations: 20_000,
            preconditioner: Preconditioner::Diagonal,
            reduction: Reduction::FixedOrder,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.relative_tolerance > 0.0 && self.relative_tolerance < 1.0) {
            return Err(Error::InvalidSolverConfig("relative_tolerance must lie in (0, 1)".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidSolverConfig("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub potential: ScalarVolume,
    pub floating_potentials: BTreeMap<ContactRef, f64>,
    pub residual_norm: Option<f64>,
    pub iterations: Option<usize>,
    /// Voxels occupied by a lead (insulator or metal).
    pub blocked: Option<MaskVolume>,
    pub structure: Option<Structure>,
}

impl FieldSolution {
    /// Wraps a potential that did not come from [`solve`] (analytic fields).
    pub fn from_potential(potential: ScalarVolume) -> Self {
        FieldSolution {
            potential,
            floating_potentials: BTreeMap::new(),
            residual_norm: None,
            iterations: None,
            blocked: None,
            structure: None,
        }
    }

    pub fn is_blocked(&self, voxel: usize) -> bool {
        self.blocked.as_ref().is_some_and(|b| b.values()[voxel])
    }
}

pub fn solve(system: &DiscreteSystem, cfg: &SolverConfig) -> Result<FieldSolution> {
    cfg.validate()?;
    let out = cg::pcg(system, cfg)?;
    let grid = *system.grid();
    let nt = system.tissue_unknowns();
    let mut u = vec![0.0; grid.len()];
    let mut known = vec![true; grid.len()];
    for (v, node) in system.nodes.iter().enumerate() {
        match node {
            Node::Fixed => u[v] = system.fixed[v],
            Node::Free(i) => u[v] = out.x[*i as usize],
            Node::Excluded => known[v] = false,
        }
    }
    harmonic_fill(&grid, &mut u, &known);
    let floating_potentials =
        system.floating.iter().enumerate().map(|(l, (c, _))| (*c, out.x[nt + l])).collect();
    Ok(FieldSolution {
        potential: Volume::new(grid, u)?,
        floating_potentials,
        residual_norm: Some(out.relative_residual),
        iterations: Some(out.iterations),
        blocked: Some(Volume::new(grid, system.blocked.clone())?),
        structure: Some(system.structure.clone()),
    })
}

const FILL_SWEEPS: usize = 50;

/// Smooth extension into voxels outside the conducting domain (lead shafts) so
/// interpolation next to them stays bounded: a layered neighbor-mean seed
/// followed by Jacobi sweeps restricted to the unknown voxels.
fn harmonic_fill(grid: &crate::volume::VoxelGrid, u: &mut [f64], known: &[bool]) {
    let missing: Vec<usize> = (0..u.len()).filter(|&v| !known[v]).collect();
    if missing.is_empty() {
        return;
    }
    let neighbors = |v: usize| {
        let c = grid.ijk(v);
        let dims = grid.dims();
        let mut out = [usize::MAX; 6];
        for a in 0..3 {
            let s = grid.stride(a);
            if c[a] > 0 {
                out[2 * a] = v - s;
            }
            if c[a] + 1 < dims[a] {
                out[2 * a + 1] = v + s;
            }
        }
        out
    };
    let mut seeded = known.to_vec();
    let mut queue: VecDeque<usize> = missing
        .iter()
        .copied()
        .filter(|&v| neighbors(v).iter().any(|&w| w != usize::MAX && known[w]))
        .collect();
    let mut queued = vec![false; u.len()];
    for &v in &queue {
        queued[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        let (mut s, mut n) = (0.0, 0usize);
        for w in neighbors(v) {
            if w != usize::MAX && seeded[w] {
                s += u[w];
                n += 1;
            }
        }
        u[v] = if n > 0 { s / n as f64 } else { 0.0 };
        seeded[v] = true;
        for w in neighbors(v) {
            if w != usize::MAX && !seeded[w] && !queued[w] {
                queued[w] = true;
                queue.push_back(w);
            }
        }
    }
    let mut next = vec![0.0; missing.len()];
    for _ in 0..FILL_SWEEPS {
        for (slot, &v) in next.iter_mut().zip(&missing) {
            let (mut s, mut n) = (0.0, 0usize);
            for w in neighbors(v) {
                if w != usize::MAX {
                    s += u[w];
                    n += 1;
                }
            }
            *slot = if n > 0 { s / n as f64 } else { u[v] };
        }
        for (&val, &v) in next.iter().zip(&missing) {
            u[v] = val;
        }
    }
}

/// Net current leaving a contact's surface, A (sigma in S/mm, lengths in mm).
pub fn contact_current(solution: &FieldSolution, system: &DiscreteSystem, contact: ContactRef) -> Result<f64> {
    if !solution.potential.grid().matches(system.grid()) {
        return Err(Error::GridMismatch);
    }
    system
        .conductor_current(solution.potential.values(), contact)
        .ok_or(Error::UnknownContact(contact))
}

pub fn floating_net_current(solution: &FieldSolution, system: &DiscreteSystem, contact: ContactRef) -> Result<f64> {
    match system.role(contact) {
        Some(ContactRole::Floating) => contact_current(solution, system, contact),
        Some(_) => Err(Error::NotFloating(contact)),
        None => Err(Error::UnknownContact(contact)),
    }
}

/// Sum of `|I|` over the cathodes, the scale against which floating net
/// currents are judged.
pub fn driven_current(solution: &FieldSolution, system: &DiscreteSystem) -> Result<f64> {
    let mut total = 0.0;
    for (c, (role, _)) in &system.contacts {
        if matches!(role, ContactRole::Cathode { .. }) {
            total += contact_current(solution, system, *c)?.abs();
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests;

pub fn superpose_solutions(solutions: &[&FieldSolution], weights: &[f64]) -> Result<FieldSolution> {
    let first = *solutions.first().ok_or(Error::MissingData("solutions"))?;
    if solutions.len() != weights.len() {
        return Err(Error::SizeMismatch { expected: solutions.len(), actual: weights.len() });
    }
    let grid = *first.potential.grid();
    for s in solutions {
        if !s.potential.grid().matches(&grid) {
            return Err(Error::GridMismatch);
        }
        if s.structure != first.structure || s.blocked.as_ref().map(|b| b.values()) != first.blocked.as_ref().map(|b| b.values()) {
            return Err(Error::StructureMismatch);
        }
    }
    let mut u = vec![0.0; grid.len()];
    let mut floating = BTreeMap::new();
    for (s, &w) in solutions.iter().zip(weights) {
        for (o, v) in u.iter_mut().zip(s.potential.values()) {
            *o += w * v;
        }
        for (c, v) in &s.floating_potentials {
            *floating.entry(*c).or_insert(0.0) += w * v;
        }
    }
    Ok(FieldSolution {
        potential: Volume::new(grid, u)?,
        floating_potentials: floating,
        residual_norm: None,
        iterations: None,
        blocked: first.blocked.clone(),
        structure: first.structure.clone(),
    })
}
