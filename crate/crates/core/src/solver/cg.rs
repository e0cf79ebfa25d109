//! Preconditioned conjugate gradients on a [`DiscreteSystem`].

use alloc::vec;
use alloc::vec::Vec;

use super::system::{DiscreteSystem, Workspace};
use super::{Preconditioner, SolverConfig};
use crate::math::sqrt;
use crate::par;
use crate::{Error, Result};

pub(crate) struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

const MAX_RESTARTS: usize = 3;

pub(crate) fn pcg(system: &DiscreteSystem, cfg: &SolverConfig) -> Result<CgOutcome> {
    let b = system.rhs();
    let n = b.len();
    let mode = cfg.reduction;
    let b_norm = sqrt(par::dot(b, b, mode));
    if n == 0 || b_norm == 0.0 {
        return Ok(CgOutcome { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let inv_diag: Vec<f64> = match cfg.preconditioner {
        Preconditioner::Diagonal => system.diagonal().iter().map(|d| 1.0 / d).collect(),
        Preconditioner::None => Vec::new(),
    };
    let precondition = |r: &[f64], z: &mut [f64]| match cfg.preconditioner {
        Preconditioner::Diagonal => par::fill(z, |i| r[i] * inv_diag[i]),
        Preconditioner::None => z.copy_from_slice(r),
    };

    let mut ws = Workspace::new(system);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iterations = 0;
    let mut relative = 1.0;

    for restart in 0..=MAX_RESTARTS {
        if restart > 0 {
            // Recompute the true residual; recurrence drift can hide a stall.
            system.apply_with(&x, &mut q, &mut ws);
            par::fill(&mut r, |i| b[i] - q[i]);
        }
        precondition(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = par::dot(&r, &z, mode);
        relative = sqrt(par::dot(&r, &r, mode)) / b_norm;
        while relative > cfg.relative_tolerance {
            if iterations >= cfg.max_iterations {
                return Err(Error::NotConverged { iterations, relative_residual: relative });
            }
            system.apply_with(&p, &mut q, &mut ws);
            let pq = par::dot(&p, &q, mode);
            if !(pq > 0.0) {
                return Err(Error::NotConverged { iterations, relative_residual: relative });
            }
            let alpha = rz / pq;
            par::axpy(&mut x, alpha, &p);
            par::axpy(&mut r, -alpha, &q);
            precondition(&r, &mut z);
            let rz_next = par::dot(&r, &z, mode);
            par::xpby(&mut p, &z, rz_next / rz);
            rz = rz_next;
            relative = sqrt(par::dot(&r, &r, mode)) / b_norm;
            iterations += 1;
        }
        system.apply_with(&x, &mut q, &mut ws);
        let true_r: Vec<f64> = par::collect(n, |i| b[i] - q[i]);
        let true_relative = sqrt(par::dot(&true_r, &true_r, mode)) / b_norm;
        if true_relative <= cfg.relative_tolerance {
            return Ok(CgOutcome { x, iterations, relative_residual: true_relative });
        }
        relative = true_relative;
    }
    Err(Error::NotConverged { iterations, relative_residual: relative })
}
