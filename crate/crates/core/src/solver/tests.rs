use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::conductivity::homogeneous;
use crate::geometry::{ConductorMap, StimulationSetting, VoxelLabel};
use crate::math::{norm, sub, Sym3, Vec3};
use crate::volume::{TensorVolume, Volume, VoxelGrid};

fn lcg(seed: &mut u64) -> f64 {
    *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    ((*seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
}

fn sphere_map(grid: VoxelGrid, center: Vec3, radius: f64, contact: ContactRef) -> ConductorMap {
    ConductorMap::from_fn(grid, |p| {
        if norm(sub(p, center)) <= radius { VoxelLabel::Conductor(contact) } else { VoxelLabel::Tissue }
    })
}

fn anisotropic(grid: VoxelGrid) -> TensorVolume {
    Volume::from_fn(grid, |p| {
        let w = 1.0 + 0.2 * libm::sin(p[0] * 0.7).abs();
        Sym3::new(2.0 * w, 1.0, 1.5, 0.3, -0.2, 0.25)
    })
}

const A: ContactRef = ContactRef::new(0, 0);
const B: ContactRef = ContactRef::new(0, 1);

#[test]
fn linear_field_is_reproduced_exactly() {
    let grid = VoxelGrid::centered_cube(9, 0.5, [0.0; 3]).unwrap();
    let sigma = homogeneous(grid, 0.2);
    let map = ConductorMap::empty(grid);
    let f = |p: Vec3| p[0] - 0.5 * p[1] + 2.0 * p[2];
    let sys = assemble(&sigma, &map, &StimulationSetting::new(60.0).unwrap(), OuterBoundary::Prescribed(&f)).unwrap();
    let cfg = SolverConfig { relative_tolerance: 1e-13, ..Default::default() };
    let sol = solve(&sys, &cfg).unwrap();
    for (v, u) in sol.potential.values().iter().enumerate() {
        assert!((u - f(grid.center_of(v))).abs() < 1e-10);
    }
}

#[test]
fn linear_field_exact_with_full_constant_tensor() {
    let grid = VoxelGrid::centered_cube(8, 1.0, [0.0; 3]).unwrap();
    let sigma = Volume::filled(grid, Sym3::new(2.0, 1.0, 1.5, 0.3, -0.2, 0.25));
    let f = |p: Vec3| 0.3 * p[0] + p[1] - p[2];
    let sys = assemble(&sigma, &ConductorMap::empty(grid), &StimulationSetting::new(60.0).unwrap(), OuterBoundary::Prescribed(&f))
        .unwrap();
    assert!(sys.has_cross_terms());
    let sol = solve(&sys, &SolverConfig { relative_tolerance: 1e-13, ..Default::default() }).unwrap();
    for (v, u) in sol.potential.values().iter().enumerate() {
        assert!((u - f(grid.center_of(v))).abs() < 1e-10);
    }
}

/// Independent evaluation of the discrete energy from its defining formula.
fn energy(grid: &VoxelGrid, sigma: &TensorVolume, labels: &[VoxelLabel], u: &[f64]) -> f64 {
    let h = grid.spacing();
    let [nx, ny, nz] = grid.dims();
    let s = sigma.values();
    let tissue = |v: usize| labels[v] == VoxelLabel::Tissue;
    let conductor = |v: usize| matches!(labels[v], VoxelLabel::Conductor(_));
    let comp = |t: &Sym3, a: usize| [t.xx, t.yy, t.zz][a];
    let mut w = 0.0;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let v = grid.linear(i, j, k);
                let c = [i, j, k];
                for a in 0..3 {
                    if c[a] + 1 >= grid.dims()[a] {
                        continue;
                    }
                    let mut d = c;
                    d[a] += 1;
                    let n = grid.linear(d[0], d[1], d[2]);
                    let geo = h[(a + 1) % 3] * h[(a + 2) % 3] / h[a];
                    let t = if tissue(v) && tissue(n) {
                        let (x, y) = (comp(&s[v], a), comp(&s[n], a));
                        2.0 * x * y / (x + y) * geo
                    } else if tissue(v) && conductor(n) {
                        2.0 * comp(&s[v], a) * geo
                    } else if conductor(v) && tissue(n) {
                        2.0 * comp(&s[n], a) * geo
                    } else {
                        0.0
                    };
                    w += 0.5 * t * (u[v] - u[n]) * (u[v] - u[n]);
                }
                if i + 1 < nx && j + 1 < ny && k + 1 < nz {
                    let mut cells = Vec::new();
                    for dk in 0..2 {
                        for dj in 0..2 {
                            for di in 0..2 {
                                cells.push(([di, dj, dk], grid.linear(i + di, j + dj, k + dk)));
                            }
                        }
                    }
                    if cells.iter().all(|(_, c)| tissue(*c)) {
                        let mut g = [0.0; 3];
                        let mut m = [0.0; 3];
                        for (off, c) in &cells {
                            for a in 0..3 {
                                let sign = if off[a] == 1 { 1.0 } else { -1.0 };
                                g[a] += sign * u[*c] / (4.0 * h[a]);
                            }
                            m[0] += s[*c].xy / 8.0;
                            m[1] += s[*c].xz / 8.0;
                            m[2] += s[*c].yz / 8.0;
                        }
                        w += grid.voxel_volume() * (m[0] * g[0] * g[1] + m[1] * g[0] * g[2] + m[2] * g[1] * g[2]);
                    }
                }
            }
        }
    }
    w
}

fn mixed_problem() -> (VoxelGrid, TensorVolume, ConductorMap, StimulationSetting) {
    let grid = VoxelGrid::new([7, 6, 5], [0.5, 0.6, 0.7], [0.0; 3]).unwrap();
    let sigma = anisotropic(grid);
    let map = ConductorMap::from_fn(grid, |p| {
        if p[0] < 0.4 && p[1] > 1.0 && p[1] < 2.0 && p[2] > 1.0 && p[2] < 2.0 {
            VoxelLabel::Insulator { lead: 0 }
        } else if (p[0] - 2.0).abs() < 0.3 && (p[1] - 1.8).abs() < 0.4 && (p[2] - 1.4).abs() < 0.4 {
            VoxelLabel::Conductor(A)
        } else if (p[0] - 1.0).abs() < 0.3 && (p[1] - 1.2).abs() < 0.4 && (p[2] - 2.1).abs() < 0.4 {
            VoxelLabel::Conductor(B)
        } else {
            VoxelLabel::Tissue
        }
    });
    let setting = StimulationSetting::new(60.0).unwrap().with(A, ContactRole::Cathode { voltage: -1.0 }).unwrap();
    (grid, sigma, map, setting)
}

#[test]
fn operator_is_the_hessian_of_the_discrete_energy() {
    let (grid, sigma, map, setting) = mixed_problem();
    let sys = assemble(&sigma, &map, &setting, OuterBoundary::Insulated).unwrap();
    assert!(sys.has_cross_terms());
    assert_eq!(sys.floating_contacts().collect::<Vec<_>>(), vec![B]);
    let n = sys.unknowns();
    let mut seed = 7;
    for _ in 0..5 {
        let x: Vec<f64> = (0..n).map(|_| lcg(&mut seed)).collect();
        let mut full = vec![0.0; grid.len()];
        for (v, node) in sys.nodes.iter().enumerate() {
            if let Node::Free(i) = node {
                full[v] = x[*i as usize];
            }
        }
        let mut y = vec![0.0; n];
        sys.apply(&x, &mut y);
        let quad: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let w = energy(&grid, &sigma, map.labels(), &full);
        assert!((quad - 2.0 * w).abs() <= 1e-12 * w.abs().max(1.0), "{quad} vs {}", 2.0 * w);
    }
}

#[test]
fn operator_is_symmetric_and_diagonal_matches() {
    let (_, sigma, map, setting) = mixed_problem();
    let sys = assemble(&sigma, &map, &setting, OuterBoundary::Grounded).unwrap();
    let n = sys.unknowns();
    let mut seed = 11;
    let x: Vec<f64> = (0..n).map(|_| lcg(&mut seed)).collect();
    let z: Vec<f64> = (0..n).map(|_| lcg(&mut seed)).collect();
    let (mut ax, mut az) = (vec![0.0; n], vec![0.0; n]);
    sys.apply(&x, &mut ax);
    sys.apply(&z, &mut az);
    let zax: f64 = z.iter().zip(&ax).map(|(a, b)| a * b).sum();
    let xaz: f64 = x.iter().zip(&az).map(|(a, b)| a * b).sum();
    assert!((zax - xaz).abs() < 1e-12 * zax.abs().max(1.0));
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for i in (0..n).step_by(17) {
        e[i] = 1.0;
        sys.apply(&e, &mut col);
        assert!((col[i] - sys.diagonal()[i]).abs() < 1e-12 * col[i].abs());
        e[i] = 0.0;
    }
}

#[test]
fn diagonal_tensor_rows_are_diagonally_dominant() {
    let grid = VoxelGrid::centered_cube(6, 1.0, [0.0; 3]).unwrap();
    let sigma = Volume::from_fn(grid, |p| Sym3::diag(1.0 + p[0].abs(), 0.5, 2.0));
    let map = sphere_map(grid, [0.5; 3], 0.9, A);
    let setting = StimulationSetting::new(60.0).unwrap().with(A, ContactRole::Cathode { voltage: -1.0 }).unwrap();
    let sys = assemble(&sigma, &map, &setting, OuterBoundary::Grounded).unwrap();
    assert!(!sys.has_cross_terms());
    let n = sys.unknowns();
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for i in 0..n {
        e[i] = 1.0;
        sys.apply(&e, &mut col);
        let off: f64 = col.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| c.abs()).sum();
        assert!(col[i] >= off - 1e-12);
        e[i] = 0.0;
    }
}

#[test]
fn floating_conductor_is_one_unknown() {
    let grid = VoxelGrid::centered_cube(12, 0.5, [0.0; 3]).unwrap();
    let map = ConductorMap::from_fn(grid, |p| {
        if p.iter().all(|c| c.abs() < 1.0) && p[2] > -0.5 {
            VoxelLabel::Conductor(B)
        } else {
            VoxelLabel::Tissue
        }
    });
    let members = map.count(VoxelLabel::Conductor(B));
    assert_eq!(members, 4 * 4 * 3);
    let sys = assemble(&homogeneous(grid, 0.1), &map, &StimulationSetting::new(60.0).unwrap(), OuterBoundary::Grounded).unwrap();
    let tissue_interior = (0..grid.len()).filter(|&v| !grid.on_boundary(v) && map.label(v) == VoxelLabel::Tissue).count();
    assert_eq!(sys.unknowns(), tissue_interior + 1);
}

#[test]
fn no_dirichlet_surface_is_singular() {
    let grid = VoxelGrid::centered_cube(5, 1.0, [0.0; 3]).unwrap();
    let r = assemble(&homogeneous(grid, 0.1), &ConductorMap::empty(grid), &StimulationSetting::new(60.0).unwrap(), OuterBoundary::Insulated);
    assert!(matches!(r, Err(Error::SingularSystem)));
}

#[test]
fn non_psd_tensor_is_rejected() {
    let grid = VoxelGrid::centered_cube(4, 1.0, [0.0; 3]).unwrap();
    let mut sigma = homogeneous(grid, 0.1);
    sigma.values_mut()[5] = Sym3::new(1.0, 1.0, 1.0, 2.0, 0.0, 0.0);
    let r = assemble(&sigma, &ConductorMap::empty(grid), &StimulationSetting::new(60.0).unwrap(), OuterBoundary::Grounded);
    assert!(matches!(r, Err(Error::NotPositiveSemiDefinite { voxel: 5, .. })));
}

#[test]
fn unknown_driven_contact_is_rejected() {
    let grid = VoxelGrid::centered_cube(4, 1.0, [0.0; 3]).unwrap();
    let setting = StimulationSetting::new(60.0).unwrap().with(A, ContactRole::AnodeGround).unwrap();
    let r = assemble(&homogeneous(grid, 0.1), &ConductorMap::empty(grid), &setting, OuterBoundary::Grounded);
    assert!(matches!(r, Err(Error::UnknownContact(c)) if c == A));
}

fn two_sphere_solve(va: f64) -> (DiscreteSystem, FieldSolution) {
    let grid = VoxelGrid::centered_cube(16, 0.5, [0.0; 3]).unwrap();
    let mut map = sphere_map(grid, [-1.5, 0.0, 0.0], 0.8, A);
    let b = sphere_map(grid, [1.5, 0.5, 0.0], 0.8, B);
    for v in 0..grid.len() {
        if b.label(v) != VoxelLabel::Tissue {
            map = ConductorMap::from_fn(grid, |p| {
                if norm(sub(p, [-1.5, 0.0, 0.0])) <= 0.8 {
                    VoxelLabel::Conductor(A)
                } else if norm(sub(p, [1.5, 0.5, 0.0])) <= 0.8 {
                    VoxelLabel::Conductor(B)
                } else {
                    VoxelLabel::Tissue
                }
            });
            break;
        }
    }
    let setting = StimulationSetting::new(60.0).unwrap().with(A, ContactRole::Cathode { voltage: va }).unwrap();
    let sys = assemble(&anisotropic(grid), &map, &setting, OuterBoundary::Grounded).unwrap();
    let sol = solve(&sys, &SolverConfig { relative_tolerance: 1e-11, ..Default::default() }).unwrap();
    (sys, sol)
}

#[test]
fn dirichlet_and_floating_voxels_carry_their_values() {
    let (sys, sol) = two_sphere_solve(-2.0);
    let vf = sol.floating_potentials[&B];
    assert!(vf < 0.0 && vf > -2.0);
    for (c, (_, members)) in &sys.contacts {
        for &v in members {
            let u = sol.potential.values()[v as usize];
            if *c == A {
                assert_eq!(u, -2.0);
            } else {
                assert_eq!(u, vf);
            }
        }
    }
    for v in 0..sys.grid.len() {
        if sys.grid.on_boundary(v) {
            assert_eq!(sol.potential.values()[v], 0.0);
        }
    }
}

#[test]
fn floating_net_current_vanishes() {
    let (sys, sol) = two_sphere_solve(-1.0);
    let i = floating_net_current(&sol, &sys, B).unwrap();
    let drive = driven_current(&sol, &sys).unwrap();
    assert!(drive > 0.0);
    assert!(i.abs() <= 1e-6 * drive, "{i} vs {drive}");
    assert!(matches!(floating_net_current(&sol, &sys, A), Err(Error::NotFloating(_))));
}

#[test]
fn voltage_scaling_is_linear() {
    let (_, a) = two_sphere_solve(-1.0);
    let (_, b) = two_sphere_solve(-3.5);
    let max = a.potential.values().iter().fold(0.0f64, |m, u| m.max(u.abs()));
    for (x, y) in a.potential.values().iter().zip(b.potential.values()) {
        assert!((3.5 * x - y).abs() <= 1e-10 * 3.5 * max.max(1.0) + 1e-9 * 3.5 * max);
    }
}

#[test]
fn superposition_identity_and_cancellation() {
    let (_, s) = two_sphere_solve(-1.0);
    let same = superpose_solutions(&[&s, &s], &[1.0, 0.0]).unwrap();
    assert_eq!(same.potential.values(), s.potential.values());
    assert!(same.iterations.is_none() && same.residual_norm.is_none());
    let zero = superpose_solutions(&[&s, &s], &[1.0, -1.0]).unwrap();
    assert!(zero.potential.values().iter().all(|u| *u == 0.0));
    assert!(zero.floating_potentials.values().all(|u| *u == 0.0));
}

#[test]
fn superposition_rejects_other_grids() {
    let (_, s) = two_sphere_solve(-1.0);
    let grid = VoxelGrid::centered_cube(4, 1.0, [0.0; 3]).unwrap();
    let other = FieldSolution::from_potential(Volume::filled(grid, 0.0));
    assert!(matches!(superpose_solutions(&[&s, &other], &[1.0, 1.0]), Err(Error::GridMismatch)));
}

#[test]
fn zero_drive_returns_zero_field() {
    let (sys, sol) = two_sphere_solve(0.0);
    assert_eq!(sol.iterations, Some(0));
    assert!(sol.potential.values().iter().all(|u| *u == 0.0));
    let _ = sys;
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let grid = VoxelGrid::centered_cube(12, 0.5, [0.0; 3]).unwrap();
    let map = sphere_map(grid, [0.0; 3], 0.8, A);
    let setting = StimulationSetting::new(60.0).unwrap().with(A, ContactRole::Cathode { voltage: -1.0 }).unwrap();
    let sys = assemble(&homogeneous(grid, 0.1), &map, &setting, OuterBoundary::Grounded).unwrap();
    let cfg = SolverConfig { max_iterations: 2, ..Default::default() };
    assert!(matches!(solve(&sys, &cfg), Err(Error::NotConverged { iterations: 2, .. })));
    let bad = SolverConfig { relative_tolerance: 1.5, ..Default::default() };
    assert!(matches!(solve(&sys, &bad), Err(Error::InvalidSolverConfig(_))));
}

#[test]
fn preconditioners_agree() {
    let (sys, a) = two_sphere_solve(-1.0);
    let cfg = SolverConfig { relative_tolerance: 1e-11, preconditioner: Preconditioner::None, ..Default::default() };
    let b = solve(&sys, &cfg).unwrap();
    for (x, y) in a.potential.values().iter().zip(b.potential.values()) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn insulator_voxels_are_filled_within_neighbor_range() {
    let grid = VoxelGrid::centered_cube(10, 0.5, [0.0; 3]).unwrap();
    let map = ConductorMap::from_fn(grid, |p| {
        if norm(sub(p, [-1.0, 0.0, 0.0])) < 0.6 {
            VoxelLabel::Conductor(A)
        } else if p[0] > 0.0 && p[0] < 1.0 && p[1].abs() < 0.6 && p[2].abs() < 0.6 {
            VoxelLabel::Insulator { lead: 0 }
        } else {
            VoxelLabel::Tissue
        }
    });
    let setting = StimulationSetting::new(60.0).unwrap().with(A, ContactRole::Cathode { voltage: -1.0 }).unwrap();
    let sys = assemble(&homogeneous(grid, 0.1), &map, &setting, OuterBoundary::Grounded).unwrap();
    let sol = solve(&sys, &SolverConfig::default()).unwrap();
    for v in 0..grid.len() {
        if let VoxelLabel::Insulator { .. } = map.label(v) {
            let u = sol.potential.values()[v];
            assert!(u < 0.0 && u > -1.0);
            assert!(sol.is_blocked(v));
        }
    }
}
