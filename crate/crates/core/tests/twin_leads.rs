//! Solver properties on a coarse two-lead geometry.

use dualvta_core::conductivity::homogeneous;
use dualvta_core::geometry::{voxelize_leads, ConductorMap, ContactRef, ContactRole, LeadSpec, StimulationSetting};
use dualvta_core::math::Sym3;
use dualvta_core::solver::{
    assemble, driven_current, floating_net_current, solve, superpose_solutions, FieldSolution, OuterBoundary,
    SolverConfig,
};
use dualvta_core::volume::{TensorVolume, Volume, VoxelGrid};
use dualvta_core::Error;

fn grid() -> VoxelGrid {
    VoxelGrid::new([41, 33, 49], [0.5; 3], [-10.0, -8.0, -6.0]).unwrap()
}

fn leads() -> Vec<LeadSpec> {
    vec![
        LeadSpec::template_3387([-1.0, 0.0, -2.0], [0.0, 0.0, 1.0]).unwrap(),
        LeadSpec::template_3387([1.0, 0.0, -2.0], [0.0, 0.0, 1.0]).unwrap(),
    ]
}

fn map() -> ConductorMap {
    voxelize_leads(&grid(), &leads()).unwrap()
}

fn heterogeneous() -> TensorVolume {
    Volume::from_fn(grid(), |p| Sym3::diag(2e-4 * (1.0 + 0.5 * (p[2] > 3.0) as u8 as f64), 1.5e-4, 1e-4 + 1e-5 * p[0].abs()))
}

const A: ContactRef = ContactRef::new(0, 0);
const B: ContactRef = ContactRef::new(1, 0);

fn setting(roles: &[(ContactRef, ContactRole)]) -> StimulationSetting {
    let mut s = StimulationSetting::new(60.0).unwrap();
    for (c, r) in roles {
        s.set(*c, *r);
    }
    s
}

fn run(sigma: &TensorVolume, map: &ConductorMap, s: &StimulationSetting) -> FieldSolution {
    let sys = assemble(sigma, map, s, OuterBoundary::Grounded).unwrap();
    solve(&sys, &SolverConfig::default()).unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[test]
fn unit_solutions_superpose_to_direct_solve() {
    let (sigma, map) = (heterogeneous(), map());
    let cfg = SolverConfig::default();
    let ua = run(&sigma, &map, &setting(&[(A, ContactRole::Cathode { voltage: 1.0 }), (B, ContactRole::AnodeGround)]));
    let ub = run(&sigma, &map, &setting(&[(A, ContactRole::AnodeGround), (B, ContactRole::Cathode { voltage: 1.0 })]));
    let (a, b) = (-2.0, -0.7);
    let direct = run(&sigma, &map, &setting(&[(A, ContactRole::Cathode { voltage: a }), (B, ContactRole::Cathode { voltage: b })]));
    let sum = superpose_solutions(&[&ua, &ub], &[a, b]).unwrap();
    let scale = max_abs(direct.potential.values());
    let diff = sum.potential.values().iter().zip(direct.potential.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff <= 10.0 * cfg.relative_tolerance * scale, "{diff} vs {scale}");
    for (c, v) in &direct.floating_potentials {
        assert!((sum.floating_potentials[c] - v).abs() <= 10.0 * cfg.relative_tolerance * scale);
    }
}

#[test]
fn floating_unit_solutions_have_a_different_structure() {
    let (sigma, map) = (homogeneous(grid(), 2e-4), map());
    let ua = run(&sigma, &map, &setting(&[(A, ContactRole::Cathode { voltage: 1.0 })]));
    let ub = run(&sigma, &map, &setting(&[(B, ContactRole::Cathode { voltage: 1.0 })]));
    assert!(matches!(superpose_solutions(&[&ua, &ub], &[1.0, 1.0]), Err(Error::StructureMismatch)));
}

#[test]
fn maximum_principle_with_floating_contacts() {
    let (sigma, map) = (heterogeneous(), map());
    let s = setting(&[(A, ContactRole::Cathode { voltage: -1.0 }), (ContactRef::new(1, 2), ContactRole::AnodeGround)]);
    let sol = run(&sigma, &map, &s);
    for u in sol.potential.values() {
        assert!((-1.0 - 1e-9..=1e-9).contains(u), "{u}");
    }
    for v in sol.floating_potentials.values() {
        assert!(*v < 0.0 && *v > -1.0);
    }
}

#[test]
fn geometry_aware_single_lead_floating_currents() {
    let (sigma, map) = (homogeneous(grid(), 2e-4), map());
    let s = setting(&[(A, ContactRole::Cathode { voltage: -3.0 })]);
    let sys = assemble(&sigma, &map, &s, OuterBoundary::Grounded).unwrap();
    let sol = solve(&sys, &SolverConfig::default()).unwrap();
    let drive = driven_current(&sol, &sys).unwrap();
    assert!(drive > 0.0);
    for k in 0..4 {
        let c = ContactRef::new(1, k);
        let i = floating_net_current(&sol, &sys, c).unwrap();
        assert!(i.abs() <= 1e-6 * drive, "{c}: {i} vs {drive}");
        let v = sol.floating_potentials[&c];
        assert!(v < -1e-3 && v > -3.0, "{c}: {v}");
    }
    // The untouched contacts on the driven lead float too.
    for k in 1..4 {
        assert!(floating_net_current(&sol, &sys, ContactRef::new(0, k)).unwrap().abs() <= 1e-6 * drive);
    }
}

#[test]
fn voltage_scaling() {
    let (sigma, map) = (heterogeneous(), map());
    let base = run(&sigma, &map, &setting(&[(A, ContactRole::Cathode { voltage: -1.0 })]));
    let scaled = run(&sigma, &map, &setting(&[(A, ContactRole::Cathode { voltage: -2.5 })]));
    let scale = max_abs(scaled.potential.values());
    for (x, y) in base.potential.values().iter().zip(scaled.potential.values()) {
        assert!((2.5 * x - y).abs() <= 1e-10 * scale);
    }
}

#[test]
fn mirrored_geometry_gives_mirrored_field() {
    let g = grid();
    let sigma = homogeneous(g, 2e-4);
    let mirrored: Vec<LeadSpec> = leads().iter().map(|l| l.mirrored(0, 0.0)).collect();
    let m1 = voxelize_leads(&g, &leads()).unwrap();
    let m2 = voxelize_leads(&g, &mirrored).unwrap();
    let s = setting(&[(A, ContactRole::Cathode { voltage: -1.0 }), (ContactRef::new(0, 3), ContactRole::AnodeGround)]);
    let u1 = run(&sigma, &m1, &s);
    let u2 = run(&sigma, &m2, &s);
    let [nx, ny, nz] = g.dims();
    let scale = max_abs(u1.potential.values());
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let a = *u1.potential.get(i, j, k);
                let b = *u2.potential.get(nx - 1 - i, j, k);
                assert!((a - b).abs() <= 1e-8 * scale, "{i} {j} {k}");
            }
        }
    }
}
