//! Built-in oracle checks: closed-form potentials, conservation and
//! linearity properties, set identities, activating-function exactness and
//! the optimizer's exhaustive references.
//!
//! Every check reports a measured error against a tolerance and passes when
//! `measured <= tolerance`. Exact identities use a tolerance of zero and
//! measure mismatch counts.

use std::f64::consts::PI;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use dualvta_core::activation::{
    activation_field, hessian_at, worst_case_direction, ActivationField, AfField, AxonPolicy, EfField, EvaluationGrid,
    Metric, Orientation,
};
use dualvta_core::conductivity::{homogeneous, tensor_from_diffusion};
use dualvta_core::geometry::{voxelize_leads, ConductorMap, ContactRef, ContactRole, LeadSpec, StimulationSetting, VoxelLabel};
use dualvta_core::math::{self, norm, perpendicular_basis, Sym3, Vec3};
use dualvta_core::optimizer::{
    brute_force_oracle, minimal_amplitude, strategy1_optimize, strategy2_enumerate, BankGeometry, ConfigurationBank,
    ContactConfiguration, OptimizationResult, OptimizationSpec, OracleMode, UnitSolutionBank,
};
use dualvta_core::solver::{
    assemble, driven_current, floating_net_current, solve, superpose_solutions, FieldSolution, OuterBoundary, SolverConfig,
};
use dualvta_core::volume::{ScalarVolume, Volume, VoxelGrid};
use dualvta_core::vta::{combined_af_vta, combined_ef_vta, superpose_vtas, threshold_vta, Provenance, TargetSpec, VtaMask};
use dualvta_core::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Analytic,
    Properties,
    All,
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "analytic" => Ok(Suite::Analytic),
            "properties" => Ok(Suite::Properties),
            "all" => Ok(Suite::All),
            _ => Err(format!("unknown suite '{s}' (expected analytic, properties or all)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// Acceptance criterion the check belongs to.
    pub criterion: u8,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, criterion: u8, measured: f64, tolerance: f64) -> Self {
        Check { name: name.into(), criterion, measured, tolerance, detail: String::new() }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }

    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut s = format!("{status} [{}] {}: measured {:.3e}, tolerance {:.3e}", self.criterion, self.name, self.measured, self.tolerance);
        if !self.detail.is_empty() {
            s.push_str(&format!(" ({})", self.detail));
        }
        s
    }
}

/// A named group of checks; an error inside the group becomes one failing
/// check.
pub struct Group {
    pub name: &'static str,
    pub criterion: u8,
    pub run: fn() -> Result<Vec<Check>>,
}

pub const ANALYTIC: [Group; 4] = [
    Group { name: "sphere_monopole", criterion: 1, run: sphere_monopole },
    Group { name: "linear_exactness", criterion: 2, run: linear_exactness },
    Group { name: "floating_sphere", criterion: 3, run: floating_sphere },
    Group { name: "anisotropic_stretch", criterion: 4, run: anisotropic_stretch },
];

pub const PROPERTIES: [Group; 4] = [
    Group { name: "twin_lead_linearity", criterion: 5, run: twin_lead_linearity },
    Group { name: "set_identities", criterion: 6, run: set_identities },
    Group { name: "activating_function", criterion: 7, run: activating_function },
    Group { name: "optimizer_oracles", criterion: 9, run: optimizer_oracles },
];

pub fn run_group(g: &Group) -> Vec<Check> {
    match (g.run)() {
        Ok(c) => c,
        Err(e) => vec![Check::new(g.name, g.criterion, f64::INFINITY, 0.0).with_detail(format!("error: {e}"))],
    }
}

/// Runs `suite`; `tolerance_override` replaces every tolerance.
pub fn run_suite(suite: Suite, tolerance_override: Option<f64>) -> Vec<Check> {
    let groups: Vec<&Group> = match suite {
        Suite::Analytic => ANALYTIC.iter().collect(),
        Suite::Properties => PROPERTIES.iter().collect(),
        Suite::All => ANALYTIC.iter().chain(&PROPERTIES).collect(),
    };
    let mut out: Vec<Check> = groups.into_iter().flat_map(run_group).collect();
    if let Some(t) = tolerance_override {
        for c in &mut out {
            c.tolerance = t;
        }
    }
    out
}

const BALL: ContactRef = ContactRef::new(0, 0);

fn relative_shell_error(u: &ScalarVolume, exact: impl Fn(Vec3) -> f64, center: Vec3) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (v, x) in u.values().iter().enumerate() {
        let p = u.grid().center_of(v);
        if (3.0..=15.0).contains(&norm(math::sub(p, center))) {
            num += (x - exact(p)).powi(2);
            den += exact(p).powi(2);
        }
    }
    (num / den).sqrt()
}

fn cathode(c: ContactRef, v: f64) -> Result<StimulationSetting> {
    StimulationSetting::new(60.0)?.with(c, ContactRole::Cathode { voltage: v })
}

/// Driven sphere of radius 0.5 mm at 3 V in a 60 mm cube at 1 mm spacing,
/// with the infinite-medium potential imposed on the outer faces.
pub fn sphere_monopole() -> Result<Vec<Check>> {
    let (a, v0, h, e_th) = (0.5, 3.0, 1.0, 0.06);
    let grid = VoxelGrid::centered_cube(61, h, [0.0; 3])?;
    let map = ConductorMap::from_fn(grid, |p| if norm(p) <= a + 1e-9 { VoxelLabel::Conductor(BALL) } else { VoxelLabel::Tissue });
    let exact = move |p: Vec3| v0 * a / norm(p);
    let sys = assemble(&homogeneous(grid, 2e-4), &map, &cathode(BALL, v0)?, OuterBoundary::Prescribed(&exact))?;
    let sol = solve(&sys, &SolverConfig::default())?;
    let err = relative_shell_error(&sol.potential, exact, [0.0; 3]);
    let eval = EvaluationGrid::new([0.0; 3], 20.0, 0.5)?;
    let field = activation_field(&sol, &eval, None)?;
    let mask = threshold_vta(&field, Metric::EfNorm, e_th, Provenance::Dual)?;
    let inside = mask.count() + field.valid.iter().filter(|v| !**v).count();
    let s = eval.spacing();
    let radius = (3.0 * inside as f64 * s * s * s / (4.0 * PI)).cbrt();
    let want = (v0 * a / e_th).sqrt();
    Ok(vec![
        Check::new("sphere shell potential L2 error", 1, err, 0.05),
        Check::new("sphere EF region radius error (mm)", 1, (radius - want).abs(), h)
            .with_detail(format!("radius {radius:.3} vs {want:.3} mm")),
    ])
}

pub fn linear_exactness() -> Result<Vec<Check>> {
    let grid = VoxelGrid::centered_cube(10, 1.0, [0.3, -0.1, 0.2])?;
    let sigma = Volume::filled(grid, Sym3::new(2.0, 1.0, 1.5, 0.3, -0.2, 0.25).scaled(1e-4));
    let f = |p: Vec3| 0.3 * p[0] + p[1] - p[2] + 0.7;
    let sys = assemble(&sigma, &ConductorMap::empty(grid), &StimulationSetting::new(60.0)?, OuterBoundary::Prescribed(&f))?;
    let sol = solve(&sys, &SolverConfig { relative_tolerance: 1e-13, ..SolverConfig::default() })?;
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for (v, u) in sol.potential.values().iter().enumerate() {
        let want = f(grid.center_of(v));
        err = err.max((u - want).abs());
        scale = scale.max(want.abs());
    }
    Ok(vec![Check::new("linear potential, full constant tensor", 2, err / scale, 1e-8)])
}

/// Uncharged sphere in a uniform field.
pub fn floating_sphere() -> Result<Vec<Check>> {
    let grid = VoxelGrid::centered_cube(61, 0.5, [0.0; 3])?;
    let (center, radius, e0, offset) = ([4.0, -1.0, 2.0], 2.0, 0.05, 0.5);
    let background = move |p: Vec3| offset - e0 * p[0];
    let map = ConductorMap::from_fn(grid, |p| {
        if norm(math::sub(p, center)) <= radius { VoxelLabel::Conductor(BALL) } else { VoxelLabel::Tissue }
    });
    let sys = assemble(&homogeneous(grid, 2e-4), &map, &StimulationSetting::new(60.0)?, OuterBoundary::Prescribed(&background))?;
    let sol = solve(&sys, &SolverConfig::default())?;
    let vf = sol.floating_potentials[&BALL];
    let want = background(center);
    let i = floating_net_current(&sol, &sys, BALL)?;
    let scale = 2e-4 * e0 * PI * radius * radius;
    Ok(vec![
        Check::new("floating sphere potential vs background", 3, (vf - want).abs() / want.abs(), 0.02)
            .with_detail(format!("{vf:.5} vs {want:.5} V")),
        Check::new("floating sphere net current / (sigma E0 pi R^2)", 3, i.abs() / scale, 1e-6),
    ])
}

/// Ellipsoidal conductor in `diag(2, 1, 0.5) * 1e-4` S/mm against the
/// coordinate-stretched monopole, plus the trace identity of the
/// diffusion-to-conductivity map.
pub fn anisotropic_stretch() -> Result<Vec<Check>> {
    let s = [2.0, 1.0, 0.5];
    let (v0, rho_a) = (-3.0, 1.2);
    let rho = move |p: Vec3| (p[0] * p[0] / s[0] + p[1] * p[1] / s[1] + p[2] * p[2] / s[2]).sqrt();
    let exact = move |p: Vec3| v0 * rho_a / rho(p);
    let grid = VoxelGrid::centered_cube(81, 0.5, [0.0; 3])?;
    let map = ConductorMap::from_fn(grid, |p| if rho(p) <= rho_a { VoxelLabel::Conductor(BALL) } else { VoxelLabel::Tissue });
    let sigma = Volume::filled(grid, Sym3::diag(s[0] * 1e-4, s[1] * 1e-4, s[2] * 1e-4));
    let sys = assemble(&sigma, &map, &cathode(BALL, v0)?, OuterBoundary::Prescribed(&exact))?;
    let sol = solve(&sys, &SolverConfig::default())?;
    let err = relative_shell_error(&sol.potential, exact, [0.0; 3]);

    let mut rng = StdRng::seed_from_u64(7);
    let small = VoxelGrid::new([10, 10, 10], [1.0; 3], [0.0; 3])?;
    let iso = Volume::from_fn(small, |_| rng.gen_range(1e-5..1e-3));
    let diffusion = Volume::from_fn(small, |_| {
        let a: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
        let m = |i: usize, j: usize| (0..3).map(|k| a[i][k] * a[j][k]).sum::<f64>() * 1e-3;
        Sym3::new(m(0, 0), m(1, 1), m(2, 2), m(0, 1), m(0, 2), m(1, 2))
    });
    let t = tensor_from_diffusion(&iso, &diffusion)?;
    let trace_err = t
        .tensors
        .values()
        .iter()
        .zip(iso.values())
        .map(|(t, s)| (t.trace() - 3.0 * s).abs() / (3.0 * s))
        .fold(0.0f64, f64::max);
    Ok(vec![
        Check::new("anisotropic shell potential L2 error", 4, err, 0.05),
        Check::new("conductivity trace identity", 4, trace_err, 1e-12)
            .with_detail(format!("{} isotropic fallbacks", t.isotropic_fallbacks)),
    ])
}

/// Two 3387-like leads in a heterogeneous diagonal medium: unit solves with
/// the full geometry superpose to the direct two-contact solve, and floating
/// contacts carry no net current.
pub fn twin_lead_linearity() -> Result<Vec<Check>> {
    let grid = VoxelGrid::new([41, 33, 49], [0.5; 3], [-10.0, -8.0, -6.0])?;
    let leads = [LeadSpec::template_3387([-1.0, 0.0, -2.0], [0.0, 0.0, 1.0])?, LeadSpec::template_3387([1.0, 0.0, -2.0], [0.0, 0.0, 1.0])?];
    let map = voxelize_leads(&grid, &leads)?;
    let sigma = Volume::from_fn(grid, |p| Sym3::diag(2e-4 * if p[2] > 3.0 { 1.5 } else { 1.0 }, 1.5e-4, 1e-4 + 1e-5 * p[0].abs()));
    let (a_ref, b_ref) = (ContactRef::new(0, 0), ContactRef::new(1, 0));
    let cfg = SolverConfig::default();
    let run = |roles: &[(ContactRef, ContactRole)]| -> Result<(FieldSolution, f64, f64)> {
        let mut s = StimulationSetting::new(60.0)?;
        for (c, r) in roles {
            s.set(*c, *r);
        }
        let sys = assemble(&sigma, &map, &s, OuterBoundary::Grounded)?;
        let sol = solve(&sys, &cfg)?;
        let drive = driven_current(&sol, &sys)?;
        let mut worst = 0.0f64;
        for c in sys.floating_contacts() {
            worst = worst.max(floating_net_current(&sol, &sys, c)?.abs());
        }
        Ok((sol, worst, drive))
    };
    let unit = ContactRole::Cathode { voltage: 1.0 };
    let (ua, ia, da) = run(&[(a_ref, unit), (b_ref, ContactRole::AnodeGround)])?;
    let (ub, ib, db) = run(&[(a_ref, ContactRole::AnodeGround), (b_ref, unit)])?;
    let (a, b) = (-2.0, -0.7);
    let (direct, id, dd) = run(&[(a_ref, ContactRole::Cathode { voltage: a }), (b_ref, ContactRole::Cathode { voltage: b })])?;
    let sum = superpose_solutions(&[&ua, &ub], &[a, b])?;
    let scale = direct.potential.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut diff = sum.potential.values().iter().zip(direct.potential.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    for (c, v) in &direct.floating_potentials {
        diff = diff.max((sum.floating_potentials[c] - v).abs());
    }
    let current = (ia / da).max(ib / db).max(id / dd);
    Ok(vec![
        Check::new("unit-solve superposition vs direct solve", 5, diff / scale, 10.0 * cfg.relative_tolerance),
        Check::new("floating net current / driven current", 3, current, 1e-6),
    ])
}

fn analytic_solution(sources: &[(Vec3, f64)], scale: f64) -> Result<FieldSolution> {
    let grid = VoxelGrid::centered_cube(41, 0.25, [0.0; 3])?;
    Ok(FieldSolution::from_potential(Volume::from_fn(grid, |p| {
        scale * sources.iter().map(|(c, s)| s / (norm(math::sub(p, *c)) + 0.3)).sum::<f64>()
    })))
}

fn mismatches(a: &VtaMask, b: &VtaMask) -> usize {
    a.active.iter().zip(&b.active).filter(|(x, y)| x != y).count()
}

pub fn set_identities() -> Result<Vec<Check>> {
    let eval = EvaluationGrid::new([0.0; 3], 3.0, 0.25)?;
    let policy = AxonPolicy::standard(Orientation::Fixed([0.0, 0.6, 0.8]))?;
    let s1 = [([-1.0, 0.0, 0.0], -1.0)];
    let s2 = [([1.0, 0.2, 0.0], -0.8)];
    let field = |src: &[(Vec3, f64)], scale: f64| -> Result<ActivationField> {
        activation_field(&analytic_solution(src, scale)?, &eval, Some(&policy))
    };
    let (f1, f2, f1n) = (field(&s1, 1.0)?, field(&s2, 1.0)?, field(&s1, -1.0)?);
    let (te, ta) = (0.4, 0.8);
    let m1 = threshold_vta(&f1, Metric::EfNorm, te, Provenance::Single(0))?;
    let m2 = threshold_vta(&f2, Metric::EfNorm, te, Provenance::Single(1))?;
    let v = superpose_vtas(&m1, &m2)?;
    let union = v.active.iter().zip(m1.active.iter().zip(&m2.active)).filter(|(u, (a, b))| **u != (**a || **b)).count();
    let mut scaling = 0;
    for lambda in [2.0, 0.5, 4.0] {
        let fl = field(&s1, lambda)?;
        for (metric, t) in [(Metric::EfNorm, te), (Metric::AfMax, ta)] {
            let scaled = threshold_vta(&fl, metric, t, Provenance::Dual)?;
            let reference = threshold_vta(&f1, metric, t / lambda, Provenance::Dual)?;
            scaling += mismatches(&scaled, &reference);
        }
    }
    let cancel = combined_ef_vta(&f1, &f1n, 1e-12)?.count() + combined_af_vta(&f1, &f1n, 1e-12)?.count();
    let symmetry = mismatches(&combined_ef_vta(&f1, &f2, te)?, &combined_ef_vta(&f2, &f1, te)?)
        + mismatches(&combined_af_vta(&f1, &f2, ta)?, &combined_af_vta(&f2, &f1, ta)?);
    Ok(vec![
        Check::new("superposed region equals union", 6, union as f64, 0.0),
        Check::new("amplitude/threshold scaling duality", 6, scaling as f64, 0.0),
        Check::new("combined region of opposite fields is empty", 6, cancel as f64, 0.0),
        Check::new("combined region symmetric in its arguments", 6, symmetry as f64, 0.0),
    ])
}

/// Golden-section refinement of `|t(theta)^T H t(theta)|` on `[a, b]`.
fn refine_max(q: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if q(c) >= q(d) {
            b = d;
        } else {
            a = c;
        }
    }
    q(0.5 * (a + b))
}

pub fn activating_function() -> Result<Vec<Check>> {
    let mut rng = StdRng::seed_from_u64(11);
    let mut r = |s: f64| rng.gen_range(-s..s);
    let q = Sym3::new(r(2.0), r(2.0), r(2.0), r(1.0), r(1.0), r(1.0));
    let b = [r(1.0), r(1.0), r(1.0)];
    let grid = VoxelGrid::centered_cube(21, 0.5, [0.0; 3])?;
    let u = Volume::from_fn(grid, |p| 0.5 * q.quad(p) + math::dot(b, p) + 0.25);
    let mut hess_err = 0.0f64;
    for _ in 0..200 {
        let p = [r(3.5), r(3.5), r(3.5)];
        let h = hessian_at(&u, p)?;
        for (x, y) in h.components().iter().zip(q.components()) {
            hess_err = hess_err.max((x - y).abs());
        }
    }
    let mut dir_err = 0.0f64;
    for _ in 0..200 {
        let h = Sym3::new(r(2.0), r(2.0), r(2.0), r(2.0), r(2.0), r(2.0));
        let reference = math::normalize([r(1.0), r(1.0), r(1.0)]).unwrap_or([0.0, 0.0, 1.0]);
        let t = worst_case_direction(&h, reference);
        let best = h.quad(t).abs();
        let (e1, e2) = perpendicular_basis(reference);
        let value = |theta: f64| h.quad(math::add(math::scale(e1, theta.cos()), math::scale(e2, theta.sin()))).abs();
        let step = PI / 180.0;
        let k = (0..360).max_by(|&i, &j| value(i as f64 * step).total_cmp(&value(j as f64 * step))).unwrap_or(0);
        let dense = refine_max(value, (k as f64 - 1.0) * step, (k as f64 + 1.0) * step);
        let overshoot = (0..360).map(|i| value(i as f64 * step) - best).fold(0.0f64, f64::max);
        dir_err = dir_err.max((best - dense).abs()).max(overshoot);
    }
    Ok(vec![
        Check::new("Hessian of a global quadratic", 7, hess_err, 1e-9),
        Check::new("worst-case direction vs 360-direction sampling", 7, dir_err, 1e-9),
    ])
}

pub fn optimizer_eval() -> EvaluationGrid {
    EvaluationGrid::new([0.0; 3], 2.0, 0.4).expect("valid evaluation grid")
}

/// Synthetic unit field from an electric-field function; the activating
/// function samples are a fixed linear map of the field.
pub fn synthetic_field(e: impl Fn(Vec3) -> Vec3) -> ActivationField {
    let g = optimizer_eval();
    let n = g.len();
    let e: Vec<Vec3> = (0..n).map(|i| e(g.node(i))).collect();
    let samples = 3;
    let phi_tan: Vec<f64> = (0..n * samples)
        .map(|k| {
            let v = e[k / samples];
            v[0] * (1.0 + 0.1 * (k % samples) as f64) - 0.5 * v[1]
        })
        .collect();
    let phi_max = (0..n).map(|i| phi_tan[i * samples..(i + 1) * samples].iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
    ActivationField {
        eval: g,
        valid: vec![true; n],
        ef: EfField { norm: e.iter().map(|v| norm(*v)).collect(), e },
        af: Some(AfField {
            length: 1.0,
            step: 0.5,
            directions: vec![[1.0, 0.0, 0.0]; n],
            samples,
            phi_tan,
            phi_max,
            hessian_center: vec![Sym3::ZERO; n],
        }),
    }
}

fn point_source(at: Vec3, strength: f64) -> impl Fn(Vec3) -> Vec3 {
    move |p| {
        let d = math::sub(p, at);
        let r = norm(d).max(0.2);
        math::scale(d, strength / (r * r * r))
    }
}

pub fn box_target(lo: Vec3, hi: Vec3) -> TargetSpec {
    let g = optimizer_eval();
    let t = (0..g.len()).map(|i| (0..3).all(|a| g.node(i)[a] >= lo[a] && g.node(i)[a] <= hi[a])).collect();
    TargetSpec::new("box", g, t).expect("sized to the grid")
}

const FOUR: [ContactRef; 4] = [ContactRef::new(0, 0), ContactRef::new(0, 1), ContactRef::new(0, 2), ContactRef::new(0, 3)];
const FOUR_AT: [Vec3; 4] = [[-1.4, 0.0, 0.0], [1.3, 0.1, 0.0], [0.1, 1.2, 0.3], [-0.2, -1.5, -0.3]];

/// Four contacts, monopolar plus adjacent bipolar configurations (both
/// polarities); anodes contribute a reversed, weaker source.
pub fn four_contact_instance() -> Result<(ConfigurationBank, Vec<ContactConfiguration>)> {
    let mut feasible: Vec<_> = FOUR.iter().map(|c| ContactConfiguration::monopolar(*c)).collect();
    for w in FOUR.windows(2) {
        feasible.push(ContactConfiguration::bipolar(w[0], w[1])?);
        feasible.push(ContactConfiguration::bipolar(w[1], w[0])?);
    }
    let entries = feasible
        .iter()
        .map(|c| {
            let terms: Vec<(Vec3, f64)> = c
                .cathodes()
                .iter()
                .map(|k| (FOUR_AT[k.contact as usize], 1.0))
                .chain(c.anodes().iter().map(|k| (FOUR_AT[k.contact as usize], -0.6)))
                .collect();
            let f = synthetic_field(|p| terms.iter().fold([0.0; 3], |e, (at, s)| math::add(e, point_source(*at, *s)(p))));
            (c.clone(), f)
        })
        .collect();
    Ok((ConfigurationBank::new(entries)?, feasible))
}

/// The shipped two-contact amplitude instance.
pub fn two_contact_instance() -> Result<(UnitSolutionBank, OptimizationSpec)> {
    let entries = [([-1.4, 0.0, 0.0], 1.0), ([1.4, 0.2, 0.0], 0.8)]
        .iter()
        .enumerate()
        .map(|(k, (p, s))| (FOUR[k], synthetic_field(point_source(*p, *s))))
        .collect();
    let bank = UnitSolutionBank::new(BankGeometry::DualGeometry, entries)?;
    let mut spec = OptimizationSpec::new(Metric::EfNorm, 1.0, 0.7, box_target([-0.6, -1.0, -1.0], [1.0, 1.0, 1.0]));
    spec.max_amplitude = 8.0;
    spec.amplitude_step = 0.1;
    Ok((bank, spec))
}

fn ranking_mismatches(a: &OptimizationResult, b: &OptimizationResult) -> usize {
    let differ = a.ranking.iter().zip(&b.ranking).filter(|(x, y)| x != y).count();
    differ + a.ranking.len().abs_diff(b.ranking.len())
}

pub fn optimizer_oracles() -> Result<Vec<Check>> {
    let (bank, feasible) = four_contact_instance()?;
    let mut rank = 0;
    for metric in [Metric::EfNorm, Metric::AfMax] {
        let mut spec = OptimizationSpec::new(metric, 1.5, 0.6, box_target([-1.0, -0.5, -1.0], [0.2, 0.5, 1.0]));
        spec.max_amplitude = 4.0;
        let fast = strategy2_enumerate(&bank, &spec, &feasible)?;
        let slow = brute_force_oracle(OracleMode::Strategy2 { bank: &bank, feasible: &feasible }, &spec)?;
        rank += ranking_mismatches(&fast, &slow) + usize::from(!fast.feasible);
    }

    let mut rng = StdRng::seed_from_u64(5);
    let mut bisect_err = 0.0f64;
    for _ in 0..32 {
        let mut r = |s: f64| rng.gen_range(-s..s);
        let (a, b) = ([r(1.3), r(1.3), 0.2], [r(1.3), r(1.3), -0.4]);
        let f = synthetic_field(|p| math::add(point_source(a, 1.0)(p), point_source(b, 0.5)(p)));
        let theta = rng.gen_range(0.05..1.0);
        let th = rng.gen_range(0.1..5.0);
        let mut spec = OptimizationSpec::new(Metric::EfNorm, th, theta, box_target([-0.5, -0.5, -1.0], [0.5, 0.9, 1.0]));
        spec.max_amplitude = 1e9;
        let Some(lambda) = minimal_amplitude(&f, &spec)?.value() else {
            bisect_err = f64::INFINITY;
            continue;
        };
        let unit: Vec<f64> = f.ef.norm.clone();
        let k = spec.required_points();
        let covered = |l: f64| unit.iter().zip(&spec.target.target).filter(|(v, t)| **t && l * **v >= th).count();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while covered(hi) < k {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if covered(mid) >= k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        bisect_err = bisect_err.max((lambda - hi).abs() / hi.max(1.0));
    }

    let (bank1, spec1) = two_contact_instance()?;
    let mut s1 = 0.0f64;
    for metric in [Metric::EfNorm, Metric::AfMax] {
        let spec = OptimizationSpec { metric, ..spec1.clone() };
        let cd = strategy1_optimize(&bank1, &spec)?;
        let brute = brute_force_oracle(OracleMode::Strategy1(&bank1), &spec)?;
        let amp_diff = cd.amplitudes.iter().zip(&brute.amplitudes).map(|(x, y)| (x.1 - y.1).abs()).fold(0.0f64, f64::max);
        s1 = s1.max((cd.objective - brute.objective).abs()).max(amp_diff);
        if !(cd.feasible && brute.feasible) {
            s1 = f64::INFINITY;
        }
    }
    Ok(vec![
        Check::new("configuration ranking vs exhaustive oracle (mismatches)", 9, rank as f64, 0.0),
        Check::new("minimal amplitude vs bisection", 9, bisect_err, 1e-9),
        Check::new("amplitude search vs exhaustive grid", 9, s1, 0.0),
    ])
}
