mod common;

use common::{small_scenario, write_scenario};
use dualvta::config;
use dualvta::io;
use dualvta::pipeline::{self, Stage};
use dualvta_core::math::Sym3;
use dualvta_core::volume::{LabelVolume, TensorVolume, VoxelGrid};
use serde_json::json;

fn run(v: &serde_json::Value, stage: Stage) -> (tempfile::TempDir, pipeline::Outputs) {
    let dir = tempfile::tempdir().unwrap();
    let loaded = config::load(&write_scenario(dir.path(), v)).unwrap();
    let out = pipeline::run(&loaded, stage, &mut |_| {}).unwrap();
    (dir, out)
}

#[test]
fn geometry_aware_arm_floats_the_inactive_lead() {
    let mut v = small_scenario();
    v["arms"] = json!([{ "kind": "dual" }, { "kind": "geometry_aware", "lead": 0 }]);
    let (_dir, out) = run(&v, Stage::Solve);
    let aware = out.arms.iter().find(|a| a.name == "aware1").unwrap();
    let inactive: Vec<_> = aware.floating.iter().filter(|f| f.contact.lead == 1).collect();
    assert_eq!(inactive.len(), 4);
    // Every induced potential lies between the cathode and ground.
    assert!(inactive.iter().all(|f| f.potential_v < 0.0 && f.potential_v > -3.0));
    for f in &aware.floating {
        assert!(f.net_current_a.abs() < 1e-6 * aware.driven_current_a);
    }
}

#[test]
fn label_and_diffusion_volumes_drive_conductivity() {
    let dir = tempfile::tempdir().unwrap();
    let grid = VoxelGrid::new([40, 40, 50], [0.6; 3], [-11.7, -11.7, -10.0]).unwrap();
    let labels = LabelVolume::from_fn(grid, |p| if p[0] > 3.0 { 2 } else { 1 });
    // Zero diffusion in one corner forces the isotropic fallback there.
    let diffusion = TensorVolume::from_fn(grid, |p| if p[2] > 15.0 { Sym3::ZERO } else { Sym3::new(1.7e-3, 0.5e-3, 0.5e-3, 0.1e-3, 0.0, 0.0) });
    io::write_labels(dir.path(), "labels", &labels).unwrap();
    io::write_tensor(dir.path(), "dti", &diffusion).unwrap();
    let mut v = small_scenario();
    v["domain"] = json!({});
    v["conductivity"] = json!({
        "kind": "volumes", "labels": "labels.hdr", "tissues": "default", "diffusion": "dti.hdr",
        "heterogeneity_box": { "half_width_mm": 6.0, "sigma_background_s_per_mm": 1e-4 }
    });
    std::fs::write(dir.path().join("scenario.json"), serde_json::to_vec(&v).unwrap()).unwrap();
    let loaded = config::load(&dir.path().join("scenario.json")).unwrap();
    let domain = pipeline::prepare(&loaded).unwrap();
    assert!(domain.grid.matches(&grid));
    assert!(domain.isotropic_fallbacks > 0);
    let out = pipeline::run(&loaded, Stage::Compare, &mut |_| {}).unwrap();
    let cmp = out.comparison.unwrap();
    assert!(cmp.mask("dual_ef").unwrap().count() > 0);
    let manifest = std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("\"isotropic_fallbacks\""));
}

#[test]
fn amplitude_search_respects_bounds_and_coverage() {
    let mut v = small_scenario();
    v["optimization"] = json!({
        "strategy": "amplitudes", "metric": "ef", "target": "t", "coverage_fraction": 0.5,
        "max_amplitude_v": 4.0, "amplitude_step_v": 0.5
    });
    let (dir, out) = run(&v, Stage::Optimize);
    let opt = out.optimization.unwrap();
    assert!(opt.result.feasible);
    assert!(opt.result.coverage_pct >= 50.0);
    for (_, a) in &opt.result.amplitudes {
        assert!((0.0..=4.0).contains(a));
        assert!((a / 0.5 - (a / 0.5).round()).abs() < 1e-9);
    }
    assert!(dir.path().join("out/optimization_amplitudes.csv").exists());
}

#[test]
fn configuration_ranking_is_sorted_by_objective() {
    let mut v = small_scenario();
    v["optimization"] = json!({ "strategy": "configurations", "metric": "af", "target": "t", "coverage_fraction": 0.6 });
    let (dir, out) = run(&v, Stage::Optimize);
    let opt = out.optimization.unwrap();
    let objectives: Vec<f64> = opt.result.ranking.iter().map_while(|r| r.objective).collect();
    assert!(!objectives.is_empty());
    assert!(objectives.windows(2).all(|w| w[0] <= w[1]));
    let csv = std::fs::read_to_string(dir.path().join("out/optimization_ranking.csv")).unwrap();
    assert!(csv.starts_with("rank,configuration,lambda_v,objective,coverage_pct,status"));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, _) = run(&small_scenario(), Stage::Run);
    let (b, _) = run(&small_scenario(), Stage::Run);
    for f in ["comparison.csv", "coverage.csv", "floating.csv", "vta_C_af.raw", "potential_dual.raw"] {
        assert_eq!(std::fs::read(a.path().join("out").join(f)).unwrap(), std::fs::read(b.path().join("out").join(f)).unwrap(), "{f}");
    }
}
