//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.
//!
//! Tolerances are fixed here and in `dualvta::validate`; nothing is read
//! from the environment.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dualvta::config;
use dualvta::pipeline::{self, Outputs, Stage};
use dualvta::validate::{self, Check, Group};

struct Line {
    criterion: u8,
    title: &'static str,
    pass: bool,
    notes: Vec<String>,
}

impl Line {
    fn new(criterion: u8, title: &'static str) -> Self {
        Line { criterion, title, pass: true, notes: Vec::new() }
    }

    fn require(&mut self, ok: bool, note: impl Into<String>) {
        self.pass &= ok;
        let mark = if ok { "ok" } else { "FAILED" };
        self.notes.push(format!("{} [{mark}]", note.into()));
    }

    fn checks(&mut self, checks: &[Check]) {
        for c in checks {
            let mut note = format!("{} {:.3e} <= {:.3e}", c.name, c.measured, c.tolerance);
            if !c.detail.is_empty() {
                note.push_str(&format!(" ({})", c.detail));
            }
            self.require(c.passed(), note);
        }
    }

    fn runtime(&mut self, took: Duration, limit_s: f64) {
        self.require(took.as_secs_f64() < limit_s, format!("runtime {:.1} s < {limit_s} s", took.as_secs_f64()));
    }
}

fn timed_group(g: &Group) -> (Vec<Check>, Duration) {
    let t = Instant::now();
    let c = validate::run_group(g);
    (c, t.elapsed())
}

const CANONICAL: &str = include_str!("../../../scenarios/twin_leads.json");

fn run_scenario(json: &str, dir: &Path, threads: usize) -> Result<Outputs, String> {
    std::fs::write(dir.join("scenario.json"), json).map_err(|e| e.to_string())?;
    let loaded = config::load(&dir.join("scenario.json")).map_err(|e| e.to_string())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
    pool.install(|| pipeline::run(&loaded, Stage::Run, &mut |_| {})).map_err(|e| e.to_string())
}

fn canonical(line3: &mut Line) -> Line {
    let mut line = Line::new(8, "twin-lead trend: single-lead union under, combined field over the dual region");
    let dir = tempfile::tempdir().expect("tempdir");
    let json = CANONICAL.replace("\"../out/twin_leads\"", "\"out\"");
    let t = Instant::now();
    let out = match run_scenario(&json, dir.path(), rayon::current_num_threads()) {
        Ok(o) => o,
        Err(e) => {
            line.require(false, format!("pipeline error: {e}"));
            return line;
        }
    };
    let took = t.elapsed();
    let cmp = out.comparison.as_ref().expect("dual arm present");
    let n = |label: &str| cmp.mask(label).map(|m| m.count()).unwrap_or(0);
    for m in ["ef", "af"] {
        let (v, d, c) = (n(&format!("V_{m}")), n(&format!("dual_{m}")), n(&format!("C_{m}")));
        line.require(v < d && d < c, format!("{m}: n(V) {v} < n(dual) {d} < n(C) {c}"));
    }
    let aware = out.arms.iter().find(|a| a.name == "aware1").expect("geometry-aware arm");
    let induced: Vec<f64> = aware.floating.iter().filter(|f| f.contact.lead == 1).map(|f| f.potential_v).collect();
    let weakest = induced.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    line.require(
        induced.len() == 4 && weakest > 0.01,
        format!("inactive lead floating potentials {induced:.3?} V, min |u| {weakest:.3} > 0.01 V"),
    );
    let worst = out
        .arms
        .iter()
        .flat_map(|a| a.floating.iter().map(move |f| f.net_current_a.abs() / a.driven_current_a))
        .fold(0.0f64, f64::max);
    line3.require(worst < 1e-6, format!("canonical arms: max floating |I| / driven {worst:.3e} < 1e-6"));
    line.runtime(took, 600.0);
    line
}

const SMALL: &str = r#"{
  "domain": { "spacing_mm": 0.5, "padding_mm": 5.0 },
  "leads": [
    { "tip_mm": [-1.0, 0.0, -2.25], "axis": [0.0, 0.0, 1.0], "template": "3387" },
    { "tip_mm": [1.0, 0.2, -2.25], "axis": [0.0, 0.1, 1.0], "template": "3387" }
  ],
  "stimulation": {
    "pulse_width_us": 90.0,
    "contacts": [
      { "lead": 0, "contact": 0, "role": "cathode", "voltage_v": -2.0 },
      { "lead": 1, "contact": 1, "role": "cathode", "voltage_v": -1.5 },
      { "lead": 1, "contact": 3, "role": "anode" }
    ]
  },
  "conductivity": { "kind": "homogeneous", "sigma_s_per_mm": 1.5e-4 },
  "evaluation": { "side_mm": 8.0, "spacing_mm": 0.5 },
  "thresholds": { "ef_v_per_mm": [[60.0, 0.3], [120.0, 0.2]], "af_v_per_mm2": [[60.0, 0.08], [120.0, 0.05]] },
  "targets": [ { "name": "t", "aabb": { "min_mm": [-3.0, 0.5, -2.0], "max_mm": [3.0, 3.5, 2.0] } } ],
  "optimization": {
    "strategy": "configurations", "metric": "af", "target": "t", "coverage_fraction": 0.5,
    "configurations": [
      { "cathodes": [[0, 0]] }, { "cathodes": [[1, 1]] }, { "cathodes": [[0, 1]], "anodes": [[0, 2]] },
      { "cathodes": [[0, 0], [1, 0]] }
    ]
  },
  "output_dir": "out"
}"#;

const COMPARED: [&str; 5] = ["comparison.csv", "coverage.csv", "floating.csv", "optimization_ranking.csv", "manifest.json"];

fn read_all(dir: &Path) -> Vec<Vec<u8>> {
    COMPARED.iter().map(|f| std::fs::read(dir.join("out").join(f)).unwrap_or_default()).collect()
}

fn scalars(out: &Outputs) -> Vec<f64> {
    let mut v = Vec::new();
    for a in &out.arms {
        v.push(a.driven_current_a);
        v.extend(a.floating.iter().map(|f| f.potential_v));
        v.push(a.solution.potential.values().iter().map(|x| x.abs()).sum());
    }
    if let Some(o) = &out.optimization {
        v.push(o.result.objective);
        v.extend(o.result.ranking.iter().filter_map(|r| r.objective));
    }
    v
}

fn determinism() -> Line {
    let mut line = Line::new(10, "determinism: serial reruns byte-identical, parallel runs agree");
    let dir = tempfile::tempdir().expect("tempdir");
    let first = run_scenario(SMALL, dir.path(), 1);
    let a = read_all(dir.path());
    let second = run_scenario(SMALL, dir.path(), 1);
    let b = read_all(dir.path());
    let parallel = run_scenario(SMALL, dir.path(), 4);
    let c = read_all(dir.path());
    let (first, _second, parallel) = match (first, second, parallel) {
        (Ok(x), Ok(y), Ok(z)) => (x, y, z),
        (x, y, z) => {
            line.require(false, format!("pipeline error: {:?} {:?} {:?}", x.err(), y.err(), z.err()));
            return line;
        }
    };
    let nonempty = a.iter().all(|f| !f.is_empty());
    line.require(nonempty && a == b, format!("serial rerun: {} files byte-identical", COMPARED.len()));
    line.require(a == c, "4-thread run: same files byte-identical to serial");
    let (s, p) = (scalars(&first), scalars(&parallel));
    let rel = s.iter().zip(&p).map(|(x, y)| (x - y).abs() / x.abs().max(1e-300)).fold(0.0f64, f64::max);
    line.require(s.len() == p.len() && rel <= 1e-10, format!("{} scalar outputs, max relative difference {rel:.1e} <= 1e-10", s.len()));
    line
}

fn main() -> ExitCode {
    let mut lines: Vec<Line> = Vec::new();
    let titles = [
        (1, "analytic monopole: sphere potential and EF region radius"),
        (2, "linear exactness under a constant full tensor"),
        (3, "floating conductor potential and zero net current"),
        (4, "anisotropy: coordinate-stretch oracle and trace identity"),
    ];
    let limits = [60.0, 10.0, f64::INFINITY, f64::INFINITY];
    for ((g, (n, title)), limit) in validate::ANALYTIC.iter().zip(titles).zip(limits) {
        let (checks, took) = timed_group(g);
        let mut line = Line::new(n, title);
        line.checks(&checks);
        if limit.is_finite() {
            line.runtime(took, limit);
        }
        lines.push(line);
    }
    let (twin, _) = timed_group(&validate::PROPERTIES[0]);
    let (c5, c3): (Vec<Check>, Vec<Check>) = twin.into_iter().partition(|c| c.criterion == 5);
    lines[2].checks(&c3);
    let mut line5 = Line::new(5, "linearity: unit solves superpose to the direct solve");
    line5.checks(&c5);
    lines.push(line5);
    for (g, title) in validate::PROPERTIES[1..3].iter().zip(["set identities: union, scaling duality, cancellation, symmetry", "activating function: quadratic Hessian, worst-case direction"]) {
        let mut line = Line::new(g.criterion, title);
        line.checks(&timed_group(g).0);
        lines.push(line);
    }
    let line8 = canonical(&mut lines[2]);
    lines.push(line8);
    let mut line9 = Line::new(9, "optimizer: ranking, minimal amplitude, amplitude search vs oracles");
    line9.checks(&timed_group(&validate::PROPERTIES[3]).0);
    lines.push(line9);
    lines.push(determinism());

    lines.sort_by_key(|l| l.criterion);
    for l in &lines {
        println!("{} criterion {:>2}: {}", if l.pass { "PASS" } else { "FAIL" }, l.criterion, l.title);
        for n in &l.notes {
            println!("        {n}");
        }
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("acceptance: {} criteria, {failed} failed", lines.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
