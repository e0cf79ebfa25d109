#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

/// Two parallel 3387 leads on a coarse grid; solves in well under a second.
pub fn small_scenario() -> Value {
    json!({
        "domain": { "spacing_mm": 0.6, "padding_mm": 4.0 },
        "leads": [
            { "tip_mm": [-1.0, 0.0, -2.25], "axis": [0.0, 0.0, 1.0], "template": "3387" },
            { "tip_mm": [1.0, 0.0, -2.25], "axis": [0.0, 0.0, 1.0], "template": "3387" }
        ],
        "stimulation": {
            "pulse_width_us": 60.0,
            "contacts": [
                { "lead": 0, "contact": 0, "role": "cathode", "voltage_v": -3.0 },
                { "lead": 1, "contact": 0, "role": "cathode", "voltage_v": -3.0 }
            ]
        },
        "conductivity": { "kind": "homogeneous", "sigma_s_per_mm": 2e-4 },
        "evaluation": { "side_mm": 8.0, "spacing_mm": 0.5 },
        "thresholds": { "ef_v_per_mm": [[60.0, 0.2]], "af_v_per_mm2": [[60.0, 0.05]] },
        "targets": [ { "name": "t", "sphere": { "center_mm": [0.0, 2.0, 0.5], "radius_mm": 1.5 } } ],
        "output_dir": "out"
    })
}

pub fn write_scenario(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("scenario.json");
    std::fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p
}
