#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub const CAMERA_RPY: [f64; 3] = [-std::f64::consts::FRAC_PI_2, 0.0, -std::f64::consts::FRAC_PI_2];

pub fn simrun() -> &'static str {
    env!("CARGO_BIN_EXE_simrun")
}

pub fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn intr(w: usize, h: usize) -> Value {
    json!({"width": w, "height": h, "horizontal_fov": 1.0})
}

/// Small scene with a moving box, a static sphere, every image sensor and a tether.
pub fn sensor_scenario(duration: f64, seed: u64) -> Value {
    let mount = json!({"body": 10, "pose": {"rpy": CAMERA_RPY}});
    json!({
        "duration": duration,
        "base_dt": 0.01,
        "seed": seed,
        "scene": {
            "meshes": {
                "box": {"type": "cuboid", "size": [1.0, 1.0, 1.0]},
                "ball": {"type": "uv_sphere", "radius": 0.4, "stacks": 8, "slices": 16}
            },
            "materials": {
                "a": {"albedo": 0.5, "roughness": 0.5, "acoustic_reflectivity": 0.9, "class_id": 1},
                "b": {"albedo": 0.2, "roughness": 0.2, "acoustic_reflectivity": 0.5, "class_id": 2}
            },
            "classes": ["background", "box", "ball"],
            "instances": [
                {"id": 1, "mesh": "box", "material": "a", "trajectory": {"interpolation": "linear", "waypoints": [
                    {"t": 0.0, "pose": {"position": [5.0, -0.5, 0.0]}},
                    {"t": 2.0, "pose": {"position": [5.0, 0.5, 0.2], "rpy": [0.0, 0.0, 0.4]}}
                ]}},
                {"id": 2, "mesh": "ball", "material": "b", "pose": {"position": [4.0, 1.0, 0.5]}}
            ],
            "thermal": {"air_temperature": 18.0}
        },
        "bodies": [{"id": 10, "pose": {"position": [0.0, 0.0, 0.0]}}],
        "sensors": [
            {"name": "cam", "type": "camera", "rate": 10, "mount": mount, "config": {"intrinsics": intr(24, 16)}},
            {"name": "heat", "type": "thermal", "rate": 10, "mount": mount,
             "config": {"intrinsics": intr(24, 16), "temp_min": 0.0, "temp_max": 40.0, "noise_stddev": 0.5}},
            {"name": "fls", "type": "sonar", "rate": 5, "mount": mount,
             "config": {"preset": "gemini_1200ik", "num_beams": 16, "num_bins": 32, "range_max": 10.0,
                        "vertical_rays_per_beam": 2, "gain": 20.0}},
            {"name": "ebc", "type": "event_camera", "rate": 20, "mount": mount, "config": {"intrinsics": intr(16, 12)}},
            {"name": "flow", "type": "optical_flow", "rate": 10, "mount": mount, "config": {"intrinsics": intr(24, 16)}},
            {"name": "ann", "type": "annotation", "rate": 10, "mount": mount, "config": {"intrinsics": intr(24, 16)}}
        ],
        "thrusters": [
            {"name": "t0", "rotor": {"type": "first_order", "tau": 0.1}, "generation": {"type": "quadratic", "ct": 0.01},
             "mount": {"body": 1}, "command": {"type": "constant", "value": 20.0}}
        ],
        "tethers": [
            {"name": "line",
             "config": {"n_spheres": 5, "mass_per_sphere": 0.1, "sphere_radius": 0.02, "segment_rest_length": 0.2,
                        "total_length": 0.8, "joint_damping": 0.05, "stretch_stiffness": 200.0, "axial_damping": 2.0,
                        "water_density": 1000.0, "drag_coefficient": 1.0},
             "start": [0.0, 0.0, -2.0], "direction": [1.0, 0.0, 0.0],
             "attachments": [{"endpoint": "first", "mode": {"type": "fixed_world", "point": [0.0, 0.0, -2.0]}}],
             "rate": 10}
        ],
        "comm_nodes": {
            "drop_probability": 0.3,
            "acoustic": [
                {"id": 1, "mount": {"body": 10}, "cone_half_angle": std::f64::consts::PI, "max_range": 100.0},
                {"id": 2, "mount": {"body": 2}, "cone_half_angle": std::f64::consts::PI, "max_range": 100.0}
            ],
            "messages": [
                {"channel": "acoustic", "src": 1, "dst": 2, "emit_time": 0.0, "payload": "a"},
                {"channel": "acoustic", "src": 2, "dst": 1, "emit_time": 0.05, "payload": "b"},
                {"channel": "acoustic", "src": 1, "dst": 2, "emit_time": 0.1, "payload": "c"}
            ]
        }
    })
}

/// Relative path to file bytes for every file under `root`.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Manifest JSON with the wall-clock field removed.
pub fn manifest_without_clock(bytes: &[u8]) -> Value {
    let mut v: Value = serde_json::from_slice(bytes).unwrap();
    v.as_object_mut().unwrap().remove("wall_clock_seconds");
    v
}

/// Output trees compared byte for byte, manifests modulo wall clock.
pub fn trees_equal(a: &Path, b: &Path) -> Result<(), String> {
    let (ta, tb) = (tree(a), tree(b));
    if ta.keys().ne(tb.keys()) {
        return Err("file sets differ".into());
    }
    for (k, va) in &ta {
        let vb = &tb[k];
        let same = if k == "manifest.json" {
            manifest_without_clock(va) == manifest_without_clock(vb)
        } else {
            va == vb
        };
        if !same {
            return Err(format!("{k} differs"));
        }
    }
    Ok(())
}
