//! Reference robot models shipped with the crate, plus a few analytic
//! bodies used by tests and benchmarks.

use serde_json::json;

use crate::model::{load_model, RobotModel};

pub const MINI_HUMANOID_JSON: &str = include_str!("../models/mini_humanoid.json");
pub const PLANAR_BIPED_JSON: &str = include_str!("../models/planar_biped.json");

/// 3D floating-base humanoid with 12 actuated joints (4 per leg, 2 per arm),
/// 8 keypoints and 4 contact corners per foot.
pub fn mini_humanoid() -> RobotModel {
    load_model(MINI_HUMANOID_JSON).expect("bundled mini-humanoid is valid")
}

/// Five-link biped moving in the x–z plane: 4 actuated joints, 4 keypoints
/// and one contact point per foot.
pub fn planar_biped() -> RobotModel {
    load_model(PLANAR_BIPED_JSON).expect("bundled planar biped is valid")
}

/// Free-floating solid box with no joints. Its four bottom corners are
/// contact points and its center is the single keypoint.
pub fn free_box(mass: f64, half_extents: [f64; 3]) -> RobotModel {
    let [a, b, c] = half_extents;
    let ixx = mass / 3.0 * (b * b + c * c);
    let iyy = mass / 3.0 * (a * a + c * c);
    let izz = mass / 3.0 * (a * a + b * b);
    let corners: Vec<_> = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
        .iter()
        .enumerate()
        .map(|(i, (sx, sy))| {
            json!({"name": format!("corner{i}"), "link": 0, "offset": [sx * a, sy * b, -c], "group": "bottom"})
        })
        .collect();
    let doc = json!({
        "name": "box",
        "friction": 0.8,
        "links": [{"name": "box", "parent": null, "mass": mass, "com": [0, 0, 0],
                   "inertia": [[ixx, 0, 0], [0, iyy, 0], [0, 0, izz]]}],
        "keypoints": [{"name": "center", "link": 0, "offset": [0, 0, 0]}],
        "contacts": corners,
    });
    load_model(&doc.to_string()).expect("box model is valid")
}

/// Fixed-base pendulum: a point-like bob of `mass` at distance `length`
/// below a revolute joint about y. Zero angle hangs straight down.
pub fn fixed_pendulum(mass: f64, length: f64, torque_limit: f64) -> RobotModel {
    let tiny = 1e-6;
    let doc = json!({
        "name": "pendulum",
        "base": "fixed",
        "friction": 0.8,
        "links": [
            {"name": "anchor", "parent": null, "mass": 1.0, "com": [0, 0, 0],
             "inertia": [[0.01, 0, 0], [0, 0.01, 0], [0, 0, 0.01]]},
            {"name": "bob", "parent": "anchor", "mass": mass, "com": [0, 0, -length],
             "inertia": [[tiny, 0, 0], [0, tiny, 0], [0, 0, tiny]]}
        ],
        "joints": [{"name": "swing", "child": "bob", "axis": [0, 1, 0], "origin": {"xyz": [0, 0, 0]},
                    "lower": -10.0, "upper": 10.0, "velocity": 100.0, "torque": torque_limit}],
        "keypoints": [{"name": "bob", "link": "bob", "offset": [0, 0, -length]}],
    });
    load_model(&doc.to_string()).expect("pendulum model is valid")
}

/// Floating-base serial chain of `n` links hanging along -z, alternating
/// y and x joint axes. Used for random-configuration property tests.
pub fn floating_chain(n: usize) -> RobotModel {
    let mut links = vec![
        json!({"name": "l0", "parent": null, "mass": 2.0, "com": [0.01, 0.02, 0.03],
        "inertia": [[0.05, 0.001, 0.0], [0.001, 0.04, 0.002], [0.0, 0.002, 0.03]]}),
    ];
    let mut joints = Vec::new();
    for i in 1..=n {
        links.push(
            json!({"name": format!("l{i}"), "parent": if i == 1 { 0 } else { i - 1 },
            "mass": 1.0 + 0.1 * i as f64, "com": [0.02, -0.01, -0.12],
            "inertia": [[0.02, 0.0, 0.001], [0.0, 0.015, 0.0], [0.001, 0.0, 0.01]]}),
        );
        let axis = if i % 2 == 0 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        joints.push(json!({"name": format!("j{i}"), "child": i, "axis": axis,
            "origin": {"xyz": [0.01, 0.03, -0.25], "quat": [0.9950042, 0.0998334, 0.0, 0.0]},
            "lower": -3.0, "upper": 3.0, "velocity": 20.0, "torque": 50.0}));
    }
    let doc = json!({
        "name": "chain",
        "friction": 0.8,
        "links": links,
        "joints": joints,
        "keypoints": [{"name": "tip", "link": n, "offset": [0.0, 0.05, -0.2]},
                      {"name": "root", "link": 0, "offset": [0.1, 0.0, 0.0]}],
        "adjacency": [[0, 1]],
    });
    load_model(&doc.to_string()).expect("chain model is valid")
}
