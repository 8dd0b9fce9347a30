//! Ground-truth optical flow from scene geometry and rigid-body motion.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{config, contract, Result};
use crate::io::{encode_raw_grid, write_rgb8};
use crate::num::{Real, Vec2, Vec3};
use crate::scene::{CameraIntrinsics, RigidBodyState, Scene};

/// Camera-frame velocity of a fragment attached to `body`.
pub fn fragment_velocity<T: Real>(
    frag_world: &Vec3<T>,
    body: &RigidBodyState<T>,
    camera: &RigidBodyState<T>,
) -> Vec3<T> {
    let v_world = body.point_velocity(frag_world) - camera.point_velocity(frag_world);
    camera.pose.inverse_transform_vector(&v_world)
}

/// Time derivative of the pinhole projection of `p` moving at `v`, both in the camera frame.
pub fn project_flow<T: Real>(v: &Vec3<T>, p: &Vec3<T>, focal_length: T) -> Result<Vec2<T>> {
    let z = p.z;
    if !(z > T::zero()) {
        return Err(contract(format!("fragment behind camera (Z = {z})")));
    }
    let z2 = z * z;
    Ok(Vec2::new(
        focal_length * (v.x * z - p.x * v.z) / z2,
        focal_length * (v.y * z - p.y * v.z) / z2,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T: Real> {
    pub width: usize,
    pub height: usize,
    /// Pixels per second, row-major.
    pub flow: Vec<Vec2<T>>,
    pub valid: Vec<bool>,
}

impl<T: Real> FlowField<T> {
    pub fn at(&self, u: usize, v: usize) -> (Vec2<T>, bool) {
        let i = v * self.width + u;
        (self.flow[i], self.valid[i])
    }

    pub fn max_magnitude(&self) -> T {
        self.flow.iter().map(|f| f.norm()).fold(T::zero(), |a, b| a.max(b))
    }

    /// Raw grid with interleaved `(u, v)` channels.
    pub fn to_raw_grid(&self) -> Vec<u8> {
        let data: Vec<T> = self.flow.iter().flat_map(|f| [f.x, f.y]).collect();
        encode_raw_grid(self.width, self.height, &data)
    }

    /// Color-wheel visualization normalized by the largest magnitude; invalid pixels are black.
    pub fn to_color(&self) -> Vec<[u8; 3]> {
        let max = self.max_magnitude().as_f64();
        self.flow
            .iter()
            .zip(&self.valid)
            .map(|(f, &ok)| {
                if !ok {
                    [0, 0, 0]
                } else if max <= 0.0 {
                    [255, 255, 255]
                } else {
                    flow_color(f.x.as_f64() / max, f.y.as_f64() / max)
                }
            })
            .collect()
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        write_rgb8(path, self.width, self.height, &self.to_color())
    }
}

/// Renders flow for every pixel that sees an instance.
pub fn render_flow<T: Real>(
    scene: &Scene<T>,
    camera: &RigidBodyState<T>,
    intr: &CameraIntrinsics<T>,
    body_states: &HashMap<u32, RigidBodyState<T>>,
) -> Result<FlowField<T>> {
    intr.validate()?;
    camera.pose.validate()?;
    let origin = camera.pose.position;
    let per_pixel: Vec<std::result::Result<Option<Vec2<T>>, u32>> = (0..intr.pixel_count())
        .into_par_iter()
        .map(|i| {
            let d = intr.pixel_direction(i % intr.width, i / intr.width).normalize();
            let dir = camera.pose.transform_vector(&d);
            let Some(hit) = scene.cast(&origin, &dir, T::zero(), T::INFINITY, &[]) else {
                return Ok(None);
            };
            let body = body_states.get(&hit.instance_id).ok_or(hit.instance_id)?;
            let v = fragment_velocity(&hit.point, body, camera);
            let p = camera.pose.inverse_transform_point(&hit.point);
            // a forward ray always lands at positive depth
            Ok(project_flow(&v, &p, intr.focal_length).ok())
        })
        .collect();

    let mut flow = Vec::with_capacity(per_pixel.len());
    let mut valid = Vec::with_capacity(per_pixel.len());
    for px in per_pixel {
        match px {
            Err(id) => return Err(config(format!("no body state for visible instance {id}"))),
            Ok(Some(f)) => {
                flow.push(f);
                valid.push(true);
            }
            Ok(None) => {
                flow.push(Vec2::zeros());
                valid.push(false);
            }
        }
    }
    Ok(FlowField { width: intr.width, height: intr.height, flow, valid })
}

/// Segment lengths of the standard flow color wheel: red→yellow→green→cyan→blue→magenta→red.
const WHEEL: [(usize, [u8; 3], [u8; 3]); 6] = [
    (15, [255, 0, 0], [255, 255, 0]),
    (6, [255, 255, 0], [0, 255, 0]),
    (4, [0, 255, 0], [0, 255, 255]),
    (11, [0, 255, 255], [0, 0, 255]),
    (13, [0, 0, 255], [255, 0, 255]),
    (6, [255, 0, 255], [255, 0, 0]),
];

fn wheel() -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for (n, a, b) in WHEEL {
        for k in 0..n {
            let s = k as f64 / n as f64;
            out.push(std::array::from_fn(|c| a[c] as f64 + (b[c] as f64 - a[c] as f64) * s));
        }
    }
    out
}

/// Color of a normalized flow vector (magnitude at most 1).
pub fn flow_color(fx: f64, fy: f64) -> [u8; 3] {
    let wheel = wheel();
    let n = wheel.len();
    let rad = (fx * fx + fy * fy).sqrt().min(1.0);
    let angle = (-fy).atan2(-fx) / std::f64::consts::PI;
    let fk = (angle + 1.0) / 2.0 * (n - 1) as f64;
    let k0 = fk.floor() as usize % n;
    let k1 = (k0 + 1) % n;
    let f = fk - fk.floor();
    std::array::from_fn(|c| {
        let col = ((1.0 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0;
        let col = 1.0 - rad * (1.0 - col);
        (255.0 * col).round().clamp(0.0, 255.0) as u8
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Quat;
    use crate::scene::{Instance, Material, Pose, ThermalMode, TriangleMesh};
    use std::sync::Arc;

    fn still() -> RigidBodyState<f64> {
        RigidBodyState::at_rest(Pose::identity())
    }

    #[test]
    fn fragment_velocity_cases() {
        let p = Vec3::new(0.3, -0.2, 4.0);
        assert_eq!(fragment_velocity(&p, &still(), &still()), Vec3::zeros());
        let body = RigidBodyState { linear_velocity: Vec3::new(1.0, 0.0, 0.0), ..still() };
        assert_eq!(fragment_velocity(&p, &body, &still()), Vec3::new(1.0, 0.0, 0.0));
        let cam = RigidBodyState { angular_velocity: Vec3::new(0.0, 0.0, 1.0), ..still() };
        let v = fragment_velocity(&Vec3::new(1.0, 0.0, 0.0), &still(), &cam);
        assert!((v - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn fragment_velocity_in_camera_frame() {
        let rot = Quat::from_axis_angle(&Vec3::y_axis(), std::f64::consts::FRAC_PI_2);
        let cam = RigidBodyState::at_rest(Pose::new(Vec3::zeros(), rot));
        let body = RigidBodyState { linear_velocity: Vec3::new(1.0, 0.0, 0.0), ..still() };
        let v = fragment_velocity(&Vec3::new(5.0, 0.0, 0.0), &body, &cam);
        // camera +Z points along world +X
        assert!((v - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn project_flow_cases() {
        let f = 500.0;
        assert_eq!(project_flow(&Vec3::zeros(), &Vec3::new(0.0, 0.0, 2.0), f).unwrap(), Vec2::zeros());
        let uv = project_flow(&Vec3::new(1.0, 0.0, 0.0), &Vec3::new(0.0, 0.0, 2.0), f).unwrap();
        assert!((uv - Vec2::new(250.0, 0.0)).norm() < 1e-12);
        let uv = project_flow(&Vec3::new(0.0, 0.0, -1.0), &Vec3::new(0.0, 0.0, 2.0), f).unwrap();
        assert_eq!(uv, Vec2::zeros());
        assert!(project_flow(&Vec3::zeros(), &Vec3::new(0.0, 0.0, 0.0), f).is_err());
        assert!(project_flow(&Vec3::zeros(), &Vec3::new(0.0, 0.0, -1.0), f).is_err());
    }

    fn wall_scene() -> Scene<f64> {
        let mesh = Arc::new(TriangleMesh::quad(100.0, 100.0).unwrap());
        let material = Arc::new(Material {
            albedo: 0.5,
            roughness: 0.5,
            acoustic_reflectivity: 0.5,
            thermal_mode: ThermalMode::AirTemperature,
            class_id: 1,
        });
        Scene::new(vec![Instance { id: 7, mesh, material, pose: Pose::from_position(Vec3::new(0.0, 0.0, 2.0)) }])
            .unwrap()
    }

    #[test]
    fn translating_camera_gives_uniform_flow() {
        let intr = CameraIntrinsics::centered(16, 12, 500.0).unwrap();
        let cam = RigidBodyState { linear_velocity: Vec3::new(1.0, 0.0, 0.0), ..still() };
        let states = HashMap::from([(7, still())]);
        let field = render_flow(&wall_scene(), &cam, &intr, &states).unwrap();
        assert!(field.valid.iter().all(|&v| v));
        for f in &field.flow {
            assert!((f - Vec2::new(-250.0, 0.0)).norm() < 1e-9);
        }
        let field = render_flow(&wall_scene(), &still(), &intr, &states).unwrap();
        assert!(field.flow.iter().all(|f| f.norm() < 1e-12));
    }

    #[test]
    fn roll_gives_tangential_flow() {
        let intr = CameraIntrinsics::centered(17, 17, 100.0).unwrap();
        let w = 0.7;
        let cam = RigidBodyState { angular_velocity: Vec3::new(0.0, 0.0, w), ..still() };
        let states = HashMap::from([(7, still())]);
        let field = render_flow(&wall_scene(), &cam, &intr, &states).unwrap();
        for v in 0..17 {
            for u in 0..17 {
                let r = Vec2::new(u as f64 - 8.0, v as f64 - 8.0);
                let (f, ok) = field.at(u, v);
                assert!(ok);
                assert!((f.norm() - w * r.norm()).abs() < 1e-9);
                assert!(f.dot(&r).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn missing_state_names_instance() {
        let intr = CameraIntrinsics::centered(4, 4, 10.0).unwrap();
        let err = render_flow(&wall_scene(), &still(), &intr, &HashMap::new()).unwrap_err();
        assert!(err.to_string().contains('7'));
        // an empty view needs no states
        let field = render_flow(&Scene::empty(), &still(), &intr, &HashMap::new()).unwrap();
        assert!(field.valid.iter().all(|&v| !v));
        assert!(field.flow.iter().all(|f| *f == Vec2::zeros()));
    }

    #[test]
    fn raw_export_interleaves() {
        let field = FlowField { width: 2, height: 1, flow: vec![Vec2::new(1.0, 2.0), Vec2::new(3.0, 4.0)], valid: vec![true; 2] };
        let (w, h, vals) = crate::io::decode_raw_grid(&field.to_raw_grid()).unwrap();
        assert_eq!((w, h), (2, 1));
        assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn color_wheel() {
        assert_eq!(flow_color(0.0, 0.0), [255, 255, 255]);
        assert_eq!(flow_color(1.0, 0.0), [255, 0, 0]);
        let c = flow_color(-1.0, 0.0);
        assert!(c[2] > 200 && c[0] < 60);
    }
}
