//! Scene geometry, materials and CPU ray casting.

mod bvh;
pub mod mesh;
pub mod pose;
pub mod render;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Result};
use crate::num::{is_unit, Real, Vec2, Vec3};
use bvh::Bvh;
pub use mesh::TriangleMesh;
pub use pose::{Interpolation, KinematicTrajectory, Pose, RigidBodyState, Waypoint};
pub use render::{render_buffers, CameraIntrinsics, LightingEnvironment, RenderBuffers};

/// Start offset for secondary and occlusion rays (m).
pub const SECONDARY_RAY_EPSILON: f64 = 1e-6;

/// Temperature texture sampled bilinearly through per-vertex UV coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct TemperatureMap<T: Real> {
    pub width: usize,
    pub height: usize,
    /// Row-major grid of °C, row 0 at v = 0.
    pub values: Vec<T>,
    /// One UV coordinate per mesh vertex, in `[0, 1]²`.
    pub uv: Vec<Vec2<T>>,
}

impl<T: Real> TemperatureMap<T> {
    pub fn validate(&self) -> Result<()> {
        if self.width < 1 || self.height < 1 || self.values.len() != self.width * self.height {
            return Err(config("temperature map must be at least 1x1 with width*height values"));
        }
        if self.values.iter().any(|v| !v.finite()) {
            return Err(config("temperature map has non-finite entries"));
        }
        Ok(())
    }

    /// Bilinear lookup; UV outside the unit square is clamped.
    pub fn sample(&self, uv: &Vec2<T>) -> T {
        let fx = uv.x.clamp(T::zero(), T::one()) * T::lit((self.width - 1) as f64);
        let fy = uv.y.clamp(T::zero(), T::one()) * T::lit((self.height - 1) as f64);
        let x0 = fx.floor().as_f64() as usize;
        let y0 = fy.floor().as_f64() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (ax, ay) = (fx - fx.floor(), fy - fy.floor());
        let at = |x: usize, y: usize| self.values[y * self.width + x];
        let top = at(x0, y0) * (T::one() - ax) + at(x1, y0) * ax;
        let bottom = at(x0, y1) * (T::one() - ax) + at(x1, y1) * ax;
        top * (T::one() - ay) + bottom * ay
    }
}

/// How a body's base temperature is determined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub enum ThermalMode<T: Real> {
    #[default]
    AirTemperature,
    Constant(T),
    TemperatureMap(TemperatureMap<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct Material<T: Real> {
    pub albedo: T,
    pub roughness: T,
    pub acoustic_reflectivity: T,
    #[serde(default)]
    pub thermal_mode: ThermalMode<T>,
    pub class_id: u32,
}

impl<T: Real> Default for Material<T> {
    fn default() -> Self {
        Self {
            albedo: T::lit(0.5),
            roughness: T::lit(0.5),
            acoustic_reflectivity: T::lit(0.5),
            thermal_mode: ThermalMode::AirTemperature,
            class_id: 0,
        }
    }
}

impl<T: Real> Material<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: T, name: &str| {
            if v >= T::zero() && v <= T::one() {
                Ok(())
            } else {
                Err(config(format!("material {name} {v} outside [0, 1]")))
            }
        };
        unit(self.albedo, "albedo")?;
        unit(self.roughness, "roughness")?;
        unit(self.acoustic_reflectivity, "acoustic_reflectivity")?;
        if let ThermalMode::TemperatureMap(m) = &self.thermal_mode {
            m.validate()?;
        }
        Ok(())
    }
}

/// A posed mesh in the world. Instance ids start at 1; 0 means background.
#[derive(Debug, Clone)]
pub struct Instance<T: Real> {
    pub id: u32,
    pub mesh: Arc<TriangleMesh<T>>,
    pub material: Arc<Material<T>>,
    pub pose: Pose<T>,
}

struct WorldTriangle<T: Real> {
    vertices: [Vec3<T>; 3],
    instance: usize,
    local: usize,
}

/// Immutable snapshot of posed instances with an acceleration structure.
pub struct Scene<T: Real> {
    instances: Vec<Instance<T>>,
    tris: Vec<WorldTriangle<T>>,
    bvh: Bvh<T>,
}

/// Nearest intersection along a ray.
#[derive(Debug, Clone, Copy)]
pub struct Hit<'a, T: Real> {
    pub instance_id: u32,
    pub range: T,
    pub point: Vec3<T>,
    /// Interpolated unit surface normal in the world frame.
    pub normal: Vec3<T>,
    pub material: &'a Material<T>,
    pub instance: &'a Instance<T>,
    /// Mesh-local triangle index.
    pub triangle: usize,
    /// Barycentric weights of the second and third triangle corners.
    pub barycentric: (T, T),
}

impl<T: Real> Hit<'_, T> {
    /// Interpolated temperature-map UV, when the material has one.
    pub fn uv(&self) -> Option<Vec2<T>> {
        let ThermalMode::TemperatureMap(map) = &self.material.thermal_mode else {
            return None;
        };
        let tri = self.instance.mesh.triangles()[self.triangle];
        let (u, v) = self.barycentric;
        let [a, b, c] = tri.map(|i| map.uv[i as usize]);
        Some(a * (T::one() - u - v) + b * u + c * v)
    }
}

/// Möller–Trumbore intersection. Returns `(t, u, v)` for any `t`; callers filter the range.
pub(crate) fn intersect_triangle<T: Real>(origin: &Vec3<T>, dir: &Vec3<T>, v: &[Vec3<T>; 3]) -> Option<(T, T, T)> {
    let e1 = v[1] - v[0];
    let e2 = v[2] - v[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det == T::zero() || !det.finite() {
        return None;
    }
    let inv = T::one() / det;
    let s = origin - v[0];
    let u = s.dot(&p) * inv;
    if u < T::zero() || u > T::one() {
        return None;
    }
    let q = s.cross(&e1);
    let w = dir.dot(&q) * inv;
    if w < T::zero() || u + w > T::one() {
        return None;
    }
    Some((e2.dot(&q) * inv, u, w))
}

impl<T: Real> Scene<T> {
    pub fn new(instances: Vec<Instance<T>>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for inst in &instances {
            if inst.id == 0 {
                return Err(config("instance id 0 is reserved for background"));
            }
            if !seen.insert(inst.id) {
                return Err(config(format!("duplicate instance id {}", inst.id)));
            }
            inst.pose.validate()?;
            inst.material.validate()?;
            if let ThermalMode::TemperatureMap(m) = &inst.material.thermal_mode {
                if m.uv.len() != inst.mesh.vertices().len() {
                    return Err(config(format!(
                        "instance {}: temperature map has {} UVs for {} vertices",
                        inst.id,
                        m.uv.len(),
                        inst.mesh.vertices().len()
                    )));
                }
            }
        }
        let mut tris = Vec::new();
        for (ii, inst) in instances.iter().enumerate() {
            let verts = inst.mesh.vertices();
            for (local, tri) in inst.mesh.triangles().iter().enumerate() {
                tris.push(WorldTriangle {
                    vertices: tri.map(|i| inst.pose.transform_point(&verts[i as usize])),
                    instance: ii,
                    local,
                });
            }
        }
        let corners: Vec<_> = tris.iter().map(|t| t.vertices).collect();
        let bvh = Bvh::build(&corners);
        Ok(Self { instances, tris, bvh })
    }

    pub fn empty() -> Self {
        Self { instances: Vec::new(), tris: Vec::new(), bvh: Bvh::build(&[]) }
    }

    pub fn instances(&self) -> &[Instance<T>] {
        &self.instances
    }

    pub fn instance(&self, id: u32) -> Option<&Instance<T>> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// World-space triangles with their owning instance id, in internal order.
    pub fn world_triangles(&self) -> impl Iterator<Item = ([Vec3<T>; 3], u32)> + '_ {
        self.tris.iter().map(|t| (t.vertices, self.instances[t.instance].id))
    }

    /// Nearest hit along a unit-direction ray.
    pub fn raycast(&self, origin: &Vec3<T>, direction: &Vec3<T>) -> Result<Option<Hit<'_, T>>> {
        self.check_direction(direction)?;
        Ok(self.cast(origin, direction, T::zero(), T::INFINITY, &[]))
    }

    fn check_direction(&self, direction: &Vec3<T>) -> Result<()> {
        let tol = if std::mem::size_of::<T>() < 8 { 1e-6 } else { 1e-9 };
        if !is_unit(direction, tol) {
            return Err(contract(format!("ray direction norm {} is not 1", direction.norm())));
        }
        Ok(())
    }

    /// Nearest hit with `t_min < range < t_max`, skipping the listed instances.
    pub(crate) fn cast(&self, origin: &Vec3<T>, dir: &Vec3<T>, t_min: T, t_max: T, skip: &[u32]) -> Option<Hit<'_, T>> {
        let (ti, t) = self.bvh.closest(origin, dir, t_min, t_max, |i| {
            let tri = &self.tris[i];
            if !skip.is_empty() && skip.contains(&self.instances[tri.instance].id) {
                return None;
            }
            intersect_triangle(origin, dir, &tri.vertices).map(|h| h.0)
        })?;
        let tri = &self.tris[ti];
        let (_, u, v) = intersect_triangle(origin, dir, &tri.vertices)?;
        let inst = &self.instances[tri.instance];
        let idx = inst.mesh.triangles()[tri.local];
        let [n0, n1, n2] = idx.map(|i| inst.mesh.normals()[i as usize]);
        let local_n = n0 * (T::one() - u - v) + n1 * u + n2 * v;
        let mut normal = inst.pose.transform_vector(&local_n);
        let len = normal.norm();
        if len > T::default_epsilon() {
            normal /= len;
        } else {
            let [a, b, c] = tri.vertices;
            normal = (b - a).cross(&(c - a)).normalize();
        }
        Some(Hit {
            instance_id: inst.id,
            range: t,
            point: origin + dir * t,
            normal,
            material: &inst.material,
            instance: inst,
            triangle: tri.local,
            barycentric: (u, v),
        })
    }

    /// True when geometry blocks the open segment between `from` and `to`.
    ///
    /// Both ends are pulled in by [`SECONDARY_RAY_EPSILON`].
    pub fn segment_blocked(&self, from: &Vec3<T>, to: &Vec3<T>, skip: &[u32]) -> bool {
        let d = to - from;
        let len = d.norm();
        let eps = T::lit(SECONDARY_RAY_EPSILON);
        if len <= eps + eps {
            return false;
        }
        let dir = d / len;
        self.cast(from, &dir, eps, len - eps, skip).is_some()
    }

    /// True when nothing lies along the ray from `from` towards `dir` (unit).
    pub fn ray_clear(&self, from: &Vec3<T>, dir: &Vec3<T>) -> bool {
        self.cast(from, dir, T::lit(SECONDARY_RAY_EPSILON), T::INFINITY, &[]).is_none()
    }
}
