//! Pinhole cameras and per-pixel render buffers.
//!
//! Camera frame: +Z along the optical axis, +X right, +Y down. Pixel
//! `(u, v)` has its center at image coordinates `(u, v)`, so the ray through
//! it has camera-frame direction `((u - cx)/f, (v - cy)/f, 1)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Pose, Scene};
use crate::error::{config, Result};
use crate::num::{is_unit, Real, Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct CameraIntrinsics<T: Real> {
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels.
    pub focal_length: T,
    pub principal_point: Vec2<T>,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(width: usize, height: usize, focal_length: T, principal_point: Vec2<T>) -> Result<Self> {
        let c = Self { width, height, focal_length, principal_point };
        c.validate()?;
        Ok(c)
    }

    /// Intrinsics with the principal point at the image center.
    pub fn centered(width: usize, height: usize, focal_length: T) -> Result<Self> {
        let half = |n: usize| T::lit((n as f64 - 1.0) / 2.0);
        Self::new(width, height, focal_length, Vec2::new(half(width), half(height)))
    }

    /// Intrinsics from a horizontal field of view (rad).
    pub fn from_fov(width: usize, height: usize, horizontal_fov: T) -> Result<Self> {
        if !(horizontal_fov > T::zero() && horizontal_fov < T::pi()) {
            return Err(config("horizontal field of view must be in (0, pi)"));
        }
        let f = T::lit(width as f64 / 2.0) / (horizontal_fov / T::lit(2.0)).tan();
        Self::centered(width, height, f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 1 || self.height < 1 {
            return Err(config("camera width and height must be >= 1"));
        }
        if !(self.focal_length > T::zero()) || !self.focal_length.finite() {
            return Err(config("camera focal length must be > 0"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Unnormalized camera-frame direction through a pixel center (z = 1).
    pub fn pixel_direction(&self, u: usize, v: usize) -> Vec3<T> {
        Vec3::new(
            (T::lit(u as f64) - self.principal_point.x) / self.focal_length,
            (T::lit(v as f64) - self.principal_point.y) / self.focal_length,
            T::one(),
        )
    }

    /// Image coordinates of a camera-frame point with positive depth.
    pub fn project(&self, p: &Vec3<T>) -> Vec2<T> {
        Vec2::new(
            self.focal_length * p.x / p.z + self.principal_point.x,
            self.focal_length * p.y / p.z + self.principal_point.y,
        )
    }
}

/// Simple Lambertian lighting used for the luminance plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct LightingEnvironment<T: Real> {
    /// Unit vector pointing from the scene towards the sun.
    pub sun_direction: Vec3<T>,
    /// Ambient term in `[0, 1]`.
    pub ambient: T,
    /// Luminance reported for pixels without a hit.
    #[serde(default)]
    pub background: T,
}

impl<T: Real> Default for LightingEnvironment<T> {
    fn default() -> Self {
        Self {
            sun_direction: Vec3::z(),
            ambient: T::lit(0.2),
            background: T::zero(),
        }
    }
}

impl<T: Real> LightingEnvironment<T> {
    pub fn validate(&self) -> Result<()> {
        if !is_unit(&self.sun_direction, 1e-6) {
            return Err(config("sun direction must be a unit vector"));
        }
        if !(self.ambient >= T::zero() && self.ambient <= T::one()) {
            return Err(config("ambient must be in [0, 1]"));
        }
        if !(self.background >= T::zero()) {
            return Err(config("background luminance must be >= 0"));
        }
        Ok(())
    }
}

/// Per-pixel planes produced by one ray per pixel. Row-major, index `v * width + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderBuffers<T: Real> {
    pub width: usize,
    pub height: usize,
    /// Distance along the optical axis; `+inf` where nothing was hit.
    pub depth: Vec<T>,
    /// Distance along the pixel ray; `+inf` where nothing was hit.
    pub range: Vec<T>,
    /// World-frame unit normals (zero where nothing was hit).
    pub normal: Vec<Vec3<T>>,
    pub instance_id: Vec<u32>,
    pub class_id: Vec<u32>,
    pub luminance: Vec<T>,
}

impl<T: Real> RenderBuffers<T> {
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            depth: vec![T::INFINITY; n],
            range: vec![T::INFINITY; n],
            normal: vec![Vec3::zeros(); n],
            instance_id: vec![0; n],
            class_id: vec![0; n],
            luminance: vec![T::zero(); n],
        }
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    /// Checks the buffer invariants: shared dimensions, depth/instance agreement
    /// and non-negative luminance.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.width * self.height;
        if [
            self.depth.len(),
            self.range.len(),
            self.normal.len(),
            self.instance_id.len(),
            self.class_id.len(),
            self.luminance.len(),
        ]
        .iter()
        .any(|&l| l != n)
        {
            return Err(config("render buffer planes differ in size"));
        }
        for i in 0..n {
            if self.depth[i].finite() != (self.instance_id[i] > 0) {
                return Err(config(format!("pixel {i}: finite depth disagrees with instance id")));
            }
            if !(self.luminance[i] >= T::zero()) {
                return Err(config(format!("pixel {i}: negative luminance")));
            }
        }
        Ok(())
    }
}

struct PixelSample<T: Real> {
    depth: T,
    range: T,
    normal: Vec3<T>,
    instance_id: u32,
    class_id: u32,
    luminance: T,
}

/// Casts one primary ray per pixel and fills every buffer plane.
pub fn render_buffers<T: Real>(
    scene: &Scene<T>,
    camera_pose: &Pose<T>,
    intr: &CameraIntrinsics<T>,
    lighting: &LightingEnvironment<T>,
) -> Result<RenderBuffers<T>> {
    intr.validate()?;
    camera_pose.validate()?;
    lighting.validate()?;
    let origin = camera_pose.position;
    let samples: Vec<PixelSample<T>> = (0..intr.pixel_count())
        .into_par_iter()
        .map(|i| {
            let (u, v) = (i % intr.width, i / intr.width);
            let d = intr.pixel_direction(u, v);
            let len = d.norm();
            let dir = camera_pose.transform_vector(&(d / len));
            match scene.cast(&origin, &dir, T::zero(), T::INFINITY, &[]) {
                Some(hit) => {
                    let facing = hit.normal.dot(&lighting.sun_direction).max(T::zero());
                    let direct = if facing > T::zero() && scene.ray_clear(&hit.point, &lighting.sun_direction) {
                        facing
                    } else {
                        T::zero()
                    };
                    PixelSample {
                        depth: hit.range / len,
                        range: hit.range,
                        normal: hit.normal,
                        instance_id: hit.instance_id,
                        class_id: hit.material.class_id,
                        luminance: hit.material.albedo * (lighting.ambient + direct),
                    }
                }
                None => PixelSample {
                    depth: T::INFINITY,
                    range: T::INFINITY,
                    normal: Vec3::zeros(),
                    instance_id: 0,
                    class_id: 0,
                    luminance: lighting.background,
                },
            }
        })
        .collect();

    let mut out = RenderBuffers::empty(intr.width, intr.height);
    for (i, s) in samples.into_iter().enumerate() {
        out.depth[i] = s.depth;
        out.range[i] = s.range;
        out.normal[i] = s.normal;
        out.instance_id[i] = s.instance_id;
        out.class_id[i] = s.class_id;
        out.luminance[i] = s.luminance;
    }
    Ok(out)
}
