//! Steady-state thermal camera.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::num::{is_unit, Real, Vec3};
use crate::rng::NoiseStream;
use crate::scene::{CameraIntrinsics, Material, Pose, Scene, ThermalMode};

const KELVIN: f64 = 273.15;
const SKY_COEFF: f64 = 0.0552;
const OCEAN_NORMAL_REFLECTANCE: f64 = 0.02;

/// Monotone color maps for the display image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Colormap {
    /// Black, red, yellow, white.
    #[default]
    Ironbow,
    Grayscale,
}

impl Colormap {
    /// Quantized colormap index of a normalized value in `[0, 1]`.
    pub fn index(norm: f64) -> u8 {
        (norm.clamp(0.0, 1.0) * 255.0).round() as u8
    }

    pub fn color(self, index: u8) -> [u8; 3] {
        match self {
            Colormap::Grayscale => [index; 3],
            Colormap::Ironbow => {
                // three equal segments: black→red, red→yellow, yellow→white
                let x = index as u32 * 3;
                let ramp = |seg: u32| ((x.saturating_sub(seg * 255)).min(255)) as u8;
                [ramp(0), ramp(1), ramp(2)]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct ThermalConfig<T: Real> {
    pub intrinsics: CameraIntrinsics<T>,
    /// °C
    pub temp_min: T,
    /// °C
    pub temp_max: T,
    /// °C
    pub noise_stddev: T,
    pub noise_seed: u64,
    #[serde(default)]
    pub colormap: Colormap,
}

impl<T: Real> ThermalConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if !(self.temp_min < self.temp_max) {
            return Err(config("thermal temp_min must be below temp_max"));
        }
        if !(self.noise_stddev >= T::zero()) {
            return Err(config("thermal noise_stddev must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct ThermalEnvironment<T: Real> {
    /// °C
    pub air_temperature: T,
    /// °C
    pub water_temperature: T,
    /// W/m²
    pub solar_irradiance: T,
    /// Unit vector towards the sun.
    pub sun_direction: Vec3<T>,
    /// °C of heating per unit of absorbed irradiance fraction (irradiance / 1000 W/m²).
    pub solar_absorption_gain: T,
    /// Same as `solar_absorption_gain`, for the ocean surface.
    pub solar_absorption_gain_water: T,
    /// Height of the ocean surface plane (world z), if one is rendered.
    #[serde(default)]
    pub ocean_surface_z: Option<T>,
}

impl<T: Real> Default for ThermalEnvironment<T> {
    fn default() -> Self {
        Self {
            air_temperature: T::lit(20.0),
            water_temperature: T::lit(15.0),
            solar_irradiance: T::lit(800.0),
            sun_direction: Vec3::z(),
            solar_absorption_gain: T::lit(15.0),
            solar_absorption_gain_water: T::lit(2.0),
            ocean_surface_z: None,
        }
    }
}

impl<T: Real> ThermalEnvironment<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.solar_irradiance >= T::zero()) {
            return Err(config("solar irradiance must be >= 0"));
        }
        if !is_unit(&self.sun_direction, 1e-9) {
            return Err(config("sun direction must be a unit vector"));
        }
        if !(self.air_temperature > T::lit(-KELVIN)) {
            return Err(config("air temperature must be above absolute zero"));
        }
        Ok(())
    }
}

/// Base temperature plus absorbed solar heating.
///
/// `uv` is only consulted for temperature-mapped materials; without it the
/// map is sampled at its origin.
pub fn surface_temperature<T: Real>(
    material: &Material<T>,
    normal: &Vec3<T>,
    sun_visible: bool,
    env: &ThermalEnvironment<T>,
    uv: Option<crate::num::Vec2<T>>,
) -> T {
    let base = match &material.thermal_mode {
        ThermalMode::AirTemperature => env.air_temperature,
        ThermalMode::Constant(t) => *t,
        ThermalMode::TemperatureMap(map) => map.sample(&uv.unwrap_or_else(crate::num::Vec2::zeros)),
    };
    if !sun_visible {
        return base;
    }
    let facing = normal.dot(&env.sun_direction).max(T::zero());
    base + env.solar_absorption_gain
        * (T::one() - material.albedo)
        * (T::one() - T::lit(0.5) * material.roughness)
        * (env.solar_irradiance / T::lit(1000.0))
        * facing
}

/// Clear-sky temperature: `T_sky[K] = 0.0552 · T_air[K]^1.5`, returned in °C.
pub fn sky_temperature<T: Real>(air_temperature: T) -> T {
    let kelvin = air_temperature + T::lit(KELVIN);
    T::lit(SKY_COEFF) * kelvin.powf(T::lit(1.5)) - T::lit(KELVIN)
}

/// Schlick-style reflection weight of the sea surface at incidence `theta`.
pub fn ocean_reflection_weight<T: Real>(theta: T) -> T {
    let w0 = T::lit(OCEAN_NORMAL_REFLECTANCE);
    w0 + (T::one() - w0) * (T::one() - theta.cos()).powi(5)
}

/// Blend of sun-warmed water and reflected sky.
pub fn ocean_surface_temperature<T: Real>(env: &ThermalEnvironment<T>, view_incidence: T) -> T {
    let theta = view_incidence.clamp(T::zero(), T::frac_pi_2());
    let w = ocean_reflection_weight(theta);
    let water = env.water_temperature + env.solar_absorption_gain_water * env.solar_irradiance / T::lit(1000.0);
    (T::one() - w) * water + w * sky_temperature(env.air_temperature)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalImage<T: Real> {
    pub width: usize,
    pub height: usize,
    /// Clamped noisy readings in °C, row-major.
    pub temperatures: Vec<T>,
    pub display: Vec<[u8; 3]>,
}

const KEY_THERMAL: u64 = 0x7E;

/// Renders temperature readings and the color-mapped display image.
pub fn render_thermal<T: Real>(
    scene: &Scene<T>,
    camera_pose: &Pose<T>,
    cfg: &ThermalConfig<T>,
    env: &ThermalEnvironment<T>,
    frame_index: u64,
) -> Result<ThermalImage<T>> {
    cfg.validate()?;
    env.validate()?;
    camera_pose.validate()?;
    let intr = &cfg.intrinsics;
    let origin = camera_pose.position;
    let stream = NoiseStream::new(cfg.noise_seed);
    let sky = sky_temperature(env.air_temperature);
    let span = cfg.temp_max - cfg.temp_min;

    let temperatures: Vec<T> = (0..intr.pixel_count())
        .into_par_iter()
        .map(|i| {
            let d = intr.pixel_direction(i % intr.width, i / intr.width);
            let dir = camera_pose.transform_vector(&d.normalize());
            let body = scene.cast(&origin, &dir, T::zero(), T::INFINITY, &[]);
            let ocean_t = env.ocean_surface_z.and_then(|z| {
                let t = (z - origin.z) / dir.z;
                (dir.z != T::zero() && t > T::zero()).then_some(t)
            });
            let body = body.filter(|hit| ocean_t.is_none_or(|ot| hit.range <= ot));
            let clean = match (body, ocean_t) {
                (Some(hit), _) => {
                    let sun_visible = hit.normal.dot(&env.sun_direction) > T::zero()
                        && scene.ray_clear(&hit.point, &env.sun_direction);
                    surface_temperature(hit.material, &hit.normal, sun_visible, env, hit.uv())
                }
                (_, Some(_)) => ocean_surface_temperature(env, dir.z.abs().min(T::one()).acos()),
                (None, None) => sky,
            };
            let noisy = if cfg.noise_stddev > T::zero() {
                clean + cfg.noise_stddev * T::lit(stream.normal(&[KEY_THERMAL, frame_index, i as u64]))
            } else {
                clean
            };
            noisy.clamp(cfg.temp_min, cfg.temp_max)
        })
        .collect();

    let display = temperatures
        .iter()
        .map(|&t| cfg.colormap.color(Colormap::index(((t - cfg.temp_min) / span).as_f64())))
        .collect();
    Ok(ThermalImage { width: intr.width, height: intr.height, temperatures, display })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Instance, TriangleMesh};
    use std::sync::Arc;

    fn env() -> ThermalEnvironment<f64> {
        ThermalEnvironment {
            air_temperature: 20.0,
            water_temperature: 15.0,
            solar_irradiance: 1000.0,
            sun_direction: Vec3::z(),
            solar_absorption_gain: 15.0,
            solar_absorption_gain_water: 2.0,
            ocean_surface_z: None,
        }
    }

    fn mat(albedo: f64, roughness: f64, mode: ThermalMode<f64>) -> Material<f64> {
        Material { albedo, roughness, acoustic_reflectivity: 0.5, thermal_mode: mode, class_id: 1 }
    }

    #[test]
    fn surface_temperature_cases() {
        let n = Vec3::z();
        let e = env();
        assert_eq!(surface_temperature(&mat(0.3, 0.3, ThermalMode::Constant(20.0)), &n, false, &e, None), 20.0);
        assert_eq!(surface_temperature(&mat(1.0, 0.0, ThermalMode::Constant(20.0)), &n, true, &e, None), 20.0);
        let hot = surface_temperature(&mat(0.0, 0.0, ThermalMode::Constant(20.0)), &n, true, &e, None);
        assert!((hot - 35.0).abs() < 1e-12);
        assert_eq!(surface_temperature(&mat(0.0, 0.0, ThermalMode::AirTemperature), &n, false, &e, None), 20.0);
        // roughness halves absorption at 1
        let rough = surface_temperature(&mat(0.0, 1.0, ThermalMode::Constant(20.0)), &n, true, &e, None);
        assert!((rough - 27.5).abs() < 1e-12);
    }

    #[test]
    fn sky_temperature_cases() {
        assert!((sky_temperature(20.0f64) - 3.910_061_004_882_777).abs() < 1e-9);
        assert!((sky_temperature(-273.15f64) + 273.15).abs() < 1e-9);
        assert!(sky_temperature(30.0f64) > sky_temperature(20.0));
    }

    #[test]
    fn ocean_temperature_cases() {
        let mut e = env();
        e.solar_irradiance = 0.0;
        let sky = sky_temperature(20.0);
        assert!((ocean_surface_temperature(&e, 0.0) - (0.98 * 15.0 + 0.02 * sky)).abs() < 1e-12);
        assert!((ocean_surface_temperature(&e, std::f64::consts::FRAC_PI_2) - sky).abs() < 1e-12);
        e.water_temperature = sky;
        for th in [0.0, 0.4, 1.2] {
            assert!((ocean_surface_temperature(&e, th) - sky).abs() < 1e-12);
        }
    }

    #[test]
    fn colormap_endpoints_and_monotone() {
        assert_eq!(Colormap::Ironbow.color(0), [0, 0, 0]);
        assert_eq!(Colormap::Ironbow.color(255), [255, 255, 255]);
        assert_eq!(Colormap::Ironbow.color(85), [255, 0, 0]);
        let mut last = 0u32;
        for i in 0..=255u8 {
            let c = Colormap::Ironbow.color(i);
            let s = c.iter().map(|&v| v as u32).sum::<u32>();
            assert!(s >= last);
            last = s;
        }
    }

    fn wall(temp: f64) -> Scene<f64> {
        let mesh = Arc::new(TriangleMesh::quad(100.0, 100.0).unwrap());
        Scene::new(vec![Instance {
            id: 1,
            mesh,
            material: Arc::new(mat(0.5, 0.5, ThermalMode::Constant(temp))),
            pose: Pose::from_position(Vec3::new(0.0, 0.0, 5.0)),
        }])
        .unwrap()
    }

    fn cfg() -> ThermalConfig<f64> {
        ThermalConfig {
            intrinsics: CameraIntrinsics::centered(8, 6, 10.0).unwrap(),
            temp_min: 0.0,
            temp_max: 40.0,
            noise_stddev: 0.0,
            noise_seed: 0,
            colormap: Colormap::Ironbow,
        }
    }

    #[test]
    fn full_view_constant_body() {
        // the quad faces +Z, away from the sun
        let mut e = env();
        e.sun_direction = -Vec3::z();
        let img = render_thermal(&wall(20.0), &Pose::identity(), &cfg(), &e, 0).unwrap();
        assert!(img.temperatures.iter().all(|&t| t == 20.0));
        let mid = Colormap::Ironbow.color(Colormap::index(0.5));
        assert!(img.display.iter().all(|&c| c == mid));
    }

    #[test]
    fn clamps_hot_bodies() {
        let c = ThermalConfig { temp_max: 50.0, ..cfg() };
        let img = render_thermal(&wall(100.0), &Pose::identity(), &c, &env(), 0).unwrap();
        assert!(img.temperatures.iter().all(|&t| t == 50.0));
    }

    #[test]
    fn empty_view_sees_sky() {
        let img = render_thermal(&Scene::empty(), &Pose::identity(), &cfg(), &env(), 0).unwrap();
        assert!(img.temperatures.iter().all(|&t| (t - 3.910_061).abs() < 1e-5));
    }

    #[test]
    fn ocean_plane_below_camera() {
        let mut e = env();
        e.ocean_surface_z = Some(-1.0);
        e.solar_irradiance = 0.0;
        // look straight down
        let down = Pose::new(Vec3::zeros(), crate::num::Quat::from_euler_angles(std::f64::consts::PI, 0.0, 0.0));
        let c = ThermalConfig { intrinsics: CameraIntrinsics::centered(1, 1, 10.0).unwrap(), ..cfg() };
        let img = render_thermal(&Scene::empty(), &down, &c, &e, 0).unwrap();
        let expect = 0.98 * 15.0 + 0.02 * sky_temperature(20.0);
        assert!((img.temperatures[0] - expect).abs() < 1e-9);
    }

    #[test]
    fn noise_is_clamped_and_seeded() {
        let c = ThermalConfig { noise_stddev: 30.0, noise_seed: 4, ..cfg() };
        let a = render_thermal(&wall(20.0), &Pose::identity(), &c, &env(), 2).unwrap();
        let b = render_thermal(&wall(20.0), &Pose::identity(), &c, &env(), 2).unwrap();
        assert_eq!(a, b);
        assert!(a.temperatures.iter().all(|&t| (0.0..=40.0).contains(&t)));
        assert!(a.temperatures.iter().any(|&t| t != 20.0));
    }
}
