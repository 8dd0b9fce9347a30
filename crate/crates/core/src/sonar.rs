//! Forward-looking multibeam sonar.
//!
//! Sonar frame matches the camera frame: +Z forward, +X right, +Y down.
//! Beams fan across azimuth (rotation about Y), vertical rays across elevation.

use noise::{NoiseFn, Perlin};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::num::{Real, Vec3};
use crate::rng::NoiseStream;
use crate::scene::{Hit, Pose, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct SonarConfig<T: Real> {
    pub num_beams: usize,
    /// Radians.
    pub horizontal_fov: T,
    /// Radians.
    pub vertical_fov: T,
    pub vertical_rays_per_beam: usize,
    pub range_min: T,
    pub range_max: T,
    pub num_bins: usize,
    pub gain: T,
    pub noise_stddev: T,
    pub noise_seed: u64,
    pub perlin_scale: T,
    /// Multiplicative Perlin amplitude; falls back to `noise_stddev` when unset.
    #[serde(default)]
    pub perlin_amplitude: Option<T>,
    pub beam_pattern_noise_amplitude: T,
    pub hold_factor: T,
    pub ghosting_factor: T,
}

impl<T: Real> SonarConfig<T> {
    /// Parameterization tuned to resemble a Tritech Gemini 1200ik.
    pub fn gemini_1200ik() -> Self {
        Self {
            num_beams: 512,
            horizontal_fov: T::lit(120f64.to_radians()),
            vertical_fov: T::lit(20f64.to_radians()),
            vertical_rays_per_beam: 16,
            range_min: T::lit(0.5),
            range_max: T::lit(50.0),
            num_bins: 1000,
            gain: T::lit(1.5),
            noise_stddev: T::lit(0.05),
            noise_seed: 0,
            perlin_scale: T::lit(0.05),
            perlin_amplitude: None,
            beam_pattern_noise_amplitude: T::lit(0.1),
            hold_factor: T::lit(0.6),
            ghosting_factor: T::lit(0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_beams < 1 || self.num_bins < 1 || self.vertical_rays_per_beam < 1 {
            return Err(config("sonar needs at least one beam, bin and vertical ray"));
        }
        if !(self.range_min >= T::zero() && self.range_min < self.range_max) {
            return Err(config("sonar range must satisfy 0 <= range_min < range_max"));
        }
        if !(self.horizontal_fov > T::zero() && self.vertical_fov >= T::zero()) {
            return Err(config("sonar fields of view must be positive"));
        }
        if !(self.gain > T::zero()) {
            return Err(config("sonar gain must be > 0"));
        }
        if !(self.noise_stddev >= T::zero() && self.beam_pattern_noise_amplitude >= T::zero()) {
            return Err(config("sonar noise parameters must be >= 0"));
        }
        if !(self.perlin_scale > T::zero()) {
            return Err(config("sonar perlin_scale must be > 0"));
        }
        if self.perlin_amplitude.is_some_and(|a| !(a >= T::zero())) {
            return Err(config("sonar perlin_amplitude must be >= 0"));
        }
        if !(self.hold_factor >= T::zero() && self.hold_factor <= T::one()) {
            return Err(config("sonar hold_factor must be in [0, 1]"));
        }
        if !(self.ghosting_factor >= T::zero() && self.ghosting_factor < T::one()) {
            return Err(config("sonar ghosting_factor must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn range_step(&self) -> T {
        (self.range_max - self.range_min) / T::lit(self.num_bins as f64)
    }

    fn perlin_amplitude(&self) -> T {
        self.perlin_amplitude.unwrap_or(self.noise_stddev)
    }

    /// Azimuth of a beam center (rad, positive towards +X).
    pub fn beam_azimuth(&self, beam: usize) -> T {
        fan_angle(self.horizontal_fov, beam, self.num_beams)
    }

    /// Elevation of a vertical ray (rad, positive upwards).
    pub fn ray_elevation(&self, ray: usize) -> T {
        fan_angle(self.vertical_fov, ray, self.vertical_rays_per_beam)
    }
}

/// Center of slot `i` when `fov` is split into `n` equal slots around zero.
fn fan_angle<T: Real>(fov: T, i: usize, n: usize) -> T {
    -fov / T::lit(2.0) + fov * (T::lit(i as f64) + T::lit(0.5)) / T::lit(n as f64)
}

/// Sonar-frame unit direction for a given azimuth and elevation.
pub fn fan_direction<T: Real>(azimuth: T, elevation: T) -> Vec3<T> {
    let ce = elevation.cos();
    Vec3::new(ce * azimuth.sin(), -elevation.sin(), ce * azimuth.cos())
}

/// Sample range fell outside `[range_min, range_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutOfRange;

/// Histogram bin for a range: `floor((range - range_min) / range_step)`.
pub fn bin_index<T: Real>(range: T, cfg: &SonarConfig<T>) -> Result<usize, OutOfRange> {
    if !range.finite() || range < cfg.range_min || range >= cfg.range_max {
        return Err(OutOfRange);
    }
    // multiply before dividing so exact bin edges do not round down
    let x = (range - cfg.range_min) * T::lit(cfg.num_bins as f64) / (cfg.range_max - cfg.range_min);
    let bin = x.floor().as_f64() as usize;
    if bin < cfg.num_bins {
        Ok(bin)
    } else {
        Err(OutOfRange)
    }
}

/// Echo strength of one ray: reflectivity × max(0, cos incidence) / range².
pub fn raw_return<T: Real>(hit: &Hit<'_, T>, ray_direction: &Vec3<T>) -> T {
    echo_strength(hit.material.acoustic_reflectivity, -ray_direction.dot(&hit.normal), hit.range)
}

pub fn echo_strength<T: Real>(reflectivity: T, cos_incidence: T, range: T) -> T {
    reflectivity * cos_incidence.max(T::zero()) / (range * range)
}

/// Beam × bin intensity grid, row-major by beam (`beam * num_bins + bin`).
#[derive(Debug, Clone, PartialEq)]
pub struct SonarImage<T: Real> {
    pub num_beams: usize,
    pub num_bins: usize,
    pub intensities: Vec<T>,
    pub timestamp: T,
}

impl<T: Real> SonarImage<T> {
    pub fn filled(num_beams: usize, num_bins: usize, value: T, timestamp: T) -> Self {
        Self { num_beams, num_bins, intensities: vec![value; num_beams * num_bins], timestamp }
    }

    #[inline]
    pub fn at(&self, beam: usize, bin: usize) -> T {
        self.intensities[beam * self.num_bins + bin]
    }

    pub fn max_intensity(&self) -> T {
        self.intensities.iter().copied().fold(T::zero(), |a, b| a.max(b))
    }

    /// 8-bit image with beams as columns and bin 0 on the bottom row.
    pub fn to_gray8(&self) -> Vec<u8> {
        let (w, h) = (self.num_beams, self.num_bins);
        let mut px = vec![0u8; w * h];
        for beam in 0..w {
            for bin in 0..h {
                px[(h - 1 - bin) * w + beam] = crate::io::to_u8(self.at(beam, bin), T::one());
            }
        }
        px
    }

    /// Raw float grid with width = beams and height = bins, row `r` holding bin `r`.
    pub fn to_raw_grid(&self) -> Vec<u8> {
        let (w, h) = (self.num_beams, self.num_bins);
        let mut grid = vec![T::zero(); w * h];
        for beam in 0..w {
            for bin in 0..h {
                grid[bin * w + beam] = self.at(beam, bin);
            }
        }
        crate::io::encode_raw_grid(w, h, &grid)
    }

    /// Fan-shaped display image (nearest-neighbor polar lookup), apex at the bottom center.
    pub fn to_fan_gray8(&self, cfg: &SonarConfig<T>, height_px: usize) -> (usize, usize, Vec<u8>) {
        let half = (cfg.horizontal_fov / T::lit(2.0)).as_f64();
        let width_px = ((2.0 * height_px as f64 * half.sin().abs().min(1.0)).ceil() as usize).max(1);
        let (rmin, rmax) = (cfg.range_min.as_f64(), cfg.range_max.as_f64());
        let mut px = vec![0u8; width_px * height_px];
        let scale = rmax / height_px as f64;
        for row in 0..height_px {
            for col in 0..width_px {
                let x = (col as f64 + 0.5 - width_px as f64 / 2.0) * scale;
                let y = (height_px as f64 - row as f64 - 0.5) * scale;
                let r = x.hypot(y);
                let az = x.atan2(y);
                if r < rmin || r >= rmax || az.abs() > half {
                    continue;
                }
                let fov = cfg.horizontal_fov.as_f64();
                let beam = (((az + half) / fov) * cfg.num_beams as f64).floor() as usize;
                let bin = (((r - rmin) / (rmax - rmin)) * cfg.num_bins as f64).floor() as usize;
                if beam < self.num_beams && bin < self.num_bins {
                    px[row * width_px + col] = crate::io::to_u8(self.at(beam, bin), T::one());
                }
            }
        }
        (width_px, height_px, px)
    }
}

const KEY_BEAM_PATTERN: u64 = 0xB3A1;
const KEY_SPECKLE: u64 = 0x5EC1;

/// Per-beam gain deviation `p(beam)` in `[-1, 1]`, fixed by the noise seed.
pub fn beam_pattern<T: Real>(cfg: &SonarConfig<T>, beam: usize) -> T {
    T::lit(NoiseStream::new(cfg.noise_seed).symmetric(&[KEY_BEAM_PATTERN, beam as u64]))
}

/// Accumulated `raw_return` histogram (steps 1–2 of the scan), one row per beam.
pub fn echo_histogram<T: Real>(scene: &Scene<T>, sonar_pose: &Pose<T>, cfg: &SonarConfig<T>) -> Vec<T> {
    let rows: Vec<Vec<T>> = (0..cfg.num_beams)
        .into_par_iter()
        .map(|beam| {
            let mut row = vec![T::zero(); cfg.num_bins];
            let az = cfg.beam_azimuth(beam);
            for ray in 0..cfg.vertical_rays_per_beam {
                let local = fan_direction(az, cfg.ray_elevation(ray));
                let dir = sonar_pose.transform_vector(&local);
                let Some(hit) = scene.cast(&sonar_pose.position, &dir, T::zero(), T::INFINITY, &[]) else {
                    continue;
                };
                if let Ok(bin) = bin_index(hit.range, cfg) {
                    row[bin] += raw_return(&hit, &dir);
                }
            }
            row
        })
        .collect();
    rows.concat()
}

/// Synthesizes one sonar frame.
///
/// Stages: histogram of echo returns, gain, per-beam pattern, Perlin
/// modulation plus Gaussian speckle, temporal blend with the decayed previous
/// frame, and a final clamp to `[0, 1]`.
pub fn sonar_scan<T: Real>(
    scene: &Scene<T>,
    sonar_pose: &Pose<T>,
    cfg: &SonarConfig<T>,
    prev: Option<&SonarImage<T>>,
    frame_index: u64,
    timestamp: T,
) -> Result<SonarImage<T>> {
    cfg.validate()?;
    if let Some(p) = prev {
        if p.num_beams != cfg.num_beams || p.num_bins != cfg.num_bins {
            return Err(config("previous sonar frame has different dimensions"));
        }
    }
    let mut grid = echo_histogram(scene, sonar_pose, cfg);

    let stream = NoiseStream::new(cfg.noise_seed);
    let perlin_amp = cfg.perlin_amplitude();
    let perlin = Perlin::new(crate::rng::mix(cfg.noise_seed, &[frame_index]) as u32);
    let scale = cfg.perlin_scale.as_f64();
    let z = frame_index as f64 + 0.5;
    let decay = cfg.hold_factor * cfg.ghosting_factor;

    grid.par_chunks_mut(cfg.num_bins).enumerate().for_each(|(beam, row)| {
        let pattern = T::one() + cfg.beam_pattern_noise_amplitude * beam_pattern(cfg, beam);
        for (bin, cell) in row.iter_mut().enumerate() {
            let mut v = *cell * cfg.gain * pattern;
            if perlin_amp > T::zero() {
                let n = perlin
                    .get([(beam as f64 + 0.5) * scale, (bin as f64 + 0.5) * scale, z])
                    .clamp(-1.0, 1.0);
                v *= T::one() + perlin_amp * T::lit(n);
            }
            if cfg.noise_stddev > T::zero() {
                let g = stream.normal(&[KEY_SPECKLE, frame_index, beam as u64, bin as u64]);
                v += cfg.noise_stddev * T::lit(g);
            }
            if let Some(p) = prev {
                v = v.max(decay * p.at(beam, bin)).clamp(T::zero(), T::one());
            }
            *cell = v.clamp(T::zero(), T::one());
        }
    });

    Ok(SonarImage { num_beams: cfg.num_beams, num_bins: cfg.num_bins, intensities: grid, timestamp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Instance, Material, TriangleMesh};
    use std::sync::Arc;

    fn quiet_cfg() -> SonarConfig<f64> {
        SonarConfig {
            num_beams: 8,
            horizontal_fov: 0.4,
            vertical_fov: 0.1,
            vertical_rays_per_beam: 1,
            range_min: 1.0,
            range_max: 11.0,
            num_bins: 100,
            gain: 1.0,
            noise_stddev: 0.0,
            noise_seed: 1,
            perlin_scale: 0.1,
            perlin_amplitude: None,
            beam_pattern_noise_amplitude: 0.0,
            hold_factor: 1.0,
            ghosting_factor: 0.5,
        }
    }

    #[test]
    fn bin_index_edges() {
        let cfg = quiet_cfg();
        assert_eq!(bin_index(1.0, &cfg), Ok(0));
        assert_eq!(bin_index(11.0, &cfg), Err(OutOfRange));
        assert_eq!(bin_index(0.99, &cfg), Err(OutOfRange));
        assert_eq!(bin_index(2.5, &cfg), Ok(15));
        assert_eq!(bin_index(f64::NAN, &cfg), Err(OutOfRange));
        assert_eq!(bin_index(10.999_999, &cfg), Ok(99));
    }

    #[test]
    fn echo_strength_cases() {
        assert_eq!(echo_strength(1.0, 1.0, 1.0), 1.0);
        assert_eq!(echo_strength(1.0, 1.0, 2.0), 0.25);
        assert!((echo_strength(0.5, 60f64.to_radians().cos(), 1.0) - 0.25).abs() < 1e-15);
        assert_eq!(echo_strength(1.0, -0.5, 1.0), 0.0);
    }

    #[test]
    fn raw_return_from_hit() {
        let mesh = Arc::new(TriangleMesh::quad(10.0, 10.0).unwrap());
        let mat = Material { acoustic_reflectivity: 1.0, ..Material::default() };
        let scene = Scene::new(vec![Instance {
            id: 1,
            mesh,
            material: Arc::new(mat),
            pose: Pose::from_position(Vec3::new(0.0, 0.0, 2.0)),
        }])
        .unwrap();
        // quad normal is +Z; a ray along -Z sees it head-on
        let o: Vec3<f64> = Vec3::new(0.0, 0.0, 4.0);
        let d = -Vec3::z();
        let hit = scene.raycast(&o, &d).unwrap().unwrap();
        assert!((raw_return(&hit, &d) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn empty_scene_is_dark() {
        let img = sonar_scan(&Scene::empty(), &Pose::identity(), &quiet_cfg(), None, 0, 0.0).unwrap();
        assert!(img.intensities.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ghost_from_previous_frame() {
        let cfg = quiet_cfg();
        let prev = SonarImage::filled(cfg.num_beams, cfg.num_bins, 1.0, 0.0);
        let img = sonar_scan(&Scene::empty(), &Pose::identity(), &cfg, Some(&prev), 1, 0.1).unwrap();
        assert!(img.intensities.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn noise_is_deterministic_and_bounded() {
        let cfg = SonarConfig { noise_stddev: 0.3, beam_pattern_noise_amplitude: 0.5, ..quiet_cfg() };
        let a = sonar_scan(&Scene::empty(), &Pose::identity(), &cfg, None, 3, 0.0).unwrap();
        let b = sonar_scan(&Scene::empty(), &Pose::identity(), &cfg, None, 3, 0.0).unwrap();
        let c = sonar_scan(&Scene::empty(), &Pose::identity(), &cfg, None, 4, 0.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.intensities.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(a.max_intensity() > 0.0);
    }

    #[test]
    fn beam_pattern_is_seeded() {
        let cfg = quiet_cfg();
        let other = SonarConfig { noise_seed: 2, ..quiet_cfg() };
        let p: Vec<f64> = (0..8).map(|b| beam_pattern(&cfg, b)).collect();
        assert!(p.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_ne!(p[0], beam_pattern(&other, 0));
    }

    #[test]
    fn invalid_configs() {
        assert!(SonarConfig { num_beams: 0, ..quiet_cfg() }.validate().is_err());
        assert!(SonarConfig { range_min: 12.0, ..quiet_cfg() }.validate().is_err());
        assert!(SonarConfig { ghosting_factor: 1.0, ..quiet_cfg() }.validate().is_err());
        assert!(SonarConfig::<f64>::gemini_1200ik().validate().is_ok());
    }

    #[test]
    fn display_orientation() {
        let mut img = SonarImage::filled(2, 3, 0.0, 0.0);
        img.intensities[0] = 1.0; // beam 0, bin 0
        let px = img.to_gray8();
        assert_eq!(px[2 * 2], 255); // bottom-left
        assert_eq!(px.iter().filter(|&&p| p > 0).count(), 1);
    }
}
