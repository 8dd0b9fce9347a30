//! Event-based camera.
//!
//! Log-luminance is interpolated linearly between rendered frames, and each
//! pixel emits an event whenever the interpolated signal crosses its
//! reference level plus (or minus) the current contrast threshold. Crossings
//! inside the refractory window are dropped without moving the reference.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Result};
use crate::num::Real;
use crate::rng::NoiseStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct EbcConfig<T: Real> {
    pub contrast_threshold_pos: T,
    pub contrast_threshold_neg: T,
    pub threshold_noise_stddev: T,
    /// Seconds.
    pub refractory_period: T,
    /// Hz.
    pub frame_rate: T,
    pub noise_seed: u64,
    pub log_eps: T,
}

impl<T: Real> Default for EbcConfig<T> {
    fn default() -> Self {
        Self {
            contrast_threshold_pos: T::lit(0.2),
            contrast_threshold_neg: T::lit(0.2),
            threshold_noise_stddev: T::lit(0.03),
            refractory_period: T::lit(1e-4),
            frame_rate: T::lit(30.0),
            noise_seed: 0,
            log_eps: T::lit(1e-3),
        }
    }
}

impl<T: Real> EbcConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast_threshold_pos > T::zero() && self.contrast_threshold_neg > T::zero()) {
            return Err(config("contrast thresholds must be > 0"));
        }
        if !(self.threshold_noise_stddev >= T::zero()) {
            return Err(config("threshold noise must be >= 0"));
        }
        if !(self.refractory_period >= T::zero()) {
            return Err(config("refractory period must be >= 0"));
        }
        if !(self.frame_rate > T::zero()) {
            return Err(config("frame rate must be > 0"));
        }
        if !(self.log_eps > T::zero()) {
            return Err(config("log_eps must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event<T: Real> {
    pub x: u16,
    pub y: u16,
    /// Seconds.
    pub t: T,
    /// +1 or -1.
    pub polarity: i8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelState<T: Real> {
    pub reference_log_l: T,
    pub last_event_time: T,
    pub threshold_pos: T,
    pub threshold_neg: T,
}

/// `ln(L + log_eps)`.
pub fn log_luminance<T: Real>(luminance: T, log_eps: T) -> Result<T> {
    if !(luminance >= T::zero()) {
        return Err(contract(format!("negative luminance {luminance}")));
    }
    Ok((luminance + log_eps).ln())
}

const KEY_INIT: u64 = 0xE1;
const KEY_EVENT: u64 = 0xE2;

fn sample_threshold<T: Real>(nominal: T, cfg: &EbcConfig<T>, keys: &[u64]) -> T {
    if cfg.threshold_noise_stddev == T::zero() {
        return nominal;
    }
    let g = T::lit(NoiseStream::new(cfg.noise_seed).normal(keys));
    (nominal + cfg.threshold_noise_stddev * g).max(T::lit(0.01) * nominal)
}

/// Fresh per-pixel state whose reference is the given log-luminance frame.
pub fn init_state<T: Real>(log_l: &[T], cfg: &EbcConfig<T>) -> Vec<PixelState<T>> {
    log_l
        .iter()
        .enumerate()
        .map(|(i, &l)| PixelState {
            reference_log_l: l,
            last_event_time: T::NEG_INFINITY,
            threshold_pos: sample_threshold(cfg.contrast_threshold_pos, cfg, &[KEY_INIT, i as u64, 1]),
            threshold_neg: sample_threshold(cfg.contrast_threshold_neg, cfg, &[KEY_INIT, i as u64, 0]),
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn pixel_events<T: Real>(
    (x, y): (u16, u16),
    pixel: u64,
    prev: T,
    cur: T,
    t0: T,
    t1: T,
    cfg: &EbcConfig<T>,
    st: &mut PixelState<T>,
    frame_index: u64,
) -> Vec<Event<T>> {
    let mut out = Vec::new();
    let delta = cur - prev;
    if delta == T::zero() {
        return out;
    }
    let rising = delta > T::zero();
    let mut at = prev;
    let mut k = 0u64;
    loop {
        let level = if rising {
            st.reference_log_l + st.threshold_pos
        } else {
            st.reference_log_l - st.threshold_neg
        };
        let crosses = if rising { at < level && level <= cur } else { at > level && level >= cur };
        if !crosses {
            break;
        }
        let t = t0 + (level - prev) / delta * (t1 - t0);
        if t - st.last_event_time <= cfg.refractory_period {
            // the signal is monotone within the interval, so this level is never re-crossed
            break;
        }
        out.push(Event { x, y, t, polarity: if rising { 1 } else { -1 } });
        st.reference_log_l = level;
        st.last_event_time = t;
        let keys = [KEY_EVENT, frame_index, pixel, k, rising as u64];
        if rising {
            st.threshold_pos = sample_threshold(cfg.contrast_threshold_pos, cfg, &keys);
        } else {
            st.threshold_neg = sample_threshold(cfg.contrast_threshold_neg, cfg, &keys);
        }
        at = level;
        k += 1;
    }
    out
}

/// Orders events by `(t, y, x, polarity)`.
pub fn event_order<T: Real>(a: &Event<T>, b: &Event<T>) -> std::cmp::Ordering {
    a.t.partial_cmp(&b.t)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.y.cmp(&b.y))
        .then(a.x.cmp(&b.x))
        .then(a.polarity.cmp(&b.polarity))
}

/// Emits all events between two log-luminance frames and updates pixel state.
#[allow(clippy::too_many_arguments)]
pub fn generate_events<T: Real>(
    width: usize,
    prev_log_l: &[T],
    cur_log_l: &[T],
    t0: T,
    t1: T,
    cfg: &EbcConfig<T>,
    state: &mut [PixelState<T>],
    frame_index: u64,
) -> Result<Vec<Event<T>>> {
    if width == 0 || !prev_log_l.len().is_multiple_of(width) {
        return Err(contract("grid length is not a multiple of width"));
    }
    if prev_log_l.len() != cur_log_l.len() || prev_log_l.len() != state.len() {
        return Err(contract("log-luminance grids and state differ in size"));
    }
    if !(t1 > t0) {
        return Err(contract("frame interval must satisfy t1 > t0"));
    }
    if width > u16::MAX as usize + 1 || prev_log_l.len() / width > u16::MAX as usize + 1 {
        return Err(contract("event camera resolution exceeds 16-bit pixel coordinates"));
    }
    let per_pixel: Vec<Vec<Event<T>>> = state
        .par_iter_mut()
        .enumerate()
        .map(|(i, st)| {
            let xy = ((i % width) as u16, (i / width) as u16);
            pixel_events(xy, i as u64, prev_log_l[i], cur_log_l[i], t0, t1, cfg, st, frame_index)
        })
        .collect();
    let mut events: Vec<Event<T>> = per_pixel.into_iter().flatten().collect();
    events.sort_unstable_by(event_order);
    Ok(events)
}

/// Stateful sensor fed one luminance frame at a time.
#[derive(Debug, Clone)]
pub struct EventCamera<T: Real> {
    cfg: EbcConfig<T>,
    width: usize,
    height: usize,
    state: Vec<PixelState<T>>,
    last: Option<(Vec<T>, T)>,
    frame_index: u64,
}

impl<T: Real> EventCamera<T> {
    pub fn new(cfg: EbcConfig<T>, width: usize, height: usize) -> Result<Self> {
        cfg.validate()?;
        if width == 0 || height == 0 {
            return Err(config("event camera needs a non-empty image"));
        }
        Ok(Self { cfg, width, height, state: Vec::new(), last: None, frame_index: 0 })
    }

    pub fn state(&self) -> &[PixelState<T>] {
        &self.state
    }

    /// Consumes a luminance frame taken at `t`. The first frame only sets references.
    pub fn process(&mut self, luminance: &[T], t: T) -> Result<Vec<Event<T>>> {
        if luminance.len() != self.width * self.height {
            return Err(contract("luminance frame size does not match the sensor"));
        }
        let log_l = luminance
            .iter()
            .map(|&l| log_luminance(l, self.cfg.log_eps))
            .collect::<Result<Vec<_>>>()?;
        let events = match self.last.take() {
            None => {
                self.state = init_state(&log_l, &self.cfg);
                Vec::new()
            }
            Some((prev, t_prev)) => {
                self.frame_index += 1;
                generate_events(self.width, &prev, &log_l, t_prev, t, &self.cfg, &mut self.state, self.frame_index)?
            }
        };
        self.last = Some((log_l, t));
        Ok(events)
    }
}

/// `t x y p` lines with nine decimals on the timestamp.
pub fn write_events_text<T: Real, W: Write>(events: &[Event<T>], mut w: W) -> std::io::Result<()> {
    for e in events {
        writeln!(w, "{:.9} {} {} {}", e.t.as_f64(), e.x, e.y, e.polarity)?;
    }
    Ok(())
}

/// Little-endian records of `(f64 t, u16 x, u16 y, i8 p)`, 13 bytes each.
pub fn encode_events_binary<T: Real>(events: &[Event<T>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(events.len() * 13);
    for e in events {
        out.extend_from_slice(&e.t.as_f64().to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.extend_from_slice(&e.polarity.to_le_bytes());
    }
    out
}

pub fn decode_events_binary(bytes: &[u8]) -> Result<Vec<Event<f64>>> {
    if !bytes.len().is_multiple_of(13) {
        return Err(config("event stream length is not a multiple of 13 bytes"));
    }
    Ok(bytes
        .chunks_exact(13)
        .map(|r| Event {
            t: f64::from_le_bytes(r[0..8].try_into().unwrap()),
            x: u16::from_le_bytes([r[8], r[9]]),
            y: u16::from_le_bytes([r[10], r[11]]),
            polarity: r[12] as i8,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(refractory: f64) -> EbcConfig<f64> {
        EbcConfig {
            contrast_threshold_pos: 0.2,
            contrast_threshold_neg: 0.2,
            threshold_noise_stddev: 0.0,
            refractory_period: refractory,
            frame_rate: 10.0,
            noise_seed: 0,
            log_eps: 1e-3,
        }
    }

    fn ramp(refractory: f64) -> Vec<Event<f64>> {
        let c = cfg(refractory);
        let mut st = init_state(&[0.0], &c);
        generate_events(1, &[0.0], &[0.5], 0.0, 0.1, &c, &mut st, 1).unwrap()
    }

    #[test]
    fn log_luminance_cases() {
        let eps: f64 = 1e-3;
        assert!(log_luminance(1.0 - eps, eps).unwrap().abs() < 1e-15);
        assert_eq!(log_luminance(0.0, eps).unwrap(), eps.ln());
        assert!((log_luminance(std::f64::consts::E - eps, eps).unwrap() - 1.0).abs() < 1e-15);
        assert!(log_luminance(-0.1, eps).is_err());
    }

    #[test]
    fn ramp_emits_two_events() {
        let ev = ramp(0.0);
        assert_eq!(ev.len(), 2);
        assert!((ev[0].t - 0.04).abs() < 1e-12);
        assert!((ev[1].t - 0.08).abs() < 1e-12);
        assert!(ev.iter().all(|e| e.polarity == 1));
    }

    #[test]
    fn refractory_suppresses_second_crossing() {
        let ev = ramp(0.05);
        assert_eq!(ev.len(), 1);
        assert!((ev[0].t - 0.04).abs() < 1e-12);
    }

    #[test]
    fn no_change_no_events() {
        let c = cfg(0.0);
        let frame = vec![0.3; 16];
        let mut st = init_state(&frame, &c);
        assert!(generate_events(4, &frame, &frame, 0.0, 0.1, &c, &mut st, 1).unwrap().is_empty());
    }

    #[test]
    fn falling_ramp_is_negative() {
        let c = cfg(0.0);
        let mut st = init_state(&[0.0], &c);
        let ev = generate_events(1, &[0.0], &[-0.45], 0.0, 0.1, &c, &mut st, 1).unwrap();
        assert_eq!(ev.len(), 2);
        assert!(ev.iter().all(|e| e.polarity == -1));
        assert!((st[0].reference_log_l + 0.4).abs() < 1e-12);
    }

    #[test]
    fn contract_checks() {
        let c = cfg(0.0);
        let mut st = init_state(&[0.0, 0.0], &c);
        assert!(generate_events(2, &[0.0, 0.0], &[0.0], 0.0, 0.1, &c, &mut st, 1).is_err());
        assert!(generate_events(2, &[0.0, 0.0], &[0.0, 1.0], 0.1, 0.1, &c, &mut st, 1).is_err());
    }

    #[test]
    fn sorted_with_tie_break() {
        let c = cfg(0.0);
        // identical ramps on every pixel produce simultaneous events
        let prev = vec![0.0; 6];
        let cur = vec![0.3; 6];
        let mut st = init_state(&prev, &c);
        let ev = generate_events(3, &prev, &cur, 0.0, 1.0, &c, &mut st, 1).unwrap();
        let order: Vec<(u16, u16)> = ev.iter().map(|e| (e.y, e.x)).collect();
        assert_eq!(order, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]);
    }

    #[test]
    fn noisy_thresholds_stay_positive_and_deterministic() {
        let c = EbcConfig { threshold_noise_stddev: 0.5, noise_seed: 9, ..cfg(0.0) };
        let prev = vec![0.0; 16];
        let cur: Vec<f64> = (0..16).map(|i| (i as f64 - 8.0) * 0.3).collect();
        let mut a = init_state(&prev, &c);
        let mut b = init_state(&prev, &c);
        let ea = generate_events(4, &prev, &cur, 0.0, 0.1, &c, &mut a, 1).unwrap();
        let eb = generate_events(4, &prev, &cur, 0.0, 0.1, &c, &mut b, 1).unwrap();
        assert_eq!(ea, eb);
        assert!(a.iter().all(|s| s.threshold_pos > 0.0 && s.threshold_neg > 0.0));
    }

    #[test]
    fn camera_first_frame_is_silent() {
        let mut cam = EventCamera::new(cfg(0.0), 2, 1).unwrap();
        assert!(cam.process(&[0.5, 0.5], 0.0).unwrap().is_empty());
        let ev = cam.process(&[0.5, 2.0], 0.1).unwrap();
        assert!(!ev.is_empty());
        assert!(ev.iter().all(|e| e.x == 1 && e.polarity == 1 && e.t > 0.0 && e.t <= 0.1));
        assert!(cam.process(&[0.5], 0.2).is_err());
    }

    #[test]
    fn export_formats() {
        let ev = vec![Event { x: 3, y: 4, t: 0.5f64, polarity: -1 }];
        let mut txt = Vec::new();
        write_events_text(&ev, &mut txt).unwrap();
        assert_eq!(String::from_utf8(txt).unwrap(), "0.500000000 3 4 -1\n");
        let bin = encode_events_binary(&ev);
        assert_eq!(bin.len(), 13);
        assert_eq!(decode_events_binary(&bin).unwrap(), ev);
    }
}
