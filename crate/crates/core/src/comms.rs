//! Acoustic modem, USBL and visual-light communication channels.
//!
//! Device boresights point along local +X.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Result};
use crate::num::{Real, Vec3};
use crate::rng::NoiseStream;
use crate::scene::{Pose, Scene};

pub const DEFAULT_SOUND_SPEED: f64 = 1500.0;
pub const DEFAULT_PAYLOAD_CAP: usize = 4096;

const KEY_USBL: u64 = 0x05B1;
const KEY_DROP: u64 = 0xD209;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct Mount<T: Real> {
    /// Scene instance the device rides on; ignored during occlusion checks.
    pub body_id: u32,
    pub local: Pose<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct AcousticNode<T: Real> {
    pub id: u32,
    pub mount: Mount<T>,
    /// rad; π is omnidirectional.
    pub cone_half_angle: T,
    /// m
    pub max_range: T,
}

impl<T: Real> AcousticNode<T> {
    pub fn validate(&self) -> Result<()> {
        self.mount.local.validate()?;
        if !(self.cone_half_angle > T::zero() && self.cone_half_angle <= T::pi()) {
            return Err(config(format!("acoustic node {} cone_half_angle must be in (0, pi]", self.id)));
        }
        if !(self.max_range > T::zero()) {
            return Err(config(format!("acoustic node {} max_range must be > 0", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticMessage<T: Real> {
    pub src: u32,
    pub dst: u32,
    pub payload: Vec<u8>,
    pub emit_time: T,
}

impl<T: Real> AcousticMessage<T> {
    pub fn new(src: u32, dst: u32, payload: Vec<u8>, emit_time: T, payload_cap: usize) -> Result<Self> {
        if payload.len() > payload_cap {
            return Err(contract(format!("payload of {} bytes exceeds the {payload_cap}-byte cap", payload.len())));
        }
        Ok(Self { src, dst, payload, emit_time })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Delivered,
    BlockedOcclusion,
    OutOfRange,
    OutsideCone,
    /// Geometrically delivered but removed by the seeded drop probability.
    Dropped,
    /// VLC quality below the receiver threshold.
    BelowThreshold,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Delivered => "delivered",
            Outcome::BlockedOcclusion => "blocked_occlusion",
            Outcome::OutOfRange => "out_of_range",
            Outcome::OutsideCone => "outside_cone",
            Outcome::Dropped => "dropped",
            Outcome::BelowThreshold => "below_threshold",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery<T: Real> {
    pub outcome: Outcome,
    /// Present only when delivered.
    pub receive_time: Option<T>,
    pub distance: T,
}

fn boresight<T: Real>(pose: &Pose<T>) -> Vec3<T> {
    pose.transform_vector(&Vec3::x())
}

fn within_cone<T: Real>(pose: &Pose<T>, toward: &Vec3<T>, half_angle: T) -> bool {
    half_angle >= T::pi() || boresight(pose).dot(toward) >= half_angle.cos()
}

/// Propagates an acoustic message between two world-placed nodes.
///
/// Failures are reported with precedence out-of-range, outside-cone, occlusion.
pub fn propagate_acoustic<T: Real>(
    scene: &Scene<T>,
    tx: &AcousticNode<T>,
    tx_pose: &Pose<T>,
    rx: &AcousticNode<T>,
    rx_pose: &Pose<T>,
    msg: &AcousticMessage<T>,
    sound_speed: T,
) -> Result<Delivery<T>> {
    if !(sound_speed > T::zero()) {
        return Err(contract("sound speed must be > 0"));
    }
    let delta = rx_pose.position - tx_pose.position;
    let d = delta.norm();
    let fail = |outcome| Ok(Delivery { outcome, receive_time: None, distance: d });
    if d > tx.max_range.min(rx.max_range) {
        return fail(Outcome::OutOfRange);
    }
    if d > T::zero() {
        let u = delta / d;
        if !within_cone(tx_pose, &u, tx.cone_half_angle) || !within_cone(rx_pose, &-u, rx.cone_half_angle) {
            return fail(Outcome::OutsideCone);
        }
    }
    let skip = [tx.mount.body_id, rx.mount.body_id];
    if scene.segment_blocked(&tx_pose.position, &rx_pose.position, &skip) {
        return fail(Outcome::BlockedOcclusion);
    }
    Ok(Delivery { outcome: Outcome::Delivered, receive_time: Some(msg.emit_time + d / sound_speed), distance: d })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UsblFix<T: Real> {
    /// m
    pub range: T,
    /// rad in (−π, π], measured from local +X towards +Y.
    pub bearing: T,
    /// rad in [−π/2, π/2], positive towards local +Z.
    pub elevation: T,
    pub noisy: bool,
}

fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::two_pi();
    let mut w = a - two_pi * ((a + T::pi()) / two_pi).floor();
    if w <= -T::pi() {
        w += two_pi;
    }
    w
}

/// Position of `target` expressed in spherical coordinates of the receiver frame.
pub fn usbl_fix<T: Real>(
    target: &Pose<T>,
    receiver: &Pose<T>,
    range_noise_std: T,
    angle_noise_std: T,
    seed: u64,
    query_index: u64,
) -> Result<UsblFix<T>> {
    let local = receiver.inverse_transform_point(&target.position);
    let range = local.norm();
    if !(range > T::zero()) {
        return Err(contract("USBL target coincides with the receiver"));
    }
    let bearing = local.y.atan2(local.x);
    let elevation = local.z.atan2(local.x.hypot(local.y));
    let noisy = range_noise_std > T::zero() || angle_noise_std > T::zero();
    if !noisy {
        return Ok(UsblFix { range, bearing: wrap_angle(bearing), elevation, noisy });
    }
    let s = NoiseStream::new(seed);
    let n = |k: u64| T::lit(s.normal(&[KEY_USBL, query_index, k]));
    Ok(UsblFix {
        range: (range + range_noise_std * n(0)).max(T::zero()),
        bearing: wrap_angle(bearing + angle_noise_std * n(1)),
        elevation: (elevation + angle_noise_std * n(2)).clamp(-T::frac_pi_2(), T::frac_pi_2()),
        noisy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct UsblNoise<T: Real> {
    pub range_std: T,
    pub angle_std: T,
    pub seed: u64,
}

/// USBL interrogation: a fix exists only when the acoustic round trip succeeds both ways.
#[allow(clippy::too_many_arguments)]
pub fn usbl_query<T: Real>(
    scene: &Scene<T>,
    transceiver: &AcousticNode<T>,
    transceiver_pose: &Pose<T>,
    transponder: &AcousticNode<T>,
    transponder_pose: &Pose<T>,
    noise: &UsblNoise<T>,
    sound_speed: T,
    query_index: u64,
) -> Result<Option<UsblFix<T>>> {
    let ping = AcousticMessage { src: transceiver.id, dst: transponder.id, payload: vec![], emit_time: T::zero() };
    let out = propagate_acoustic(scene, transceiver, transceiver_pose, transponder, transponder_pose, &ping, sound_speed)?;
    let back = propagate_acoustic(scene, transponder, transponder_pose, transceiver, transceiver_pose, &ping, sound_speed)?;
    if out.outcome != Outcome::Delivered || back.outcome != Outcome::Delivered {
        return Ok(None);
    }
    usbl_fix(transponder_pose, transceiver_pose, noise.range_std, noise.angle_std, noise.seed, query_index).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct VlcNode<T: Real> {
    pub id: u32,
    pub mount: Mount<T>,
    /// rad in (0, π/2]
    pub beam_half_angle: T,
    /// m
    pub max_range_clear: T,
    /// Beer–Lambert attenuation coefficient (1/m).
    pub turbidity_coeff: T,
    /// Minimum quality for a delivery, in (0, 1].
    pub link_threshold: T,
}

impl<T: Real> VlcNode<T> {
    pub fn validate(&self) -> Result<()> {
        self.mount.local.validate()?;
        let id = self.id;
        if !(self.beam_half_angle > T::zero() && self.beam_half_angle <= T::frac_pi_2()) {
            return Err(config(format!("vlc node {id} beam_half_angle must be in (0, pi/2]")));
        }
        if !(self.max_range_clear > T::zero()) {
            return Err(config(format!("vlc node {id} max_range_clear must be > 0")));
        }
        if !(self.turbidity_coeff >= T::zero()) {
            return Err(config(format!("vlc node {id} turbidity_coeff must be >= 0")));
        }
        if !(self.link_threshold > T::zero() && self.link_threshold <= T::one()) {
            return Err(config(format!("vlc node {id} link_threshold must be in (0, 1]")));
        }
        Ok(())
    }
}

/// Link quality in `[0, 1]`; the attenuation uses the mean turbidity of the two nodes.
pub fn vlc_link<T: Real>(scene: &Scene<T>, tx: &VlcNode<T>, tx_pose: &Pose<T>, rx: &VlcNode<T>, rx_pose: &Pose<T>) -> T {
    let delta = rx_pose.position - tx_pose.position;
    let d = delta.norm();
    if !(d > T::zero()) || d > tx.max_range_clear.min(rx.max_range_clear) {
        return T::zero();
    }
    let u = delta / d;
    let cos_tx = boresight(tx_pose).dot(&u);
    let cos_rx = -boresight(rx_pose).dot(&u);
    if cos_tx < tx.beam_half_angle.cos() || cos_rx < rx.beam_half_angle.cos() {
        return T::zero();
    }
    if scene.segment_blocked(&tx_pose.position, &rx_pose.position, &[tx.mount.body_id, rx.mount.body_id]) {
        return T::zero();
    }
    let k = T::lit(0.5) * (tx.turbidity_coeff + rx.turbidity_coeff);
    ((-k * d).exp() * cos_tx * cos_rx).clamp(T::zero(), T::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Acoustic,
    Vlc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry<T: Real> {
    pub channel: Channel,
    pub emit_time: T,
    pub src: u32,
    pub dst: u32,
    pub outcome: Outcome,
    pub receive_time: Option<T>,
    /// VLC link quality; 1 for acoustic deliveries, 0 for failures.
    pub quality: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedMessage<T: Real> {
    pub channel: Channel,
    pub message: AcousticMessage<T>,
    pub receive_time: T,
}

#[derive(Debug, Clone, PartialEq)]
struct InFlight<T: Real> {
    seq: u64,
    received: ReceivedMessage<T>,
}

/// Single-owner queue of in-flight messages; geometry is evaluated when a message is sent.
#[derive(Debug, Clone)]
pub struct ChannelScheduler<T: Real> {
    pub sound_speed: T,
    pub payload_cap: usize,
    pub drop_probability: f64,
    noise: NoiseStream,
    seq: u64,
    now: Option<T>,
    pending: Vec<InFlight<T>>,
    log: Vec<LogEntry<T>>,
}

impl<T: Real> ChannelScheduler<T> {
    pub fn new(sound_speed: T, payload_cap: usize, drop_probability: f64, seed: u64) -> Result<Self> {
        if !(sound_speed > T::zero()) {
            return Err(config("sound speed must be > 0"));
        }
        if !(0.0..=1.0).contains(&drop_probability) {
            return Err(config("drop probability must be in [0, 1]"));
        }
        Ok(Self {
            sound_speed,
            payload_cap,
            drop_probability,
            noise: NoiseStream::new(seed),
            seq: 0,
            now: None,
            pending: Vec::new(),
            log: Vec::new(),
        })
    }

    fn check_payload(&self, msg: &AcousticMessage<T>) -> Result<()> {
        if msg.payload.len() > self.payload_cap {
            return Err(contract(format!(
                "payload of {} bytes exceeds the {}-byte cap",
                msg.payload.len(),
                self.payload_cap
            )));
        }
        Ok(())
    }

    fn dropped(&self, seq: u64) -> bool {
        self.drop_probability > 0.0 && self.noise.uniform(&[KEY_DROP, seq]) < self.drop_probability
    }

    fn enqueue(
        &mut self,
        channel: Channel,
        msg: AcousticMessage<T>,
        mut outcome: Outcome,
        receive: T,
        quality: T,
        distance: T,
    ) -> Delivery<T> {
        let seq = self.seq;
        self.seq += 1;
        if outcome == Outcome::Delivered && self.dropped(seq) {
            outcome = Outcome::Dropped;
        }
        let receive_time = (outcome == Outcome::Delivered).then_some(receive);
        self.log.push(LogEntry {
            channel,
            emit_time: msg.emit_time,
            src: msg.src,
            dst: msg.dst,
            outcome,
            receive_time,
            quality: if receive_time.is_some() { quality } else { T::zero() },
        });
        if receive_time.is_some() {
            self.pending.push(InFlight { seq, received: ReceivedMessage { channel, message: msg, receive_time: receive } });
        }
        Delivery { outcome, receive_time, distance }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn send_acoustic(
        &mut self,
        scene: &Scene<T>,
        tx: &AcousticNode<T>,
        tx_pose: &Pose<T>,
        rx: &AcousticNode<T>,
        rx_pose: &Pose<T>,
        msg: AcousticMessage<T>,
    ) -> Result<Delivery<T>> {
        self.check_payload(&msg)?;
        let geo = propagate_acoustic(scene, tx, tx_pose, rx, rx_pose, &msg, self.sound_speed)?;
        let receive = geo.receive_time.unwrap_or(msg.emit_time);
        Ok(self.enqueue(Channel::Acoustic, msg, geo.outcome, receive, T::one(), geo.distance))
    }

    /// Optical links deliver at emit time when the quality meets the receiver threshold.
    pub fn send_vlc(
        &mut self,
        scene: &Scene<T>,
        tx: &VlcNode<T>,
        tx_pose: &Pose<T>,
        rx: &VlcNode<T>,
        rx_pose: &Pose<T>,
        msg: AcousticMessage<T>,
    ) -> Result<Delivery<T>> {
        self.check_payload(&msg)?;
        let q = vlc_link(scene, tx, tx_pose, rx, rx_pose);
        let outcome = if q >= rx.link_threshold {
            Outcome::Delivered
        } else if q > T::zero() {
            Outcome::BelowThreshold
        } else {
            Outcome::BlockedOcclusion
        };
        let (emit, distance) = (msg.emit_time, (rx_pose.position - tx_pose.position).norm());
        Ok(self.enqueue(Channel::Vlc, msg, outcome, emit, q, distance))
    }

    /// Removes and returns every message received by `current_time`, ordered by receive time then send order.
    pub fn poll(&mut self, current_time: T) -> Result<Vec<ReceivedMessage<T>>> {
        if let Some(now) = self.now {
            if current_time < now {
                return Err(contract(format!("scheduler time went backwards ({current_time} < {now})")));
            }
        }
        self.now = Some(current_time);
        let (mut due, rest): (Vec<_>, Vec<_>) =
            self.pending.drain(..).partition(|m| m.received.receive_time <= current_time);
        self.pending = rest;
        due.sort_by(|a, b| {
            a.received.receive_time.partial_cmp(&b.received.receive_time).unwrap().then(a.seq.cmp(&b.seq))
        });
        Ok(due.into_iter().map(|m| m.received).collect())
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn log(&self) -> &[LogEntry<T>] {
        &self.log
    }
}

/// Writes `emit_time,src,dst,outcome,receive_time,quality` rows; undelivered rows leave receive_time empty.
pub fn write_message_log<T: Real, W: Write>(log: &[LogEntry<T>], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["emit_time", "src", "dst", "outcome", "receive_time", "quality"])?;
    for e in log {
        wr.write_record([
            format!("{}", e.emit_time),
            e.src.to_string(),
            e.dst.to_string(),
            e.outcome.to_string(),
            e.receive_time.map(|t| format!("{t}")).unwrap_or_default(),
            format!("{}", e.quality),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
