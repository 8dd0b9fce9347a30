//! Declarative scenario files and their validation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use seasim::comms::{AcousticNode, Mount, UsblNoise, VlcNode, DEFAULT_PAYLOAD_CAP, DEFAULT_SOUND_SPEED};
use seasim::event_camera::EbcConfig;
use seasim::scene::{
    CameraIntrinsics, Interpolation, KinematicTrajectory, LightingEnvironment, Material, Pose, TriangleMesh,
    Waypoint,
};
use seasim::sonar::SonarConfig;
use seasim::tether::{validate_attachments, Attachment, TetherConfig};
use seasim::thermal::{Colormap, ThermalConfig, ThermalEnvironment};
use seasim::thrusters::{RotorDynamics, ThrustGeneration};
use seasim::{Quat, Vec2, Vec3};

/// One problem found in a scenario file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// JSON field path such as `sensors[1].rate`, empty for file-level problems.
    pub path: String,
    /// 1-based line for syntax errors.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.path.is_empty()) {
            (Some(l), _) => write!(f, "line {l}: {}", self.message),
            (None, false) => write!(f, "{}: {}", self.path, self.message),
            (None, true) => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PoseDecl {
    #[serde(default)]
    pub position: [f64; 3],
    /// Roll, pitch, yaw in radians.
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl PoseDecl {
    pub fn to_pose(self) -> Pose<f64> {
        let [r, p, y] = self.rpy;
        Pose::new(Vec3::from(self.position), Quat::from_euler_angles(r, p, y))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointDecl {
    pub t: f64,
    pub pose: PoseDecl,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryDecl {
    #[serde(default)]
    pub interpolation: Interpolation,
    pub waypoints: Vec<WaypointDecl>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshDecl {
    Cuboid { size: [f64; 3] },
    UvSphere { radius: f64, stacks: usize, slices: usize },
    Quad { width: f64, height: f64 },
    /// Path relative to the scenario file.
    Obj { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDecl {
    pub id: u32,
    pub mesh: String,
    pub material: String,
    #[serde(default)]
    pub pose: Option<PoseDecl>,
    #[serde(default)]
    pub trajectory: Option<TrajectoryDecl>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyDecl {
    pub id: u32,
    #[serde(default)]
    pub pose: Option<PoseDecl>,
    #[serde(default)]
    pub trajectory: Option<TrajectoryDecl>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDecl {
    #[serde(default)]
    pub meshes: BTreeMap<String, MeshDecl>,
    #[serde(default)]
    pub materials: BTreeMap<String, Material<f64>>,
    #[serde(default)]
    pub instances: Vec<InstanceDecl>,
    /// Class names indexed by class id.
    #[serde(default)]
    pub classes: Vec<String>,
    #[serde(default)]
    pub lighting: Option<LightingEnvironment<f64>>,
    #[serde(default)]
    pub thermal: Option<ThermalEnvironment<f64>>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MountDecl {
    /// 0 is the world frame.
    #[serde(default)]
    pub body: u32,
    #[serde(default)]
    pub pose: PoseDecl,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorDecl {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
    /// Hz
    pub rate: f64,
    #[serde(default)]
    pub mount: MountDecl,
    #[serde(default)]
    pub config: Value,
    #[serde(default = "yes")]
    pub enabled: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CommandDecl {
    Constant { value: f64 },
    Step { time: f64, before: f64, after: f64 },
}

impl CommandDecl {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            CommandDecl::Constant { value } => value,
            CommandDecl::Step { time, before, after } => {
                if t < time {
                    before
                } else {
                    after
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GenerationDecl {
    /// Two-column `omega,thrust` table relative to the scenario file.
    TableCsv { table_csv: String },
    Inline(ThrustGeneration<f64>),
}

/// Standalone thruster model file: `{"rotor": ..., "generation": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThrusterModelDecl {
    pub rotor: RotorDynamics<f64>,
    pub generation: GenerationDecl,
}

impl ThrusterModelDecl {
    /// Reads a model file and resolves a CSV table relative to it.
    pub fn load(path: &Path) -> Result<(RotorDynamics<f64>, ThrustGeneration<f64>), String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let decl: ThrusterModelDecl = serde_json::from_str(&text).map_err(|e| format!("line {}: {e}", e.line()))?;
        let generation = match decl.generation {
            GenerationDecl::TableCsv { table_csv } => {
                let base = path.parent().unwrap_or(Path::new("."));
                ThrustGeneration::table_from_csv(&base.join(table_csv)).map_err(|e| e.to_string())?
            }
            GenerationDecl::Inline(g) => g,
        };
        Ok((decl.rotor, generation))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThrusterDecl {
    pub name: String,
    pub rotor: RotorDynamics<f64>,
    pub generation: GenerationDecl,
    /// Thrust acts along the mount's +X axis.
    #[serde(default)]
    pub mount: MountDecl,
    #[serde(default = "zero_command")]
    pub command: CommandDecl,
}

fn zero_command() -> CommandDecl {
    CommandDecl::Constant { value: 0.0 }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TetherDecl {
    pub name: String,
    pub config: TetherConfig<f64>,
    pub start: [f64; 3],
    pub direction: [f64; 3],
    #[serde(default)]
    pub attachments: Vec<Attachment<f64>>,
    /// State dumps per second.
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcousticNodeDecl {
    pub id: u32,
    #[serde(default)]
    pub mount: MountDecl,
    pub cone_half_angle: f64,
    pub max_range: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VlcNodeDecl {
    pub id: u32,
    #[serde(default)]
    pub mount: MountDecl,
    pub beam_half_angle: f64,
    pub max_range_clear: f64,
    pub turbidity_coeff: f64,
    pub link_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelDecl {
    Acoustic,
    Vlc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageDecl {
    pub channel: ChannelDecl,
    pub src: u32,
    pub dst: u32,
    pub emit_time: f64,
    #[serde(default)]
    pub payload: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommsDecl {
    #[serde(default = "default_sound_speed")]
    pub sound_speed: f64,
    #[serde(default = "default_payload_cap")]
    pub payload_cap: usize,
    #[serde(default)]
    pub drop_probability: f64,
    #[serde(default)]
    pub acoustic: Vec<AcousticNodeDecl>,
    #[serde(default)]
    pub vlc: Vec<VlcNodeDecl>,
    #[serde(default)]
    pub messages: Vec<MessageDecl>,
}

fn default_sound_speed() -> f64 {
    DEFAULT_SOUND_SPEED
}

fn default_payload_cap() -> usize {
    DEFAULT_PAYLOAD_CAP
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsDecl {
    #[serde(default)]
    pub directory: Option<String>,
    /// Sensor names whose outputs are skipped.
    #[serde(default)]
    pub disabled: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentDecl {
    /// Body driven by the thrusters mounted on it.
    pub vehicle_body: u32,
    /// kg
    pub mass: f64,
    #[serde(default = "one_tick")]
    pub control_period_ticks: u64,
    /// Sensor names appended to each observation.
    #[serde(default)]
    pub observations: Vec<String>,
}

fn one_tick() -> u64 {
    1
}

fn default_gravity() -> f64 {
    9.81
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub duration: f64,
    pub base_dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    pub scene: SceneDecl,
    #[serde(default)]
    pub bodies: Vec<BodyDecl>,
    #[serde(default)]
    pub sensors: Vec<SensorDecl>,
    #[serde(default)]
    pub thrusters: Vec<ThrusterDecl>,
    #[serde(default)]
    pub tethers: Vec<TetherDecl>,
    #[serde(default)]
    pub comm_nodes: Option<CommsDecl>,
    #[serde(default)]
    pub outputs: OutputsDecl,
    #[serde(default)]
    pub environment: Option<EnvironmentDecl>,
}

/// Mount resolved to a body id and a local pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountSpec {
    pub body: u32,
    pub pose: Pose<f64>,
}

impl From<MountDecl> for MountSpec {
    fn from(m: MountDecl) -> Self {
        Self { body: m.body, pose: m.pose.to_pose() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorKind {
    Camera { intrinsics: CameraIntrinsics<f64> },
    Thermal(ThermalConfig<f64>),
    Sonar(SonarConfig<f64>),
    EventCamera { intrinsics: CameraIntrinsics<f64>, config: EbcConfig<f64> },
    OpticalFlow { intrinsics: CameraIntrinsics<f64> },
    Annotation { intrinsics: CameraIntrinsics<f64>, min_pixels: usize },
    Usbl { transceiver: u32, transponder: u32, noise: UsblNoise<f64> },
}

pub const SENSOR_TYPES: [&str; 7] =
    ["camera", "thermal", "sonar", "event_camera", "optical_flow", "annotation", "usbl"];

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSpec {
    pub name: String,
    pub kind: SensorKind,
    pub rate: f64,
    pub ticks_per_frame: u64,
    pub mount: MountSpec,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThrusterSpec {
    pub name: String,
    pub rotor: RotorDynamics<f64>,
    pub generation: ThrustGeneration<f64>,
    pub mount: MountSpec,
    pub command: CommandDecl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TetherSpec {
    pub name: String,
    pub config: TetherConfig<f64>,
    pub start: Vec3<f64>,
    pub direction: Vec3<f64>,
    pub attachments: Vec<Attachment<f64>>,
    pub ticks_per_frame: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommsSpec {
    pub sound_speed: f64,
    pub payload_cap: usize,
    pub drop_probability: f64,
    pub acoustic: Vec<AcousticNode<f64>>,
    pub vlc: Vec<VlcNode<f64>>,
    pub messages: Vec<MessageDecl>,
}

#[derive(Debug, Clone)]
pub struct InstanceSpec {
    pub id: u32,
    pub mesh: Arc<TriangleMesh<f64>>,
    pub material: Arc<Material<f64>>,
    pub motion: KinematicTrajectory<f64>,
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub duration: f64,
    pub base_dt: f64,
    pub seed: u64,
    pub gravity: f64,
    pub instances: Vec<InstanceSpec>,
    pub bodies: HashMap<u32, KinematicTrajectory<f64>>,
    pub classes: Vec<String>,
    pub lighting: LightingEnvironment<f64>,
    pub thermal: ThermalEnvironment<f64>,
    pub sensors: Vec<SensorSpec>,
    pub thrusters: Vec<ThrusterSpec>,
    pub tethers: Vec<TetherSpec>,
    pub comms: Option<CommsSpec>,
    pub output_dir: Option<PathBuf>,
    pub disabled_outputs: HashSet<String>,
    pub environment: Option<EnvironmentDecl>,
    /// SHA-256 of the scenario file bytes, hex encoded.
    pub config_hash: String,
}

impl Scenario {
    /// Number of base ticks in `[0, duration)`.
    pub fn tick_count(&self) -> u64 {
        ticks_in(self.duration, self.base_dt)
    }

    pub fn output_enabled(&self, sensor: &SensorSpec) -> bool {
        sensor.enabled && !self.disabled_outputs.contains(&sensor.name)
    }
}

pub(crate) fn ticks_in(duration: f64, dt: f64) -> u64 {
    let n = duration / dt;
    let r = n.round();
    if (n - r).abs() < 1e-9 * r.max(1.0) {
        r as u64
    } else {
        n.ceil() as u64
    }
}

struct Collector {
    diags: Vec<Diagnostic>,
}

impl Collector {
    fn err(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.diags.push(Diagnostic { path: path.into(), line: None, message: message.into() });
    }

    fn check(&mut self, ok: bool, path: &str, message: &str) -> bool {
        if !ok {
            self.err(path, message);
        }
        ok
    }

    fn wrap<T>(&mut self, path: &str, r: seasim::Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.err(path, e.to_string());
                None
            }
        }
    }
}

/// Reads and validates a scenario file, reporting every problem found.
pub fn validate_config(path: &Path) -> Result<Scenario, Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![Diagnostic { path: String::new(), line: None, message: format!("cannot read {}: {e}", path.display()) }]
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_scenario(&text, &base)
}

/// Parses scenario text; relative paths inside it resolve against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario, Vec<Diagnostic>> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| {
        vec![Diagnostic { path: String::new(), line: Some(e.line()), message: format!("parse error: {e}") }]
    })?;
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    resolve(raw, base_dir, hash)
}

fn merge_into<T: Serialize + DeserializeOwned>(base: T, overrides: &Value) -> Result<T, String> {
    let mut v = serde_json::to_value(base).map_err(|e| e.to_string())?;
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, overrides) {
        for (k, val) in src {
            dst.insert(k.clone(), val.clone());
        }
    } else if !overrides.is_null() {
        return Err("expected an object".into());
    }
    serde_json::from_value(v).map_err(|e| e.to_string())
}

fn take_field<T: DeserializeOwned>(obj: &mut serde_json::Map<String, Value>, key: &str) -> Result<Option<T>, String> {
    obj.remove(key).map(|v| serde_json::from_value(v).map_err(|e| format!("{key}: {e}"))).transpose()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntrinsicsDecl {
    width: usize,
    height: usize,
    #[serde(default)]
    focal_length: Option<f64>,
    /// rad
    #[serde(default)]
    horizontal_fov: Option<f64>,
    #[serde(default)]
    principal_point: Option<[f64; 2]>,
}

impl IntrinsicsDecl {
    fn build(&self) -> Result<CameraIntrinsics<f64>, String> {
        let base = match (self.focal_length, self.horizontal_fov) {
            (Some(f), None) => CameraIntrinsics::centered(self.width, self.height, f),
            (None, Some(fov)) => CameraIntrinsics::from_fov(self.width, self.height, fov),
            _ => return Err("give exactly one of focal_length or horizontal_fov".into()),
        }
        .map_err(|e| e.to_string())?;
        match self.principal_point {
            Some([x, y]) => {
                CameraIntrinsics::new(self.width, self.height, base.focal_length, Vec2::new(x, y)).map_err(|e| e.to_string())
            }
            None => Ok(base),
        }
    }
}

fn intrinsics_of(obj: &mut serde_json::Map<String, Value>) -> Result<CameraIntrinsics<f64>, String> {
    let decl: IntrinsicsDecl = take_field(obj, "intrinsics")?.ok_or("missing intrinsics")?;
    decl.build().map_err(|e| format!("intrinsics: {e}"))
}

fn no_extra(obj: &serde_json::Map<String, Value>) -> Result<(), String> {
    match obj.keys().next() {
        Some(k) => Err(format!("unknown field `{k}`")),
        None => Ok(()),
    }
}

fn sensor_kind(kind: &str, config: &Value) -> Result<SensorKind, String> {
    let mut obj = match config {
        Value::Object(m) => m.clone(),
        Value::Null => serde_json::Map::new(),
        _ => return Err("config must be an object".into()),
    };
    match kind {
        "camera" => {
            let intrinsics = intrinsics_of(&mut obj)?;
            no_extra(&obj)?;
            Ok(SensorKind::Camera { intrinsics })
        }
        "optical_flow" => {
            let intrinsics = intrinsics_of(&mut obj)?;
            no_extra(&obj)?;
            Ok(SensorKind::OpticalFlow { intrinsics })
        }
        "annotation" => {
            let intrinsics = intrinsics_of(&mut obj)?;
            let min_pixels = take_field(&mut obj, "min_pixels")?.unwrap_or(1);
            no_extra(&obj)?;
            Ok(SensorKind::Annotation { intrinsics, min_pixels })
        }
        "thermal" => {
            let intrinsics = intrinsics_of(&mut obj)?;
            let cfg = ThermalConfig {
                intrinsics,
                temp_min: take_field(&mut obj, "temp_min")?.ok_or("missing temp_min")?,
                temp_max: take_field(&mut obj, "temp_max")?.ok_or("missing temp_max")?,
                noise_stddev: take_field(&mut obj, "noise_stddev")?.unwrap_or(0.0),
                noise_seed: 0,
                colormap: take_field::<Colormap>(&mut obj, "colormap")?.unwrap_or_default(),
            };
            no_extra(&obj)?;
            cfg.validate().map_err(|e| e.to_string())?;
            Ok(SensorKind::Thermal(cfg))
        }
        "sonar" => {
            let preset: Option<String> = take_field(&mut obj, "preset")?;
            let cfg = match preset.as_deref() {
                Some("gemini_1200ik") => merge_into(SonarConfig::gemini_1200ik(), &Value::Object(obj))?,
                Some(other) => return Err(format!("unknown sonar preset `{other}`")),
                None => {
                    obj.entry("noise_seed").or_insert(Value::from(0));
                    serde_json::from_value(Value::Object(obj)).map_err(|e| e.to_string())?
                }
            };
            let cfg: SonarConfig<f64> = cfg;
            cfg.validate().map_err(|e| e.to_string())?;
            Ok(SensorKind::Sonar(cfg))
        }
        "event_camera" => {
            let intrinsics = intrinsics_of(&mut obj)?;
            let config: EbcConfig<f64> = merge_into(EbcConfig::default(), &Value::Object(obj))?;
            config.validate().map_err(|e| e.to_string())?;
            Ok(SensorKind::EventCamera { intrinsics, config })
        }
        "usbl" => {
            let transceiver = take_field(&mut obj, "transceiver")?.ok_or("missing transceiver")?;
            let transponder = take_field(&mut obj, "transponder")?.ok_or("missing transponder")?;
            let noise = UsblNoise {
                range_std: take_field(&mut obj, "range_noise_std")?.unwrap_or(0.0),
                angle_std: take_field(&mut obj, "angle_noise_std")?.unwrap_or(0.0),
                seed: 0,
            };
            no_extra(&obj)?;
            if !(noise.range_std >= 0.0 && noise.angle_std >= 0.0) {
                return Err("USBL noise must be >= 0".into());
            }
            Ok(SensorKind::Usbl { transceiver, transponder, noise })
        }
        other => Err(format!("unknown sensor type `{other}` (expected one of {})", SENSOR_TYPES.join(", "))),
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

const RESERVED_NAMES: [&str; 3] = ["thrusters", "tethers", "comms"];

fn trajectory(c: &mut Collector, path: &str, pose: Option<PoseDecl>, traj: Option<&TrajectoryDecl>) -> Option<KinematicTrajectory<f64>> {
    match (pose, traj) {
        (Some(_), Some(_)) => {
            c.err(path, "give either pose or trajectory, not both");
            None
        }
        (_, Some(t)) => {
            let wps = t.waypoints.iter().map(|w| Waypoint { t: w.t, pose: w.pose.to_pose() }).collect();
            c.wrap(&format!("{path}.trajectory"), KinematicTrajectory::new(wps, t.interpolation))
        }
        (p, None) => Some(KinematicTrajectory::stationary(p.unwrap_or_default().to_pose())),
    }
}

fn rate_ticks(c: &mut Collector, path: &str, rate: f64, base_dt: f64) -> u64 {
    if !(rate > 0.0 && rate.is_finite()) {
        c.err(path, "rate must be > 0");
        return 0;
    }
    if !(base_dt > 0.0) {
        return 0;
    }
    let ticks = 1.0 / (rate * base_dt);
    let r = ticks.round();
    if r < 1.0 || (ticks - r).abs() > 1e-9 * r.max(1.0) {
        c.err(path, format!("rate does not divide base step ({rate} Hz with base_dt {base_dt} s gives {ticks} ticks per frame)"));
        return 0;
    }
    r as u64
}

fn resolve(raw: RawConfig, base_dir: &Path, config_hash: String) -> Result<Scenario, Vec<Diagnostic>> {
    let mut c = Collector { diags: Vec::new() };
    c.check(raw.duration > 0.0 && raw.duration.is_finite(), "duration", "duration must be > 0");
    c.check(raw.base_dt > 0.0 && raw.base_dt.is_finite(), "base_dt", "base_dt must be > 0");
    c.check(raw.gravity >= 0.0 && raw.gravity.is_finite(), "gravity", "gravity must be >= 0");

    let mut meshes = HashMap::new();
    for (name, m) in &raw.scene.meshes {
        let path = format!("scene.meshes.{name}");
        let built = match m {
            MeshDecl::Cuboid { size } => TriangleMesh::cuboid(Vec3::from(*size)),
            MeshDecl::UvSphere { radius, stacks, slices } => TriangleMesh::uv_sphere(*radius, *stacks, *slices),
            MeshDecl::Quad { width, height } => TriangleMesh::quad(*width, *height),
            MeshDecl::Obj { path: p } => std::fs::read_to_string(base_dir.join(p))
                .map_err(seasim::Error::from)
                .and_then(|text| TriangleMesh::from_obj(&text)),
        };
        if let Some(mesh) = c.wrap(&path, built) {
            meshes.insert(name.clone(), Arc::new(mesh));
        }
    }
    let mut materials = HashMap::new();
    for (name, m) in &raw.scene.materials {
        if c.wrap(&format!("scene.materials.{name}"), m.validate()).is_some() {
            materials.insert(name.clone(), Arc::new(m.clone()));
        }
    }

    let mut ids = HashSet::from([0u32]);
    let mut instances = Vec::new();
    for (i, inst) in raw.scene.instances.iter().enumerate() {
        let path = format!("scene.instances[{i}]");
        if inst.id == 0 {
            c.err(format!("{path}.id"), "instance id 0 is reserved for the world");
        } else if !ids.insert(inst.id) {
            c.err(format!("{path}.id"), format!("duplicate body id {}", inst.id));
        }
        let mesh = meshes.get(&inst.mesh).cloned();
        if mesh.is_none() && !raw.scene.meshes.contains_key(&inst.mesh) {
            c.err(format!("{path}.mesh"), format!("unknown mesh `{}`", inst.mesh));
        }
        let material = materials.get(&inst.material).cloned();
        if material.is_none() && !raw.scene.materials.contains_key(&inst.material) {
            c.err(format!("{path}.material"), format!("unknown material `{}`", inst.material));
        }
        if let (Some(mesh), Some(material)) = (&mesh, &material) {
            if let seasim::scene::ThermalMode::TemperatureMap(map) = &material.thermal_mode {
                if map.uv.len() != mesh.vertices().len() {
                    c.err(path.clone(), "temperature map UV count does not match the mesh vertex count");
                }
            }
        }
        let motion = trajectory(&mut c, &path, inst.pose, inst.trajectory.as_ref());
        if let (Some(mesh), Some(material), Some(motion)) = (mesh, material, motion) {
            instances.push(InstanceSpec { id: inst.id, mesh, material, motion });
        }
    }
    let mut bodies = HashMap::new();
    for (i, b) in raw.bodies.iter().enumerate() {
        let path = format!("bodies[{i}]");
        if !ids.insert(b.id) {
            c.err(format!("{path}.id"), format!("duplicate or reserved body id {}", b.id));
        }
        if let Some(t) = trajectory(&mut c, &path, b.pose, b.trajectory.as_ref()) {
            bodies.insert(b.id, t);
        }
    }
    let check_mount = |c: &mut Collector, path: String, m: &MountDecl| {
        if !ids.contains(&m.body) {
            c.err(path, format!("unknown body {}", m.body));
        }
    };

    let lighting = raw.scene.lighting.unwrap_or_default();
    c.wrap("scene.lighting", lighting.validate());
    let thermal = raw.scene.thermal.clone().unwrap_or_default();
    c.wrap("scene.thermal", thermal.validate());

    let comms = raw.comm_nodes.as_ref().map(|cd| {
        c.check(cd.sound_speed > 0.0, "comm_nodes.sound_speed", "sound speed must be > 0");
        c.check(
            (0.0..=1.0).contains(&cd.drop_probability),
            "comm_nodes.drop_probability",
            "drop probability must be in [0, 1]",
        );
        let mut node_ids = HashSet::new();
        let acoustic: Vec<_> = cd
            .acoustic
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let path = format!("comm_nodes.acoustic[{i}]");
                check_mount(&mut c, format!("{path}.mount.body"), &n.mount);
                if !node_ids.insert(n.id) {
                    c.err(format!("{path}.id"), format!("duplicate node id {}", n.id));
                }
                let node = AcousticNode {
                    id: n.id,
                    mount: Mount { body_id: n.mount.body, local: n.mount.pose.to_pose() },
                    cone_half_angle: n.cone_half_angle,
                    max_range: n.max_range,
                };
                c.wrap(&path, node.validate());
                node
            })
            .collect();
        let vlc: Vec<_> = cd
            .vlc
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let path = format!("comm_nodes.vlc[{i}]");
                check_mount(&mut c, format!("{path}.mount.body"), &n.mount);
                if !node_ids.insert(n.id) {
                    c.err(format!("{path}.id"), format!("duplicate node id {}", n.id));
                }
                let node = VlcNode {
                    id: n.id,
                    mount: Mount { body_id: n.mount.body, local: n.mount.pose.to_pose() },
                    beam_half_angle: n.beam_half_angle,
                    max_range_clear: n.max_range_clear,
                    turbidity_coeff: n.turbidity_coeff,
                    link_threshold: n.link_threshold,
                };
                c.wrap(&path, node.validate());
                node
            })
            .collect();
        for (i, m) in cd.messages.iter().enumerate() {
            let path = format!("comm_nodes.messages[{i}]");
            let known = |id: u32| match m.channel {
                ChannelDecl::Acoustic => acoustic.iter().any(|n| n.id == id),
                ChannelDecl::Vlc => vlc.iter().any(|n| n.id == id),
            };
            if !known(m.src) {
                c.err(format!("{path}.src"), format!("no {:?} node {}", m.channel, m.src));
            }
            if !known(m.dst) {
                c.err(format!("{path}.dst"), format!("no {:?} node {}", m.channel, m.dst));
            }
            if !(m.emit_time >= 0.0) {
                c.err(format!("{path}.emit_time"), "emit_time must be >= 0");
            }
            if m.payload.len() > cd.payload_cap {
                c.err(format!("{path}.payload"), format!("payload exceeds {} bytes", cd.payload_cap));
            }
        }
        CommsSpec {
            sound_speed: cd.sound_speed,
            payload_cap: cd.payload_cap,
            drop_probability: cd.drop_probability,
            acoustic,
            vlc,
            messages: cd.messages.clone(),
        }
    });

    let mut names = HashSet::new();
    let mut sensors = Vec::new();
    for (i, s) in raw.sensors.iter().enumerate() {
        let path = format!("sensors[{i}]");
        if !valid_name(&s.name) || RESERVED_NAMES.contains(&s.name.as_str()) {
            c.err(format!("{path}.name"), format!("invalid sensor name `{}`", s.name));
        } else if !names.insert(s.name.clone()) {
            c.err(format!("{path}.name"), format!("duplicate sensor name `{}`", s.name));
        }
        let ticks = rate_ticks(&mut c, &format!("{path}.rate"), s.rate, raw.base_dt);
        check_mount(&mut c, format!("{path}.mount.body"), &s.mount);
        let kind = match sensor_kind(&s.kind, &s.config) {
            Ok(k) => Some(k),
            Err(msg) => {
                let field = if SENSOR_TYPES.contains(&s.kind.as_str()) { "config" } else { "type" };
                c.err(format!("{path}.{field}"), msg);
                None
            }
        };
        if let Some(SensorKind::Usbl { transceiver, transponder, .. }) = &kind {
            let known = |id: &u32| comms.as_ref().is_some_and(|cs| cs.acoustic.iter().any(|n| n.id == *id));
            if !known(transceiver) || !known(transponder) {
                c.err(format!("{path}.config"), "USBL transceiver and transponder must be acoustic comm nodes");
            }
        }
        if let (Some(kind), true) = (kind, ticks > 0) {
            sensors.push(SensorSpec {
                name: s.name.clone(),
                kind,
                rate: s.rate,
                ticks_per_frame: ticks,
                mount: s.mount.into(),
                enabled: s.enabled,
            });
        }
    }
    for (i, d) in raw.outputs.disabled.iter().enumerate() {
        if !raw.sensors.iter().any(|s| &s.name == d) {
            c.err(format!("outputs.disabled[{i}]"), format!("unknown sensor `{d}`"));
        }
    }

    let mut thruster_names = HashSet::new();
    let mut thrusters = Vec::new();
    for (i, t) in raw.thrusters.iter().enumerate() {
        let path = format!("thrusters[{i}]");
        if !valid_name(&t.name) || !thruster_names.insert(t.name.clone()) {
            c.err(format!("{path}.name"), format!("invalid or duplicate thruster name `{}`", t.name));
        }
        check_mount(&mut c, format!("{path}.mount.body"), &t.mount);
        c.wrap(&format!("{path}.rotor"), t.rotor.validate());
        let generation = match &t.generation {
            GenerationDecl::TableCsv { table_csv } => {
                c.wrap(&format!("{path}.generation"), ThrustGeneration::table_from_csv(&base_dir.join(table_csv)))
            }
            GenerationDecl::Inline(g) => c.wrap(&format!("{path}.generation"), g.validate()).map(|_| g.clone()),
        };
        if let Some(generation) = generation {
            thrusters.push(ThrusterSpec {
                name: t.name.clone(),
                rotor: t.rotor.clone(),
                generation,
                mount: t.mount.into(),
                command: t.command,
            });
        }
    }

    let mut tether_names = HashSet::new();
    let mut tethers = Vec::new();
    for (i, t) in raw.tethers.iter().enumerate() {
        let path = format!("tethers[{i}]");
        if !valid_name(&t.name) || !tether_names.insert(t.name.clone()) {
            c.err(format!("{path}.name"), format!("invalid or duplicate tether name `{}`", t.name));
        }
        c.wrap(&format!("{path}.config"), t.config.validate());
        c.wrap(&format!("{path}.attachments"), validate_attachments(&t.attachments));
        for (j, a) in t.attachments.iter().enumerate() {
            if let seasim::tether::AttachmentMode::BodyFrame { body_id, .. } = a.mode {
                if !ids.contains(&body_id) {
                    c.err(format!("{path}.attachments[{j}]"), format!("unknown body {body_id}"));
                }
            }
        }
        let dir = Vec3::from(t.direction);
        c.check(dir.norm() > 0.0, &format!("{path}.direction"), "direction must be non-zero");
        let ticks = rate_ticks(&mut c, &format!("{path}.rate"), t.rate, raw.base_dt);
        tethers.push(TetherSpec {
            name: t.name.clone(),
            config: t.config.clone(),
            start: Vec3::from(t.start),
            direction: dir,
            attachments: t.attachments.clone(),
            ticks_per_frame: ticks,
        });
    }

    if let Some(env) = &raw.environment {
        c.check(env.mass > 0.0, "environment.mass", "mass must be > 0");
        c.check(env.control_period_ticks >= 1, "environment.control_period_ticks", "must be >= 1");
        if !bodies.contains_key(&env.vehicle_body) && !instances.iter().any(|i| i.id == env.vehicle_body) {
            c.err("environment.vehicle_body", format!("unknown body {}", env.vehicle_body));
        }
        for (i, name) in env.observations.iter().enumerate() {
            match sensors.iter().find(|s| &s.name == name) {
                None => c.err(format!("environment.observations[{i}]"), format!("unknown sensor `{name}`")),
                Some(s) if !matches!(s.kind, SensorKind::Sonar(_) | SensorKind::Thermal(_) | SensorKind::Camera { .. }) => {
                    c.err(format!("environment.observations[{i}]"), "only sonar, thermal and camera sensors can be observed")
                }
                Some(_) => {}
            }
        }
    }

    if !c.diags.is_empty() {
        return Err(c.diags);
    }
    Ok(Scenario {
        duration: raw.duration,
        base_dt: raw.base_dt,
        seed: raw.seed,
        gravity: raw.gravity,
        instances,
        bodies,
        classes: raw.scene.classes,
        lighting,
        thermal,
        sensors,
        thrusters,
        tethers,
        comms,
        output_dir: raw.outputs.directory.map(|d| base_dir.join(d)),
        disabled_outputs: raw.outputs.disabled.into_iter().collect(),
        environment: raw.environment,
        config_hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Value {
        serde_json::json!({
            "duration": 1.0,
            "base_dt": 0.01,
            "seed": 7,
            "scene": {
                "meshes": {"box": {"type": "cuboid", "size": [1, 1, 1]}},
                "materials": {"steel": {"albedo": 0.4, "roughness": 0.3, "acoustic_reflectivity": 0.8, "class_id": 1}},
                "instances": [{"id": 1, "mesh": "box", "material": "steel", "pose": {"position": [0, 0, 5]}}]
            },
            "sensors": [{
                "name": "thermal", "type": "thermal", "rate": 10,
                "config": {"intrinsics": {"width": 16, "height": 12, "focal_length": 10}, "temp_min": 0, "temp_max": 40}
            }]
        })
    }

    fn parse(v: &Value) -> Result<Scenario, Vec<Diagnostic>> {
        parse_scenario(&serde_json::to_string_pretty(v).unwrap(), Path::new("."))
    }

    #[test]
    fn minimal_is_valid() {
        let s = parse(&minimal()).unwrap();
        assert_eq!(s.sensors[0].ticks_per_frame, 10);
        assert_eq!(s.tick_count(), 100);
        assert_eq!(s.config_hash.len(), 64);
    }

    #[test]
    fn obj_meshes_load_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("tri.obj"), "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let mut v = minimal();
        v["scene"]["meshes"]["box"] = serde_json::json!({"type": "obj", "path": "tri.obj"});
        let text = serde_json::to_string(&v).unwrap();
        assert!(parse_scenario(&text, dir.path()).is_ok());
        let d = parse_scenario(&text, Path::new("/nonexistent")).unwrap_err();
        assert!(d[0].path.starts_with("scene.meshes"), "{d:?}");
    }

    #[test]
    fn rate_must_divide_base_step() {
        let mut v = minimal();
        v["base_dt"] = 0.004.into();
        v["sensors"][0]["rate"] = 30.into();
        let d = parse(&v).unwrap_err();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].path, "sensors[0].rate");
        assert!(d[0].message.contains("rate does not divide base step"));
    }

    #[test]
    fn reports_every_violation() {
        let mut v = minimal();
        v["duration"] = (-1.0).into();
        v["sensors"][0]["type"] = "lidar".into();
        v["scene"]["instances"][0]["material"] = "wood".into();
        let d = parse(&v).unwrap_err();
        let paths: Vec<_> = d.iter().map(|d| d.path.as_str()).collect();
        assert!(paths.contains(&"duration"));
        assert!(paths.contains(&"sensors[0].type"));
        assert!(paths.contains(&"scene.instances[0].material"));
        assert!(d.iter().any(|d| d.message.contains("unknown sensor type `lidar`")));
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let d = parse_scenario("{\n  \"duration\": 1.0,\n  oops\n}", Path::new(".")).unwrap_err();
        assert_eq!(d[0].line, Some(3));
        assert!(d[0].to_string().starts_with("line 3:"));
    }

    #[test]
    fn sonar_preset_with_overrides() {
        let mut v = minimal();
        v["sensors"][0] = serde_json::json!({
            "name": "fls", "type": "sonar", "rate": 5,
            "config": {"preset": "gemini_1200ik", "num_beams": 64}
        });
        let s = parse(&v).unwrap();
        match &s.sensors[0].kind {
            SensorKind::Sonar(c) => assert_eq!((c.num_beams, c.num_bins), (64, 1000)),
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn tick_counting() {
        assert_eq!(ticks_in(1.0, 0.01), 100);
        assert_eq!(ticks_in(0.3, 0.1), 3);
        assert_eq!(ticks_in(0.25, 0.1), 3);
    }
}
