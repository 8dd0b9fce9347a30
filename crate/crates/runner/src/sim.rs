//! Shared simulation clock driving trajectories, actuators, channels and sensors.

use std::collections::HashMap;

use seasim::annotation;
use seasim::comms::{usbl_query, AcousticMessage, ChannelScheduler, UsblFix, UsblNoise};
use seasim::event_camera::{Event, EventCamera};
use seasim::optical_flow::{render_flow, FlowField};
use seasim::rng::{mix, name_key};
use seasim::scene::{render_buffers, Instance, Pose, RenderBuffers, RigidBodyState, Scene};
use seasim::sonar::{sonar_scan, SonarImage};
use seasim::tether::{tether_step, TetherState};
use seasim::thermal::{render_thermal, ThermalConfig, ThermalImage};
use seasim::thrusters::Thruster;
use seasim::Vec3;

use crate::config::{ChannelDecl, Scenario, SensorKind, SensorSpec};
use crate::error::RunResult;

const KEY_COMMS: u64 = 0xC0;

/// Free point mass driven by the thrusters mounted on it; orientation is held.
#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub body: u32,
    pub mass: f64,
    pub state: RigidBodyState<f64>,
}

/// Every body state and the posed scene at one tick.
pub struct Snapshot {
    pub t: f64,
    pub tick: u64,
    pub states: HashMap<u32, RigidBodyState<f64>>,
    pub scene: Scene<f64>,
}

impl Snapshot {
    pub fn body(&self, id: u32) -> RigidBodyState<f64> {
        self.states.get(&id).copied().unwrap_or_else(|| RigidBodyState::at_rest(Pose::identity()))
    }

    pub fn mounted(&self, body: u32, local: &Pose<f64>) -> RigidBodyState<f64> {
        self.body(body).attached(local)
    }
}

/// One sensor reading held in memory.
#[derive(Debug, Clone)]
pub enum SensorFrame {
    Camera(RenderBuffers<f64>),
    Thermal(ThermalImage<f64>),
    Sonar(SonarImage<f64>),
    Events(Vec<Event<f64>>),
    Flow(FlowField<f64>),
    Annotation(RenderBuffers<f64>),
    Usbl(Option<UsblFix<f64>>),
}

/// Per-thruster reading recorded every tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrusterReading {
    pub input: f64,
    pub omega: f64,
    pub thrust: f64,
    pub torque: f64,
}

/// Mutable simulation owned by a single run or environment session.
#[derive(Clone)]
pub struct Sim<'a> {
    pub scenario: &'a Scenario,
    pub seed: u64,
    tick: u64,
    thrusters: Vec<Thruster<f64>>,
    pub thruster_inputs: Vec<f64>,
    pub thruster_readings: Vec<ThrusterReading>,
    pub tethers: Vec<TetherState<f64>>,
    pub scheduler: Option<ChannelScheduler<f64>>,
    message_order: Vec<usize>,
    next_message: usize,
    sonar_prev: HashMap<usize, SonarImage<f64>>,
    event_cameras: HashMap<usize, EventCamera<f64>>,
    pub vehicle: Option<Vehicle>,
}

pub fn sensor_seed(seed: u64, name: &str) -> u64 {
    mix(seed, &[name_key(name)])
}

impl<'a> Sim<'a> {
    pub fn new(scenario: &'a Scenario, seed: u64) -> RunResult<Self> {
        let thrusters = scenario
            .thrusters
            .iter()
            .map(|t| Thruster::new(t.rotor.clone(), t.generation.clone()))
            .collect::<seasim::Result<Vec<_>>>()?;
        let thruster_inputs = scenario.thrusters.iter().map(|t| t.command.at(0.0)).collect();
        let thruster_readings =
            vec![ThrusterReading { input: 0.0, omega: 0.0, thrust: 0.0, torque: 0.0 }; scenario.thrusters.len()];
        let tethers = scenario.tethers.iter().map(|t| TetherState::straight(&t.config, t.start, t.direction)).collect();
        let scheduler = scenario
            .comms
            .as_ref()
            .map(|c| ChannelScheduler::new(c.sound_speed, c.payload_cap, c.drop_probability, mix(seed, &[KEY_COMMS])))
            .transpose()?;
        let mut message_order: Vec<usize> = (0..scenario.comms.as_ref().map_or(0, |c| c.messages.len())).collect();
        if let Some(c) = &scenario.comms {
            message_order.sort_by(|&a, &b| c.messages[a].emit_time.total_cmp(&c.messages[b].emit_time));
        }
        let mut event_cameras = HashMap::new();
        for (i, s) in scenario.sensors.iter().enumerate() {
            if let SensorKind::EventCamera { intrinsics, config } = &s.kind {
                let mut cfg = config.clone();
                cfg.noise_seed = sensor_seed(seed, &s.name);
                event_cameras.insert(i, EventCamera::new(cfg, intrinsics.width, intrinsics.height)?);
            }
        }
        let vehicle = scenario.environment.as_ref().map(|e| Vehicle {
            body: e.vehicle_body,
            mass: e.mass,
            state: kinematic_state(scenario, e.vehicle_body, 0.0),
        });
        Ok(Self {
            scenario,
            seed,
            tick: 0,
            thrusters,
            thruster_inputs,
            thruster_readings,
            tethers,
            scheduler,
            message_order,
            next_message: 0,
            sonar_prev: HashMap::new(),
            event_cameras,
            vehicle,
        })
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.scenario.base_dt
    }

    /// Body states at the current tick, without building a scene.
    pub fn states(&self) -> HashMap<u32, RigidBodyState<f64>> {
        let t = self.time();
        let sc = self.scenario;
        let mut states: HashMap<u32, RigidBodyState<f64>> =
            sc.instances.iter().map(|i| (i.id, i.motion.sample(t))).collect();
        states.extend(sc.bodies.iter().map(|(&id, m)| (id, m.sample(t))));
        if let Some(v) = &self.vehicle {
            states.insert(v.body, v.state);
        }
        states
    }

    pub fn snapshot(&self) -> RunResult<Snapshot> {
        let states = self.states();
        let instances = self
            .scenario
            .instances
            .iter()
            .map(|i| Instance {
                id: i.id,
                mesh: i.mesh.clone(),
                material: i.material.clone(),
                pose: states[&i.id].pose,
            })
            .collect();
        Ok(Snapshot { t: self.time(), tick: self.tick, states, scene: Scene::new(instances)? })
    }

    /// Advances every dynamic subsystem by one base step.
    pub fn advance(&mut self) -> RunResult<()> {
        let sc = self.scenario;
        let dt = sc.base_dt;
        let states = self.states();
        let body_of = |id: u32| states.get(&id).copied().unwrap_or_else(|| RigidBodyState::at_rest(Pose::identity()));
        let mut force = Vec3::zeros();
        for (i, spec) in sc.thrusters.iter().enumerate() {
            let mount = body_of(spec.mount.body).attached(&spec.mount.pose);
            let axis = mount.pose.transform_vector(&Vec3::x());
            let advance_velocity = mount.linear_velocity.dot(&axis);
            let input = self.thruster_inputs[i];
            let out = self.thrusters[i].step(input, advance_velocity, dt)?;
            self.thruster_readings[i] =
                ThrusterReading { input, omega: out.state.omega, thrust: out.thrust, torque: out.torque };
            if self.vehicle.as_ref().is_some_and(|v| v.body == spec.mount.body) {
                force += axis * out.thrust;
            }
        }
        for (i, spec) in sc.tethers.iter().enumerate() {
            let (next, _) = tether_step(&self.tethers[i], &spec.config, &spec.attachments, &states, sc.gravity, dt)?;
            self.tethers[i] = next;
        }
        if let Some(v) = &mut self.vehicle {
            v.state.linear_velocity += force * (dt / v.mass);
            v.state.pose.position += v.state.linear_velocity * dt;
        }
        self.tick += 1;
        let t = self.time();
        for (i, spec) in sc.thrusters.iter().enumerate() {
            if sc.environment.is_none() {
                self.thruster_inputs[i] = spec.command.at(t);
            }
        }
        Ok(())
    }

    /// Sends every declared message whose emit time has arrived and collects deliveries.
    pub fn service_comms(&mut self, snap: &Snapshot) -> RunResult<()> {
        let (Some(comms), Some(sched)) = (&self.scenario.comms, &mut self.scheduler) else {
            return Ok(());
        };
        let horizon = snap.t + 0.5 * self.scenario.base_dt;
        while let Some(&mi) = self.message_order.get(self.next_message) {
            let m = &comms.messages[mi];
            if m.emit_time >= horizon {
                break;
            }
            let payload = m.payload.as_bytes().to_vec();
            let msg = AcousticMessage::new(m.src, m.dst, payload, m.emit_time, comms.payload_cap)?;
            match m.channel {
                ChannelDecl::Acoustic => {
                    let tx = comms.acoustic.iter().find(|n| n.id == m.src).expect("validated node");
                    let rx = comms.acoustic.iter().find(|n| n.id == m.dst).expect("validated node");
                    let tp = snap.mounted(tx.mount.body_id, &tx.mount.local).pose;
                    let rp = snap.mounted(rx.mount.body_id, &rx.mount.local).pose;
                    sched.send_acoustic(&snap.scene, tx, &tp, rx, &rp, msg)?;
                }
                ChannelDecl::Vlc => {
                    let tx = comms.vlc.iter().find(|n| n.id == m.src).expect("validated node");
                    let rx = comms.vlc.iter().find(|n| n.id == m.dst).expect("validated node");
                    let tp = snap.mounted(tx.mount.body_id, &tx.mount.local).pose;
                    let rp = snap.mounted(rx.mount.body_id, &rx.mount.local).pose;
                    sched.send_vlc(&snap.scene, tx, &tp, rx, &rp, msg)?;
                }
            }
            self.next_message += 1;
        }
        sched.poll(snap.t)?;
        Ok(())
    }

    /// Samples sensor `index` against `snap`.
    pub fn sense(&mut self, index: usize, snap: &Snapshot, frame_index: u64) -> RunResult<SensorFrame> {
        let sc = self.scenario;
        let spec: &SensorSpec = &sc.sensors[index];
        let mount = snap.mounted(spec.mount.body, &spec.mount.pose);
        let seed = sensor_seed(self.seed, &spec.name);
        Ok(match &spec.kind {
            SensorKind::Camera { intrinsics } => {
                SensorFrame::Camera(render_buffers(&snap.scene, &mount.pose, intrinsics, &sc.lighting)?)
            }
            SensorKind::Annotation { intrinsics, .. } => {
                SensorFrame::Annotation(render_buffers(&snap.scene, &mount.pose, intrinsics, &sc.lighting)?)
            }
            SensorKind::Thermal(cfg) => {
                let cfg = ThermalConfig { noise_seed: seed, ..cfg.clone() };
                SensorFrame::Thermal(render_thermal(&snap.scene, &mount.pose, &cfg, &sc.thermal, frame_index)?)
            }
            SensorKind::Sonar(cfg) => {
                let mut cfg = cfg.clone();
                cfg.noise_seed = seed;
                let img = sonar_scan(&snap.scene, &mount.pose, &cfg, self.sonar_prev.get(&index), frame_index, snap.t)?;
                self.sonar_prev.insert(index, img.clone());
                SensorFrame::Sonar(img)
            }
            SensorKind::EventCamera { intrinsics, .. } => {
                let buffers = render_buffers(&snap.scene, &mount.pose, intrinsics, &sc.lighting)?;
                let cam = self.event_cameras.get_mut(&index).expect("event camera state");
                SensorFrame::Events(cam.process(&buffers.luminance, snap.t)?)
            }
            SensorKind::OpticalFlow { intrinsics } => {
                SensorFrame::Flow(render_flow(&snap.scene, &mount, intrinsics, &snap.states)?)
            }
            SensorKind::Usbl { transceiver, transponder, noise } => {
                let comms = sc.comms.as_ref().expect("validated comms");
                let tr = comms.acoustic.iter().find(|n| n.id == *transceiver).expect("validated node");
                let tp = comms.acoustic.iter().find(|n| n.id == *transponder).expect("validated node");
                let tr_pose = snap.mounted(tr.mount.body_id, &tr.mount.local).pose;
                let tp_pose = snap.mounted(tp.mount.body_id, &tp.mount.local).pose;
                let noise = UsblNoise { seed, ..*noise };
                SensorFrame::Usbl(usbl_query(
                    &snap.scene,
                    tr,
                    &tr_pose,
                    tp,
                    &tp_pose,
                    &noise,
                    comms.sound_speed,
                    frame_index,
                )?)
            }
        })
    }
}

fn kinematic_state(sc: &Scenario, id: u32, t: f64) -> RigidBodyState<f64> {
    sc.instances
        .iter()
        .find(|i| i.id == id)
        .map(|i| i.motion.sample(t))
        .or_else(|| sc.bodies.get(&id).map(|m| m.sample(t)))
        .unwrap_or_else(|| RigidBodyState::at_rest(Pose::identity()))
}

/// Flattens the observable part of a sensor frame; camera misses read as 0.
pub fn frame_values(frame: &SensorFrame) -> Vec<f64> {
    match frame {
        SensorFrame::Sonar(img) => img.intensities.clone(),
        SensorFrame::Thermal(img) => img.temperatures.clone(),
        SensorFrame::Camera(b) | SensorFrame::Annotation(b) => {
            b.range.iter().map(|&r| if r.is_finite() { r } else { 0.0 }).collect()
        }
        _ => Vec::new(),
    }
}

/// Boxes kept by an annotation sensor.
pub fn annotation_boxes(spec: &SensorSpec, buffers: &RenderBuffers<f64>) -> Vec<annotation::YoloBox> {
    match spec.kind {
        SensorKind::Annotation { min_pixels, .. } => annotation::bounding_boxes_min_pixels(buffers, min_pixels),
        _ => annotation::bounding_boxes(buffers),
    }
}
