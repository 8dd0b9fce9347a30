//! Step/reset environment over a free-mass vehicle and the local socket server.

use std::io::{BufReader, BufWriter};
use std::net::TcpListener;

use crate::config::{Scenario, SensorKind};
use crate::error::{RunError, RunResult};
use crate::protocol::{decode_request, encode_response, read_frame, write_frame, FieldSpec, Request, Response};
use crate::sim::{frame_values, Sim};

/// One environment session over a scenario with an `environment` block.
pub struct Environment<'a> {
    scenario: &'a Scenario,
    sim: Option<Sim<'a>>,
    observed: Vec<usize>,
}

impl<'a> Environment<'a> {
    pub fn new(scenario: &'a Scenario) -> RunResult<Self> {
        let env = scenario
            .environment
            .as_ref()
            .ok_or_else(|| RunError::Invalid("scenario has no environment block".into()))?;
        let observed = env
            .observations
            .iter()
            .map(|n| scenario.sensors.iter().position(|s| &s.name == n).expect("validated observation"))
            .collect();
        Ok(Self { scenario, sim: None, observed })
    }

    pub fn action_len(&self) -> usize {
        self.scenario.thrusters.len()
    }

    /// Field names and lengths of every observation, fixed for the session.
    pub fn obs_spec(&self) -> Vec<FieldSpec> {
        let mut fields = vec![
            FieldSpec { name: "position".into(), len: 3 },
            FieldSpec { name: "orientation_wxyz".into(), len: 4 },
            FieldSpec { name: "linear_velocity".into(), len: 3 },
            FieldSpec { name: "angular_velocity".into(), len: 3 },
        ];
        for &i in &self.observed {
            let s = &self.scenario.sensors[i];
            let len = match &s.kind {
                SensorKind::Sonar(c) => c.num_beams * c.num_bins,
                SensorKind::Thermal(c) => c.intrinsics.pixel_count(),
                SensorKind::Camera { intrinsics } => intrinsics.pixel_count(),
                _ => 0,
            };
            fields.push(FieldSpec { name: s.name.clone(), len: len as u32 });
        }
        fields
    }

    pub fn reset(&mut self, seed: u64) -> RunResult<Vec<f64>> {
        let mut sim = Sim::new(self.scenario, seed)?;
        sim.thruster_inputs.iter_mut().for_each(|u| *u = 0.0);
        let obs = observe(&mut sim, &self.observed)?;
        self.sim = Some(sim);
        Ok(obs)
    }

    /// Applies setpoints for one control period. Rejected actions leave the state untouched.
    pub fn step(&mut self, action: &[f64]) -> RunResult<(Vec<f64>, bool)> {
        let n = self.action_len();
        let Some(sim) = self.sim.as_mut() else {
            return Err(RunError::Protocol("reset before stepping".into()));
        };
        if action.len() != n {
            return Err(RunError::Protocol(format!("action has {} values, expected {n}", action.len())));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(RunError::Protocol("action values must be finite".into()));
        }
        let mut next = sim.clone();
        next.thruster_inputs.copy_from_slice(action);
        let period = self.scenario.environment.as_ref().map_or(1, |e| e.control_period_ticks);
        for _ in 0..period {
            next.advance()?;
        }
        let obs = observe(&mut next, &self.observed)?;
        let done = next.time() >= self.scenario.duration - 1e-9 * self.scenario.base_dt;
        *sim = next;
        Ok((obs, done))
    }

    pub fn handle(&mut self, req: Request) -> Response {
        let result = match req {
            Request::Reset { seed } => self.reset(seed).map(|observation| Response::Reset { observation }),
            Request::Step { action } => {
                self.step(&action).map(|(observation, done)| Response::Step { observation, done })
            }
            Request::ObsSpec => Ok(Response::ObsSpec { fields: self.obs_spec() }),
            Request::Close => Ok(Response::Closed),
        };
        result.unwrap_or_else(|e| Response::Error { message: e.to_string() })
    }
}

fn observe(sim: &mut Sim<'_>, observed: &[usize]) -> RunResult<Vec<f64>> {
    let snap = sim.snapshot()?;
    sim.service_comms(&snap)?;
    let v = sim.vehicle.as_ref().expect("environment vehicle").state;
    let q = v.pose.orientation;
    let mut obs = Vec::new();
    obs.extend(v.pose.position.iter());
    obs.extend([q.w, q.i, q.j, q.k]);
    obs.extend(v.linear_velocity.iter());
    obs.extend(v.angular_velocity.iter());
    for &i in observed {
        let frame = sim.sense(i, &snap, snap.tick)?;
        obs.extend(frame_values(&frame));
    }
    Ok(obs)
}

/// Serves sessions one connection at a time until a client sends CLOSE.
pub fn serve(scenario: &Scenario, listener: TcpListener) -> RunResult<()> {
    let mut env = Environment::new(scenario)?;
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| RunError::io("<listener>", e))?;
        stream.set_nodelay(true).ok();
        let mut reader = BufReader::new(stream.try_clone().map_err(|e| RunError::io("<socket>", e))?);
        let mut writer = BufWriter::new(stream);
        loop {
            let frame = match read_frame(&mut reader) {
                Ok(Some(f)) => f,
                Ok(None) | Err(_) => break,
            };
            let (resp, close) = match decode_request(&frame) {
                Ok(req) => {
                    let close = req == Request::Close;
                    (env.handle(req), close)
                }
                Err(e) => (Response::Error { message: e.to_string() }, false),
            };
            if write_frame(&mut writer, &encode_response(&resp)).is_err() {
                break;
            }
            if close {
                return Ok(());
            }
        }
    }
    Ok(())
}
