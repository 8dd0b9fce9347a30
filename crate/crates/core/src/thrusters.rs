//! Modular thruster model: rotor dynamics composed with thrust generation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Result};
use crate::num::Real;

const MIN_REV_PER_SEC: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub enum RotorDynamics<T: Real> {
    /// Input is the commanded speed (rad/s).
    ZeroOrder,
    /// Input is the commanded speed (rad/s).
    FirstOrder { tau: T },
    /// Input is shaft torque (N·m).
    Yoerger { alpha: T, beta: T },
    /// Input is motor voltage (V).
    Bessa { inertia: T, k_linear: T, k_quad: T, k_torque: T, resistance: T },
    /// Input is the speed setpoint (rad/s).
    MechanicalPi { inertia: T, kp: T, ki: T, integral_limit: T },
}

fn positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.finite() {
        Ok(())
    } else {
        Err(config(format!("{name} must be > 0 (got {v})")))
    }
}

fn non_negative<T: Real>(name: &str, v: T) -> Result<()> {
    if v >= T::zero() && v.finite() {
        Ok(())
    } else {
        Err(config(format!("{name} must be >= 0 (got {v})")))
    }
}

impl<T: Real> RotorDynamics<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RotorDynamics::ZeroOrder => Ok(()),
            RotorDynamics::FirstOrder { tau } => positive("tau", tau),
            RotorDynamics::Yoerger { alpha, beta } => {
                positive("alpha", alpha)?;
                non_negative("beta", beta)
            }
            RotorDynamics::Bessa { inertia, k_linear, k_quad, k_torque, resistance } => {
                positive("inertia", inertia)?;
                non_negative("k_linear", k_linear)?;
                non_negative("k_quad", k_quad)?;
                positive("k_torque", k_torque)?;
                positive("resistance", resistance)
            }
            RotorDynamics::MechanicalPi { inertia, kp, ki, integral_limit } => {
                positive("inertia", inertia)?;
                positive("kp", kp)?;
                non_negative("ki", ki)?;
                positive("integral_limit", integral_limit)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub enum ThrustGeneration<T: Real> {
    Quadratic { ct: T },
    Deadband { ct_fwd: T, ct_rev: T, deadband_lo: T, deadband_hi: T },
    /// Rows of `(omega, thrust)` with strictly increasing omega.
    LinearInterp { table: Vec<(T, T)> },
    FluidDynamics {
        rho: T,
        diameter: T,
        kt0: T,
        /// Reverse-rotation `kt0`; defaults to `kt0`.
        #[serde(default)]
        kt0_rev: Option<T>,
        kt_j: T,
        kq: T,
    },
}

impl<T: Real> ThrustGeneration<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            ThrustGeneration::Quadratic { ct } => {
                if !ct.finite() {
                    return Err(config("ct must be finite"));
                }
                Ok(())
            }
            ThrustGeneration::Deadband { deadband_lo, deadband_hi, ct_fwd, ct_rev } => {
                if !(*deadband_lo <= T::zero() && *deadband_hi >= T::zero()) {
                    return Err(config("deadband must satisfy deadband_lo <= 0 <= deadband_hi"));
                }
                if !(ct_fwd.finite() && ct_rev.finite()) {
                    return Err(config("deadband coefficients must be finite"));
                }
                Ok(())
            }
            ThrustGeneration::LinearInterp { table } => {
                if table.len() < 2 {
                    return Err(config("thrust table needs at least 2 rows"));
                }
                if table.iter().any(|(w, t)| !w.finite() || !t.finite()) {
                    return Err(config("thrust table values must be finite"));
                }
                if table.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(config("thrust table omega must be strictly increasing"));
                }
                Ok(())
            }
            ThrustGeneration::FluidDynamics { rho, diameter, .. } => {
                positive("rho", *rho)?;
                positive("diameter", *diameter)
            }
        }
    }

    /// Reads a two-column `omega,thrust` CSV; a non-numeric first row is treated as a header.
    pub fn table_from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
        let mut table = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let parse = |c: usize| rec.get(c).and_then(|s| s.parse::<f64>().ok());
            match (rec.len(), parse(0), parse(1)) {
                (2, Some(w), Some(t)) => table.push((T::lit(w), T::lit(t))),
                _ if i == 0 => continue,
                _ => {
                    return Err(crate::Error::Parse { line: i + 1, msg: "expected two numeric columns".into() });
                }
            }
        }
        let gen = ThrustGeneration::LinearInterp { table };
        gen.validate()?;
        Ok(gen)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThrusterState<T: Real> {
    /// rad/s
    pub omega: T,
    /// N·m·s, used by the PI controller only.
    pub pi_integral: T,
}

fn rk4<T: Real>(y: T, dt: T, f: impl Fn(T) -> T) -> T {
    let half = T::lit(0.5) * dt;
    let k1 = f(y);
    let k2 = f(y + half * k1);
    let k3 = f(y + half * k2);
    let k4 = f(y + dt * k3);
    y + dt / T::lit(6.0) * (k1 + T::lit(2.0) * (k2 + k3) + k4)
}

/// Advances the rotor by one fixed RK4 step.
///
/// `load_torque` only enters the PI variant; the other variants carry their own load terms.
pub fn rotor_step<T: Real>(
    dynamics: &RotorDynamics<T>,
    state: ThrusterState<T>,
    input: T,
    load_torque: T,
    dt: T,
) -> Result<ThrusterState<T>> {
    if !(dt > T::zero()) {
        return Err(contract(format!("dt must be > 0 (got {dt})")));
    }
    let w = state.omega;
    Ok(match *dynamics {
        RotorDynamics::ZeroOrder => ThrusterState { omega: input, ..state },
        RotorDynamics::FirstOrder { tau } => {
            ThrusterState { omega: rk4(w, dt, |w| (input - w) / tau), ..state }
        }
        RotorDynamics::Yoerger { alpha, beta } => {
            ThrusterState { omega: rk4(w, dt, |w| (input - beta * w * w.abs()) / alpha), ..state }
        }
        RotorDynamics::Bessa { inertia, k_linear, k_quad, k_torque, resistance } => {
            let f = |w: T| {
                let motor = k_torque / resistance * (input - k_torque * w);
                (motor - k_linear * w - k_quad * w * w.abs()) / inertia
            };
            ThrusterState { omega: rk4(w, dt, f), ..state }
        }
        RotorDynamics::MechanicalPi { inertia, kp, ki, integral_limit } => {
            let integral =
                (state.pi_integral + ki * (input - w) * dt).clamp(-integral_limit, integral_limit);
            let omega = rk4(w, dt, |w| (kp * (input - w) + integral - load_torque) / inertia);
            ThrusterState { omega, pi_integral: integral }
        }
    })
}

/// Thrust (N) and induced shaft torque (N·m) at rotor speed `omega`.
pub fn thrust_and_torque<T: Real>(gen: &ThrustGeneration<T>, omega: T, advance_velocity: T) -> (T, T) {
    match gen {
        ThrustGeneration::Quadratic { ct } => (*ct * omega * omega.abs(), T::zero()),
        ThrustGeneration::Deadband { ct_fwd, ct_rev, deadband_lo, deadband_hi } => {
            let t = if omega > *deadband_hi {
                let d = omega - *deadband_hi;
                *ct_fwd * d * d
            } else if omega < *deadband_lo {
                let d = omega - *deadband_lo;
                -*ct_rev * d * d
            } else {
                T::zero()
            };
            (t, T::zero())
        }
        ThrustGeneration::LinearInterp { table } => (interpolate(table, omega), T::zero()),
        ThrustGeneration::FluidDynamics { rho, diameter, kt0, kt0_rev, kt_j, kq } => {
            let n = omega / T::two_pi();
            let j = if n.abs() > T::lit(MIN_REV_PER_SEC) { advance_velocity / (n * *diameter) } else { T::zero() };
            let base = if n < T::zero() { kt0_rev.unwrap_or(*kt0) } else { *kt0 };
            let kt = base - *kt_j * j;
            let d4 = diameter.powi(4);
            let nn = n * n.abs();
            (*rho * d4 * kt * nn, *rho * d4 * *diameter * *kq * nn)
        }
    }
}

fn interpolate<T: Real>(table: &[(T, T)], x: T) -> T {
    let (first, last) = (table[0], table[table.len() - 1]);
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let i = table.partition_point(|r| r.0 <= x);
    let (a, b) = (table[i - 1], table[i]);
    if x == a.0 {
        return a.1;
    }
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

/// A thruster instance owning its rotor state and the last generated torque.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct Thruster<T: Real> {
    pub rotor: RotorDynamics<T>,
    pub generation: ThrustGeneration<T>,
    #[serde(default)]
    pub state: ThrusterState<T>,
    #[serde(default)]
    pub last_torque: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrusterOutput<T: Real> {
    pub state: ThrusterState<T>,
    pub thrust: T,
    pub torque: T,
}

/// One combined step: rotor update against the previous torque, then generation at the new speed.
pub fn thruster_step<T: Real>(
    rotor: &RotorDynamics<T>,
    gen: &ThrustGeneration<T>,
    state: ThrusterState<T>,
    previous_torque: T,
    input: T,
    advance_velocity: T,
    dt: T,
) -> Result<ThrusterOutput<T>> {
    let state = rotor_step(rotor, state, input, previous_torque, dt)?;
    let (thrust, torque) = thrust_and_torque(gen, state.omega, advance_velocity);
    Ok(ThrusterOutput { state, thrust, torque })
}

impl<T: Real> Thruster<T> {
    pub fn new(rotor: RotorDynamics<T>, generation: ThrustGeneration<T>) -> Result<Self> {
        rotor.validate()?;
        generation.validate()?;
        Ok(Self { rotor, generation, state: ThrusterState::default(), last_torque: T::zero() })
    }

    pub fn step(&mut self, input: T, advance_velocity: T, dt: T) -> Result<ThrusterOutput<T>> {
        let out =
            thruster_step(&self.rotor, &self.generation, self.state, self.last_torque, input, advance_velocity, dt)?;
        self.state = out.state;
        self.last_torque = out.torque;
        Ok(out)
    }

    pub fn reset(&mut self) {
        self.state = ThrusterState::default();
        self.last_torque = T::zero();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseSample<T: Real> {
    pub t: T,
    pub input: T,
    pub omega: T,
    pub thrust: T,
    pub torque: T,
}

/// Steps a fresh thruster over `[0, duration)` with a time-varying input; the first row is the initial state.
pub fn simulate_response<T: Real>(
    thruster: &Thruster<T>,
    input: impl Fn(T) -> T,
    advance_velocity: T,
    duration: T,
    dt: T,
) -> Result<Vec<ResponseSample<T>>> {
    if !(dt > T::zero()) || !(duration >= T::zero()) {
        return Err(contract("dt must be > 0 and duration >= 0"));
    }
    let mut th = thruster.clone();
    th.reset();
    let steps = (duration / dt).round().to_usize().unwrap_or(0);
    let mut out = Vec::with_capacity(steps + 1);
    let (thrust, torque) = thrust_and_torque(&th.generation, T::zero(), advance_velocity);
    out.push(ResponseSample { t: T::zero(), input: input(T::zero()), omega: T::zero(), thrust, torque });
    for k in 0..steps {
        let t = T::lit(k as f64) * dt;
        let u = input(t);
        let o = th.step(u, advance_velocity, dt)?;
        out.push(ResponseSample { t: t + dt, input: u, omega: o.state.omega, thrust: o.thrust, torque: o.torque });
    }
    Ok(out)
}

/// Writes `t,input,omega,thrust,torque` rows.
pub fn write_response_csv<T: Real, W: std::io::Write>(samples: &[ResponseSample<T>], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "input", "omega", "thrust", "torque"])?;
    for s in samples {
        wr.write_record([s.t, s.input, s.omega, s.thrust, s.torque].map(|v| format!("{v}")))?;
    }
    wr.flush()?;
    Ok(())
}
