//! Tether cable modeled as a chain of spheres joined by damped spring segments.
//!
//! The world frame is z-up with the water surface at z = 0.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Error, Result};
use crate::num::{all_finite, Real, Vec3};
use crate::scene::RigidBodyState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct TetherConfig<T: Real> {
    pub n_spheres: usize,
    /// kg
    pub mass_per_sphere: T,
    /// m
    pub sphere_radius: T,
    /// Rest distance between adjacent sphere centers (m).
    pub segment_rest_length: T,
    /// m; must equal `(n_spheres - 1) * segment_rest_length`.
    pub total_length: T,
    /// Bending damping at each interior joint (N·m·s/rad).
    pub joint_damping: T,
    /// N/m
    pub stretch_stiffness: T,
    /// Damping of the segment length rate (N·s/m).
    #[serde(default)]
    pub axial_damping: T,
    /// kg/m³
    pub water_density: T,
    pub drag_coefficient: T,
}

impl<T: Real> TetherConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(config(msg.to_string())) };
        check(self.n_spheres >= 2, "tether n_spheres must be >= 2")?;
        check(self.mass_per_sphere > T::zero(), "tether mass_per_sphere must be > 0")?;
        check(self.sphere_radius > T::zero(), "tether sphere_radius must be > 0")?;
        check(self.segment_rest_length > T::zero(), "tether segment_rest_length must be > 0")?;
        check(self.joint_damping >= T::zero(), "tether joint_damping must be >= 0")?;
        check(self.stretch_stiffness > T::zero(), "tether stretch_stiffness must be > 0")?;
        check(self.axial_damping >= T::zero(), "tether axial_damping must be >= 0")?;
        check(self.water_density >= T::zero(), "tether water_density must be >= 0")?;
        check(self.drag_coefficient >= T::zero(), "tether drag_coefficient must be >= 0")?;
        let expected = T::lit((self.n_spheres - 1) as f64) * self.segment_rest_length;
        if !((self.total_length - expected).abs() < T::lit(1e-9)) {
            return Err(config(format!(
                "tether total_length {} does not equal (n_spheres - 1) * segment_rest_length = {expected}",
                self.total_length
            )));
        }
        Ok(())
    }

    pub fn sphere_volume(&self) -> T {
        T::lit(4.0 / 3.0) * T::pi() * self.sphere_radius.powi(3)
    }

    fn frontal_area(&self) -> T {
        T::pi() * self.sphere_radius * self.sphere_radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TetherState<T: Real> {
    pub positions: Vec<Vec3<T>>,
    pub velocities: Vec<Vec3<T>>,
}

impl<T: Real> TetherState<T> {
    /// Chain at rest laid out from `start` along the unit `direction` at rest spacing.
    pub fn straight(cfg: &TetherConfig<T>, start: Vec3<T>, direction: Vec3<T>) -> Self {
        let d = direction.normalize();
        let positions =
            (0..cfg.n_spheres).map(|i| start + d * (cfg.segment_rest_length * T::lit(i as f64))).collect();
        Self { positions, velocities: vec![Vec3::zeros(); cfg.n_spheres] }
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().chain(&self.velocities).all(all_finite)
    }

    /// Writes `sphere_index,x,y,z,vx,vy,vz` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["sphere_index", "x", "y", "z", "vx", "vy", "vz"])?;
        for (i, (p, v)) in self.positions.iter().zip(&self.velocities).enumerate() {
            let mut row = vec![i.to_string()];
            row.extend([p.x, p.y, p.z, v.x, v.y, v.z].iter().map(|c| format!("{c}")));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    First = 0,
    Last = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub enum AttachmentMode<T: Real> {
    FixedWorld { point: Vec3<T> },
    BodyFrame { body_id: u32, offset: Vec3<T> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct Attachment<T: Real> {
    pub endpoint: Endpoint,
    pub mode: AttachmentMode<T>,
}

pub fn validate_attachments<T: Real>(attachments: &[Attachment<T>]) -> Result<()> {
    for (i, a) in attachments.iter().enumerate() {
        if attachments[..i].iter().any(|b| b.endpoint == a.endpoint) {
            return Err(config(format!("tether endpoint {:?} has more than one attachment", a.endpoint)));
        }
    }
    Ok(())
}

fn anchor<T: Real>(
    mode: &AttachmentMode<T>,
    bodies: &HashMap<u32, RigidBodyState<T>>,
) -> Result<(Vec3<T>, Vec3<T>, Vec3<T>)> {
    match mode {
        AttachmentMode::FixedWorld { point } => Ok((*point, Vec3::zeros(), Vec3::zeros())),
        AttachmentMode::BodyFrame { body_id, offset } => {
            let body = bodies
                .get(body_id)
                .ok_or_else(|| config(format!("tether attached to unknown body {body_id}")))?;
            let p = body.pose.transform_point(offset);
            Ok((p, body.point_velocity(&p), body.angular_velocity))
        }
    }
}

/// Forces on every sphere at the current state, excluding constraints.
///
/// `anchor_omega` holds the angular velocity of whatever each endpoint is attached to;
/// attached endpoints act as damped joints against it.
pub fn sphere_forces<T: Real>(
    state: &TetherState<T>,
    cfg: &TetherConfig<T>,
    gravity: T,
    anchor_omega: [Option<Vec3<T>>; 2],
) -> Vec<Vec3<T>> {
    let n = cfg.n_spheres;
    let up = Vec3::z();
    let buoyancy = cfg.water_density * cfg.sphere_volume() * gravity;
    let drag_k = T::lit(0.5) * cfg.water_density * cfg.drag_coefficient * cfg.frontal_area();
    let mut f: Vec<Vec3<T>> = (0..n)
        .map(|i| {
            let mut fi = -up * (cfg.mass_per_sphere * gravity);
            if state.positions[i].z < T::zero() {
                let v = state.velocities[i];
                fi += up * buoyancy - v * (drag_k * v.norm());
            }
            fi
        })
        .collect();

    let mut seg_omega = Vec::with_capacity(n - 1);
    for s in 0..n - 1 {
        let d = state.positions[s + 1] - state.positions[s];
        let dv = state.velocities[s + 1] - state.velocities[s];
        let len = d.norm();
        if len > T::zero() {
            let u = d / len;
            let tension = cfg.stretch_stiffness * (len - cfg.segment_rest_length) + cfg.axial_damping * dv.dot(&u);
            f[s] += u * tension;
            f[s + 1] -= u * tension;
            seg_omega.push(d.cross(&dv) / (len * len));
        } else {
            seg_omega.push(Vec3::zeros());
        }
    }

    if cfg.joint_damping > T::zero() {
        // torque on each segment from its two joints, applied as a force couple
        let mut torque = vec![Vec3::zeros(); n - 1];
        for j in 1..n - 1 {
            let tau = (seg_omega[j] - seg_omega[j - 1]) * cfg.joint_damping;
            torque[j] -= tau;
            torque[j - 1] += tau;
        }
        if let Some(w) = anchor_omega[0] {
            torque[0] -= (seg_omega[0] - w) * cfg.joint_damping;
        }
        if let Some(w) = anchor_omega[1] {
            torque[n - 2] -= (seg_omega[n - 2] - w) * cfg.joint_damping;
        }
        for s in 0..n - 1 {
            let d = state.positions[s + 1] - state.positions[s];
            let len2 = d.norm_squared();
            if len2 > T::zero() {
                let couple = torque[s].cross(&d) / len2;
                f[s + 1] += couple;
                f[s] -= couple;
            }
        }
    }
    f
}

/// Advances the chain one semi-implicit Euler step.
///
/// Returns the force each attachment receives from the tether, in `attachments` order.
pub fn tether_step<T: Real>(
    state: &TetherState<T>,
    cfg: &TetherConfig<T>,
    attachments: &[Attachment<T>],
    bodies: &HashMap<u32, RigidBodyState<T>>,
    gravity: T,
    dt: T,
) -> Result<(TetherState<T>, Vec<Vec3<T>>)> {
    if !(dt > T::zero()) {
        return Err(contract(format!("dt must be > 0 (got {dt})")));
    }
    if state.positions.len() != cfg.n_spheres || state.velocities.len() != cfg.n_spheres {
        return Err(contract("tether state size does not match n_spheres"));
    }
    validate_attachments(attachments)?;
    let m = cfg.mass_per_sphere;
    let anchors =
        attachments.iter().map(|a| anchor(&a.mode, bodies)).collect::<Result<Vec<_>>>()?;
    let mut anchor_omega = [None, None];
    for (a, (_, _, w)) in attachments.iter().zip(&anchors) {
        anchor_omega[a.endpoint as usize] = Some(*w);
    }
    let forces = sphere_forces(state, cfg, gravity, anchor_omega);
    let mut next = state.clone();
    for ((v, p), f) in next.velocities.iter_mut().zip(next.positions.iter_mut()).zip(&forces) {
        *v += *f * (dt / m);
        *p += *v * dt;
    }
    let mut reactions = Vec::with_capacity(attachments.len());
    for (a, &(p, v, _)) in attachments.iter().zip(&anchors) {
        let i = match a.endpoint {
            Endpoint::First => 0,
            Endpoint::Last => cfg.n_spheres - 1,
        };
        let impulse = (v - next.velocities[i]) * m;
        next.positions[i] = p;
        next.velocities[i] = v;
        reactions.push(-impulse / dt);
    }
    if !next.is_finite() {
        return Err(Error::Contract("tether state became non-finite; reduce dt or stiffness".into()));
    }
    Ok((next, reactions))
}

/// Signed spring tension of a segment; positive when stretched.
pub fn tether_tension<T: Real>(state: &TetherState<T>, cfg: &TetherConfig<T>, segment: usize) -> Result<T> {
    if segment + 1 >= cfg.n_spheres || segment + 1 >= state.positions.len() {
        return Err(Error::Index { index: segment, len: cfg.n_spheres.saturating_sub(1) });
    }
    let len = (state.positions[segment + 1] - state.positions[segment]).norm();
    Ok(cfg.stretch_stiffness * (len - cfg.segment_rest_length))
}

/// Kinetic + gravitational + buoyancy + spring energy (J).
pub fn tether_energy<T: Real>(state: &TetherState<T>, cfg: &TetherConfig<T>, gravity: T) -> T {
    let m = cfg.mass_per_sphere;
    let b = cfg.water_density * cfg.sphere_volume() * gravity;
    let mut e = T::zero();
    for (p, v) in state.positions.iter().zip(&state.velocities) {
        e += T::lit(0.5) * m * v.norm_squared() + m * gravity * p.z;
        if p.z < T::zero() {
            e -= b * p.z;
        }
    }
    for s in 0..state.positions.len().saturating_sub(1) {
        let ext = (state.positions[s + 1] - state.positions[s]).norm() - cfg.segment_rest_length;
        e += T::lit(0.5) * cfg.stretch_stiffness * ext * ext;
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> TetherConfig<f64> {
        TetherConfig {
            n_spheres: n,
            mass_per_sphere: 1.0,
            sphere_radius: 0.05,
            segment_rest_length: 0.5,
            total_length: 0.5 * (n - 1) as f64,
            joint_damping: 0.01,
            stretch_stiffness: 1e4,
            axial_damping: 20.0,
            water_density: 0.0,
            drag_coefficient: 1.0,
        }
    }

    fn fixed(endpoint: Endpoint, point: Vec3<f64>) -> Attachment<f64> {
        Attachment { endpoint, mode: AttachmentMode::FixedWorld { point } }
    }

    fn run(
        mut s: TetherState<f64>,
        c: &TetherConfig<f64>,
        att: &[Attachment<f64>],
        steps: usize,
    ) -> (TetherState<f64>, Vec<Vec3<f64>>) {
        let mut r = vec![];
        for _ in 0..steps {
            (s, r) = tether_step(&s, c, att, &HashMap::new(), 9.81, 1e-3).unwrap();
        }
        (s, r)
    }

    #[test]
    fn config_validation() {
        assert!(cfg(5).validate().is_ok());
        assert!(TetherConfig { total_length: 3.0, ..cfg(5) }.validate().is_err());
        assert!(TetherConfig { n_spheres: 1, total_length: 0.0, ..cfg(5) }.validate().is_err());
        assert!(TetherConfig { stretch_stiffness: 0.0, ..cfg(5) }.validate().is_err());
    }

    #[test]
    fn neutral_buoyancy_is_still() {
        let mut c = cfg(6);
        c.water_density = c.mass_per_sphere / c.sphere_volume();
        let s0 = TetherState::straight(&c, Vec3::new(0.0, 0.0, -10.0), Vec3::x());
        let (s, _) = run(s0.clone(), &c, &[], 1000);
        for (a, b) in s.positions.iter().zip(&s0.positions) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(s.velocities.iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn hanging_pair_balance() {
        let c = cfg(2);
        let top = Vec3::new(0.0, 0.0, 5.0);
        let s0 = TetherState::straight(&c, top, -Vec3::z());
        let (s, r) = run(s0, &c, &[fixed(Endpoint::First, top)], 5000);
        let ext = (s.positions[1] - s.positions[0]).norm() - 0.5;
        assert!((ext - 9.81e-4).abs() < 1e-5);
        assert!((tether_tension(&s, &c, 0).unwrap() - 9.81).abs() < 1e-3);
        // the anchor carries both spheres
        assert!((r[0] - Vec3::new(0.0, 0.0, -2.0 * 9.81)).norm() < 1e-3);
    }

    #[test]
    fn tension_law() {
        let c = cfg(2);
        let s = TetherState::straight(&c, Vec3::zeros(), Vec3::x());
        assert_eq!(tether_tension(&s, &c, 0).unwrap(), 0.0);
        let mut s2 = s.clone();
        s2.positions[1].x = 0.505;
        assert!((tether_tension(&s2, &c, 0).unwrap() - 50.0).abs() < 1e-9);
        assert!(matches!(tether_tension(&s, &c, 1), Err(Error::Index { .. })));
    }

    fn sag(stiffness: f64) -> f64 {
        let mut c = cfg(9);
        c.stretch_stiffness = stiffness;
        c.axial_damping = 2.0 * (stiffness * c.mass_per_sphere).sqrt();
        c.joint_damping = 0.5;
        let a = Vec3::zeros();
        let b = Vec3::new(c.total_length, 0.0, 0.0);
        let s0 = TetherState::straight(&c, a, Vec3::x());
        let (s, _) = run(s0, &c, &[fixed(Endpoint::First, a), fixed(Endpoint::Last, b)], 10_000);
        -s.positions[4].z
    }

    #[test]
    fn taut_span_sags_less_when_stiffer() {
        let soft = sag(1e3);
        let stiff = sag(1e4);
        assert!(soft > 0.0 && stiff > 0.0);
        assert!(stiff < soft);
    }

    #[test]
    fn energy_non_increasing() {
        let mut c = cfg(8);
        c.water_density = 1000.0;
        c.joint_damping = 0.05;
        let top = Vec3::new(0.0, 0.0, -1.0);
        // released horizontally below the surface
        let s0 = TetherState::straight(&c, top, Vec3::x());
        let att = [fixed(Endpoint::First, top)];
        let mut s = s0;
        let mut e = tether_energy(&s, &c, 9.81);
        for _ in 0..10_000 {
            s = tether_step(&s, &c, &att, &HashMap::new(), 9.81, 1e-3).unwrap().0;
            let e1 = tether_energy(&s, &c, 9.81);
            assert!(e1 <= e + 1e-9 * e.abs().max(1.0), "{e1} > {e}");
            e = e1;
        }
    }

    #[test]
    fn symmetric_chain_stays_symmetric() {
        let c = cfg(7);
        let a = Vec3::new(-1.5, 0.0, 0.0);
        let b = Vec3::new(1.5, 0.0, 0.0);
        let s0 = TetherState::straight(&c, a, Vec3::x());
        let att = [fixed(Endpoint::First, a), fixed(Endpoint::Last, b)];
        let mut s = s0;
        for _ in 0..2000 {
            s = tether_step(&s, &c, &att, &HashMap::new(), 9.81, 1e-3).unwrap().0;
            for i in 0..7 {
                let (p, q) = (s.positions[i], s.positions[6 - i]);
                assert!((p.x + q.x).abs() < 1e-9 && (p.z - q.z).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn body_attachment_and_errors() {
        let c = cfg(3);
        let s = TetherState::straight(&c, Vec3::zeros(), Vec3::x());
        let att = [Attachment { endpoint: Endpoint::Last, mode: AttachmentMode::BodyFrame { body_id: 3, offset: Vec3::x() } }];
        assert!(tether_step(&s, &c, &att, &HashMap::new(), 9.81, 1e-3).is_err());
        let body = RigidBodyState {
            linear_velocity: Vec3::new(0.0, 1.0, 0.0),
            ..RigidBodyState::at_rest(crate::scene::Pose::identity())
        };
        let (n, _) = tether_step(&s, &c, &att, &HashMap::from([(3, body)]), 9.81, 1e-3).unwrap();
        assert_eq!(n.positions[2], Vec3::x());
        assert_eq!(n.velocities[2], Vec3::new(0.0, 1.0, 0.0));
        let dup = [fixed(Endpoint::First, Vec3::zeros()), fixed(Endpoint::First, Vec3::x())];
        assert!(tether_step(&s, &c, &dup, &HashMap::new(), 9.81, 1e-3).is_err());
        assert!(tether_step(&s, &c, &[], &HashMap::new(), 9.81, 0.0).is_err());
    }

    #[test]
    fn csv_dump() {
        let c = cfg(3);
        let s = TetherState::straight(&c, Vec3::zeros(), Vec3::x());
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().nth(2).unwrap(), "1,0.5,0,0,0,0,0");
    }
}
