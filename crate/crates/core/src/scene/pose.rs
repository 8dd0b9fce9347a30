//! Rigid poses, body states and kinematic trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::num::{all_finite, Quat, Real, Vec3};

/// Position (m) and orientation of a frame expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct Pose<T: Real> {
    pub position: Vec3<T>,
    pub orientation: Quat<T>,
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Pose<T> {
    pub fn new(position: Vec3<T>, orientation: Quat<T>) -> Self {
        Self { position, orientation }
    }

    pub fn identity() -> Self {
        Self::new(Vec3::zeros(), Quat::identity())
    }

    pub fn from_position(position: Vec3<T>) -> Self {
        Self::new(position, Quat::identity())
    }

    /// Checks the unit-quaternion invariant.
    pub fn validate(&self) -> Result<()> {
        let tol = if std::mem::size_of::<T>() < 8 { 1e-6 } else { 1e-9 };
        if (self.orientation.quaternion().norm().as_f64() - 1.0).abs() > tol {
            return Err(config("pose orientation is not a unit quaternion"));
        }
        if !all_finite(&self.position) {
            return Err(config("pose position is not finite"));
        }
        Ok(())
    }

    pub fn transform_point(&self, p: &Vec3<T>) -> Vec3<T> {
        self.orientation * p + self.position
    }

    pub fn transform_vector(&self, v: &Vec3<T>) -> Vec3<T> {
        self.orientation * v
    }

    pub fn inverse_transform_point(&self, p: &Vec3<T>) -> Vec3<T> {
        self.orientation.inverse_transform_vector(&(p - self.position))
    }

    pub fn inverse_transform_vector(&self, v: &Vec3<T>) -> Vec3<T> {
        self.orientation.inverse_transform_vector(v)
    }

    /// `self ∘ local`: places a frame given relative to `self` into the world.
    pub fn compose(&self, local: &Pose<T>) -> Pose<T> {
        Pose::new(self.transform_point(&local.position), self.orientation * local.orientation)
    }

    pub fn inverse(&self) -> Pose<T> {
        let inv = self.orientation.inverse();
        Pose::new(-(inv * self.position), inv)
    }
}

/// Instantaneous kinematic state of a rigid body.
///
/// `linear_velocity` is the velocity of the center of rotation and
/// `angular_velocity` is expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState<T: Real> {
    pub pose: Pose<T>,
    pub linear_velocity: Vec3<T>,
    pub angular_velocity: Vec3<T>,
    /// Body-frame location of the center of rotation.
    pub center_of_rotation: Vec3<T>,
}

impl<T: Real> RigidBodyState<T> {
    pub fn at_rest(pose: Pose<T>) -> Self {
        Self {
            pose,
            linear_velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
            center_of_rotation: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.pose.position)
            && self.pose.orientation.coords.iter().all(|c| c.finite())
            && all_finite(&self.linear_velocity)
            && all_finite(&self.angular_velocity)
            && all_finite(&self.center_of_rotation)
    }

    pub fn center_world(&self) -> Vec3<T> {
        self.pose.transform_point(&self.center_of_rotation)
    }

    /// World velocity of a material point of this body located at `p`.
    pub fn point_velocity(&self, p: &Vec3<T>) -> Vec3<T> {
        self.linear_velocity + self.angular_velocity.cross(&(p - self.center_world()))
    }

    /// State of a frame rigidly attached to this body at `local`.
    pub fn attached(&self, local: &Pose<T>) -> RigidBodyState<T> {
        let pose = self.pose.compose(local);
        RigidBodyState {
            pose,
            linear_velocity: self.point_velocity(&pose.position),
            angular_velocity: self.angular_velocity,
            center_of_rotation: Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Hold,
    #[default]
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct Waypoint<T: Real> {
    pub t: T,
    pub pose: Pose<T>,
}

/// Time-ordered list of poses a body follows without dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTrajectory<T: Real> {
    waypoints: Vec<Waypoint<T>>,
    interpolation: Interpolation,
}

impl<T: Real> KinematicTrajectory<T> {
    pub fn new(waypoints: Vec<Waypoint<T>>, interpolation: Interpolation) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(config("trajectory needs at least one waypoint"));
        }
        for (i, w) in waypoints.iter().enumerate() {
            w.pose.validate().map_err(|e| config(format!("waypoint {i}: {e}")))?;
            if !w.t.finite() {
                return Err(config(format!("waypoint {i}: time is not finite")));
            }
        }
        if let Some(i) = waypoints.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(config(format!("waypoint times not strictly increasing at index {}", i + 1)));
        }
        Ok(Self { waypoints, interpolation })
    }

    pub fn stationary(pose: Pose<T>) -> Self {
        Self {
            waypoints: vec![Waypoint { t: T::zero(), pose }],
            interpolation: Interpolation::Hold,
        }
    }

    pub fn waypoints(&self) -> &[Waypoint<T>] {
        &self.waypoints
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Samples pose and analytic velocities at time `t`.
    pub fn sample(&self, t: T) -> RigidBodyState<T> {
        let first = &self.waypoints[0];
        let last = self.waypoints.last().unwrap();
        if t <= first.t {
            return RigidBodyState::at_rest(first.pose);
        }
        if t >= last.t {
            return RigidBodyState::at_rest(last.pose);
        }
        // index of the last waypoint with time <= t
        let i = self.waypoints.partition_point(|w| w.t <= t) - 1;
        let (a, b) = (&self.waypoints[i], &self.waypoints[i + 1]);
        match self.interpolation {
            Interpolation::Hold => RigidBodyState::at_rest(a.pose),
            Interpolation::Linear => {
                let span = b.t - a.t;
                let s = (t - a.t) / span;
                let lin_vel = (b.pose.position - a.pose.position) / span;
                let rotvec = relative_rotation(&a.pose.orientation, &b.pose.orientation);
                let orientation = Quat::from_scaled_axis(rotvec * s) * a.pose.orientation;
                RigidBodyState {
                    pose: Pose::new(a.pose.position + (b.pose.position - a.pose.position) * s, orientation),
                    linear_velocity: lin_vel,
                    angular_velocity: rotvec / span,
                    center_of_rotation: Vec3::zeros(),
                }
            }
        }
    }
}

/// World-frame rotation vector taking `from` to `to` along the shortest arc.
fn relative_rotation<T: Real>(from: &Quat<T>, to: &Quat<T>) -> Vec3<T> {
    let mut rel = to * from.inverse();
    if rel.w < T::zero() {
        rel = Quat::new_unchecked(-rel.into_inner());
    }
    rel.scaled_axis()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn wp(t: f64, x: f64, yaw: f64) -> Waypoint<f64> {
        Waypoint {
            t,
            pose: Pose::new(Vec3::new(x, 0.0, 0.0), Quat::from_euler_angles(0.0, 0.0, yaw)),
        }
    }

    #[test]
    fn single_waypoint_is_static() {
        let tr = KinematicTrajectory::new(vec![wp(0.5, 3.0, 0.2)], Interpolation::Linear).unwrap();
        for t in [-1.0, 0.5, 2.0, 100.0] {
            let s = tr.sample(t);
            assert_eq!(s.pose, tr.waypoints()[0].pose);
            assert_eq!(s.linear_velocity, Vec3::zeros());
            assert_eq!(s.angular_velocity, Vec3::zeros());
        }
    }

    #[test]
    fn linear_position_and_velocity() {
        let tr = KinematicTrajectory::new(vec![wp(0.0, 0.0, 0.0), wp(2.0, 4.0, 0.0)], Interpolation::Linear).unwrap();
        let s = tr.sample(1.0);
        assert!((s.pose.position.x - 2.0).abs() < 1e-12);
        assert!((s.linear_velocity - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(tr.sample(3.0).linear_velocity, Vec3::zeros());
        assert_eq!(tr.sample(-1.0).pose.position.x, 0.0);
    }

    #[test]
    fn yaw_slerp_and_rate() {
        let tr = KinematicTrajectory::new(vec![wp(0.0, 0.0, 0.0), wp(1.0, 0.0, FRAC_PI_2)], Interpolation::Linear).unwrap();
        let s = tr.sample(0.5);
        let (_, _, yaw) = s.pose.orientation.euler_angles();
        assert!((yaw - FRAC_PI_4).abs() < 1e-12);
        assert!((s.angular_velocity.norm() - FRAC_PI_2).abs() < 1e-12);

        // slerp derivative oracle: finite difference of the sampled orientation
        let h = 1e-6;
        let q0 = tr.sample(0.5 - h).pose.orientation;
        let q1 = tr.sample(0.5 + h).pose.orientation;
        let fd = (q1 * q0.inverse()).scaled_axis() / (2.0 * h);
        assert!((fd - s.angular_velocity).norm() < 1e-6);
    }

    #[test]
    fn hold_uses_last_waypoint_before_t() {
        let tr = KinematicTrajectory::new(vec![wp(0.0, 1.0, 0.0), wp(1.0, 5.0, 0.0)], Interpolation::Hold).unwrap();
        assert_eq!(tr.sample(0.99).pose.position.x, 1.0);
        assert_eq!(tr.sample(1.0).pose.position.x, 5.0);
        assert_eq!(tr.sample(0.5).linear_velocity, Vec3::zeros());
    }

    #[test]
    fn continuity_at_waypoints() {
        let tr = KinematicTrajectory::new(
            vec![wp(0.0, 0.0, 0.0), wp(1.0, 2.0, 0.5), wp(3.0, -1.0, -0.4)],
            Interpolation::Linear,
        )
        .unwrap();
        let eps = 1e-10;
        let before = tr.sample(1.0 - eps).pose;
        let at = tr.sample(1.0).pose;
        assert!((before.position - at.position).norm() < 1e-9);
        assert!(before.orientation.angle_to(&at.orientation) < 1e-9);
        assert!((at.position.x - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unordered_waypoints() {
        assert!(KinematicTrajectory::new(vec![wp(1.0, 0.0, 0.0), wp(1.0, 1.0, 0.0)], Interpolation::Linear).is_err());
        assert!(KinematicTrajectory::<f64>::new(vec![], Interpolation::Linear).is_err());
    }

    #[test]
    fn attached_frame_velocity() {
        let mut body = RigidBodyState::at_rest(Pose::identity());
        body.angular_velocity = Vec3::new(0.0, 0.0, 1.0);
        let cam = body.attached(&Pose::from_position(Vec3::new(1.0, 0.0, 0.0)));
        assert!((cam.linear_velocity - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }
}
