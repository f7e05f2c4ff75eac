//! Magnet–capsule interaction and capsule rigid-body motion.
//!
//! World frame is y-up; the horizontal plane is x–z. The capsule's body +z
//! axis is both its long axis (camera forward) and its magnetization axis.

pub mod contact;
pub mod magnetics;

use nalgebra::{Point3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub use contact::resolve_wall_contact;
pub use magnetics::{dipole_field, dipole_force, dipole_force_fd, dipole_torque, MU0};

use crate::error::DynamicsError;
use crate::geometry::Aabb;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidState {
    pub position: Point3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub linear_velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
}

impl RigidState {
    pub fn at_rest(position: Point3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.linear_velocity.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
    }
}

/// Permanent magnet approximated as a point dipole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleSpec {
    /// A·m²
    pub moment_magnitude: f64,
    /// Unit axis in the body frame.
    pub moment_axis: Vector3<f64>,
}

impl DipoleSpec {
    pub fn new(moment_magnitude: f64, moment_axis: Vector3<f64>) -> Result<Self, DynamicsError> {
        let spec = Self {
            moment_magnitude,
            moment_axis,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.moment_magnitude > 0.0) || !self.moment_magnitude.is_finite() {
            return Err(DynamicsError::InvalidParams(format!(
                "moment magnitude must be positive, got {}",
                self.moment_magnitude
            )));
        }
        if (self.moment_axis.norm() - 1.0).abs() > 1e-9 {
            return Err(DynamicsError::InvalidParams("moment axis must be a unit vector".into()));
        }
        Ok(())
    }

    /// World-frame moment for a body with orientation `q`.
    pub fn world_moment(&self, q: &UnitQuaternion<f64>) -> Vector3<f64> {
        q * (self.moment_axis * self.moment_magnitude)
    }

    pub fn capsule_default() -> Self {
        Self {
            moment_magnitude: 0.02,
            moment_axis: Vector3::z(),
        }
    }

    /// North pole facing down toward the patient.
    pub fn magnet_default() -> Self {
        Self {
            moment_magnitude: 50.0,
            moment_axis: -Vector3::y(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    /// Control step, seconds.
    pub dt: f64,
    pub gravity: Vector3<f64>,
    pub capsule_mass: f64,
    /// Principal moments (body x, y, z), kg·m².
    pub capsule_inertia: Vector3<f64>,
    /// N·s/m
    pub linear_drag: f64,
    /// N·m·s/rad
    pub angular_drag: f64,
    pub buoyancy_fraction: f64,
}

/// Principal inertia of a solid cylinder whose axis is body z.
pub fn cylinder_inertia(mass: f64, length: f64, diameter: f64) -> Vector3<f64> {
    let r = diameter / 2.0;
    let transverse = mass * (3.0 * r * r + length * length) / 12.0;
    Vector3::new(transverse, transverse, mass * r * r / 2.0)
}

pub const CAPSULE_LENGTH: f64 = 0.026;
pub const CAPSULE_DIAMETER: f64 = 0.011;

impl Default for WorldParams {
    fn default() -> Self {
        let mass = 0.005;
        Self {
            dt: 0.1,
            gravity: Vector3::new(0.0, -9.81, 0.0),
            capsule_mass: mass,
            capsule_inertia: cylinder_inertia(mass, CAPSULE_LENGTH, CAPSULE_DIAMETER),
            linear_drag: 0.5,
            angular_drag: 5e-6,
            buoyancy_fraction: 0.5,
        }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: &str| Err(DynamicsError::InvalidParams(m.to_string()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.capsule_mass > 0.0) {
            return bad("capsule_mass must be positive");
        }
        if !self.capsule_inertia.iter().all(|&i| i > 0.0) {
            return bad("capsule_inertia components must be positive");
        }
        if !(self.linear_drag >= 0.0 && self.angular_drag >= 0.0) {
            return bad("drag coefficients must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.buoyancy_fraction) {
            return bad("buoyancy_fraction must be in [0, 1]");
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return bad("gravity must be finite");
        }
        Ok(())
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        Self { dt, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub capsule_box: Aabb,
    pub magnet_box: Aabb,
    /// m/s
    pub capsule_speed_max: f64,
}

pub const MAGNET_WORKSPACE_EDGE: f64 = 0.3;

impl Bounds {
    /// Capsule box = phantom box inflated 10%; magnet box = 0.3 m cube
    /// centered over the phantom with its floor at the phantom's top.
    pub fn for_phantom(phantom: &Aabb) -> Self {
        let c = phantom.center();
        let half = MAGNET_WORKSPACE_EDGE / 2.0;
        let magnet_box = Aabb::new(
            Point3::new(c.x - half, phantom.max.y, c.z - half),
            Point3::new(c.x + half, phantom.max.y + MAGNET_WORKSPACE_EDGE, c.z + half),
        );
        Self {
            capsule_box: phantom.scaled(1.1),
            magnet_box,
            capsule_speed_max: 0.05,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.capsule_box.is_degenerate() || self.magnet_box.is_degenerate() {
            return Err(DynamicsError::InvalidParams("bounds boxes must be non-degenerate".into()));
        }
        if !(self.capsule_speed_max > 0.0) {
            return Err(DynamicsError::InvalidParams("capsule_speed_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    CapsuleVelocity,
    CapsulePosition,
    MagnetPosition,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Violation::CapsuleVelocity => "capsule_velocity",
            Violation::CapsulePosition => "capsule_position",
            Violation::MagnetPosition => "magnet_position",
        })
    }
}

/// Wrench exerted by the magnet's field on the capsule dipole.
pub fn dipole_wrench(
    magnet: &RigidState,
    magnet_dipole: &DipoleSpec,
    capsule: &RigidState,
    capsule_dipole: &DipoleSpec,
) -> Result<Wrench, DynamicsError> {
    let m_src = magnet_dipole.world_moment(&magnet.orientation);
    let m_cap = capsule_dipole.world_moment(&capsule.orientation);
    let offset = capsule.position - magnet.position;
    let b = dipole_field(&m_src, &offset)?;
    Ok(Wrench {
        force: dipole_force(&m_src, &m_cap, &offset)?,
        torque: dipole_torque(&m_cap, &b),
    })
}

fn integrate_orientation(q: &UnitQuaternion<f64>, omega: &Vector3<f64>, dt: f64) -> UnitQuaternion<f64> {
    let dq = UnitQuaternion::from_scaled_axis(omega * dt);
    UnitQuaternion::new_normalize((dq * q).into_inner())
}

/// One semi-implicit Euler step of the capsule under `wrench`, gravity
/// less buoyancy, and linear/angular viscous drag.
///
/// Rotation is integrated in the body frame without the gyroscopic term,
/// so drag alone never increases rotational kinetic energy.
pub fn step_capsule(capsule: &RigidState, wrench: &Wrench, params: &WorldParams) -> RigidState {
    let dt = params.dt;
    let m = params.capsule_mass;
    let force = wrench.force + params.gravity * (m * (1.0 - params.buoyancy_fraction))
        - capsule.linear_velocity * params.linear_drag;
    let v = capsule.linear_velocity + force * (dt / m);
    let x = capsule.position + v * dt;

    let q = capsule.orientation;
    let w_body = q.inverse_transform_vector(&capsule.angular_velocity);
    let tau_body = q.inverse_transform_vector(&wrench.torque);
    let w_body = w_body
        + (tau_body - w_body * params.angular_drag).component_div(&params.capsule_inertia) * dt;
    let w = q.transform_vector(&w_body);

    RigidState {
        position: x,
        orientation: integrate_orientation(&q, &w, dt),
        linear_velocity: v,
        angular_velocity: w,
    }
}

/// Kinematic update of the robot-held magnet.
pub fn apply_magnet_command(
    magnet: &RigidState,
    velocity_cmd: &Vector3<f64>,
    angular_cmd: &Vector3<f64>,
    params: &WorldParams,
    _bounds: &Bounds,
) -> RigidState {
    let dt = params.dt;
    RigidState {
        position: magnet.position + velocity_cmd * dt,
        orientation: if *angular_cmd == Vector3::zeros() {
            magnet.orientation
        } else {
            integrate_orientation(&magnet.orientation, angular_cmd, dt)
        },
        linear_velocity: *velocity_cmd,
        angular_velocity: *angular_cmd,
    }
}

/// First violated boundary, checked as capsule speed, capsule position,
/// then magnet position.
pub fn check_bounds(capsule: &RigidState, magnet: &RigidState, bounds: &Bounds) -> Option<Violation> {
    if capsule.linear_velocity.norm() > bounds.capsule_speed_max {
        Some(Violation::CapsuleVelocity)
    } else if !bounds.capsule_box.contains(&capsule.position) {
        Some(Violation::CapsulePosition)
    } else if !bounds.magnet_box.contains(&magnet.position) {
        Some(Violation::MagnetPosition)
    } else {
        None
    }
}

/// Kinetic energy (translational + rotational) of the capsule.
pub fn kinetic_energy(capsule: &RigidState, params: &WorldParams) -> f64 {
    let w_body = capsule.orientation.inverse_transform_vector(&capsule.angular_velocity);
    0.5 * params.capsule_mass * capsule.linear_velocity.norm_squared()
        + 0.5 * w_body.component_mul(&w_body).dot(&params.capsule_inertia)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn free_params() -> WorldParams {
        WorldParams {
            gravity: Vector3::zeros(),
            linear_drag: 0.0,
            angular_drag: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn free_flight() {
        let p = free_params();
        let s = RigidState {
            linear_velocity: Vector3::new(0.01, -0.02, 0.005),
            ..RigidState::at_rest(Point3::new(0.1, 0.2, 0.3), UnitQuaternion::identity())
        };
        let n = step_capsule(&s, &Wrench::default(), &p);
        assert_eq!(n.linear_velocity, s.linear_velocity);
        assert!((n.position - (s.position + s.linear_velocity * p.dt)).norm() < 1e-15);
    }

    #[test]
    fn gravity_from_rest() {
        let p = WorldParams {
            buoyancy_fraction: 0.0,
            linear_drag: 0.0,
            ..Default::default()
        };
        let s = RigidState::at_rest(Point3::origin(), UnitQuaternion::identity());
        let n = step_capsule(&s, &Wrench::default(), &p);
        assert!((n.linear_velocity - p.gravity * p.dt).norm() < 1e-15);
        assert!((n.position.coords - p.gravity * p.dt * p.dt).norm() < 1e-15);
    }

    #[test]
    fn drag_decays_geometrically() {
        let p = WorldParams {
            gravity: Vector3::zeros(),
            linear_drag: 0.01,
            dt: 0.01,
            ..Default::default()
        };
        let factor = 1.0 - p.dt * p.linear_drag / p.capsule_mass;
        let mut s = RigidState {
            linear_velocity: Vector3::new(0.03, 0.0, -0.04),
            ..RigidState::at_rest(Point3::origin(), UnitQuaternion::identity())
        };
        let v0 = s.linear_velocity.norm();
        let mut prev = v0;
        for k in 1..=1000 {
            s = step_capsule(&s, &Wrench::default(), &p);
            let speed = s.linear_velocity.norm();
            assert!(speed < prev);
            let closed = v0 * factor.powi(k);
            assert!((speed - closed).abs() <= 1e-12 * v0, "step {k}: {speed} vs {closed}");
            prev = speed;
        }
        assert!(prev < 1e-3 * v0);
    }

    #[test]
    fn torque_spins_about_its_axis() {
        let p = free_params();
        let s = RigidState::at_rest(Point3::origin(), UnitQuaternion::identity());
        let w = Wrench {
            force: Vector3::zeros(),
            torque: Vector3::new(0.0, 0.0, 1e-8),
        };
        let n = step_capsule(&s, &w, &p);
        let expected = 1e-8 / p.capsule_inertia.z * p.dt;
        assert!((n.angular_velocity.z - expected).abs() < 1e-15);
        let angle = n.orientation.angle();
        assert!((angle - expected * p.dt).abs() < 1e-12);
        assert!((n.orientation.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn magnet_command_kinematics() {
        let p = WorldParams::default();
        let b = Bounds::for_phantom(&Aabb::new(Point3::new(-0.05, -0.05, -0.05), Point3::new(0.05, 0.05, 0.05)));
        let m = RigidState::at_rest(Point3::new(0.0, 0.2, 0.0), UnitQuaternion::identity());
        assert_eq!(apply_magnet_command(&m, &Vector3::zeros(), &Vector3::zeros(), &p, &b), m);
        let moved = apply_magnet_command(&m, &Vector3::new(0.01, 0.0, 0.0), &Vector3::zeros(), &p, &b);
        assert!((moved.position.x - 0.001).abs() < 1e-15);
        let turned = apply_magnet_command(&m, &Vector3::zeros(), &Vector3::new(0.0, 0.0, PI), &p, &b);
        let (_, _, yaw) = turned.orientation.euler_angles();
        assert!((yaw - 0.1 * PI).abs() < 1e-12);
    }

    #[test]
    fn bounds_precedence() {
        let phantom = Aabb::new(Point3::new(-0.05, -0.05, -0.05), Point3::new(0.05, 0.05, 0.05));
        let b = Bounds::for_phantom(&phantom);
        let capsule = RigidState::at_rest(Point3::origin(), UnitQuaternion::identity());
        let magnet = RigidState::at_rest(b.magnet_box.center(), UnitQuaternion::identity());
        assert_eq!(check_bounds(&capsule, &magnet, &b), None);

        let fast = RigidState {
            linear_velocity: Vector3::new(1.01 * b.capsule_speed_max, 0.0, 0.0),
            ..capsule
        };
        assert_eq!(check_bounds(&fast, &magnet, &b), Some(Violation::CapsuleVelocity));

        let out_capsule = RigidState::at_rest(Point3::new(1.0, 0.0, 0.0), UnitQuaternion::identity());
        let out_magnet = RigidState::at_rest(Point3::new(0.0, -1.0, 0.0), UnitQuaternion::identity());
        assert_eq!(check_bounds(&out_capsule, &out_magnet, &b), Some(Violation::CapsulePosition));
        assert_eq!(check_bounds(&capsule, &out_magnet, &b), Some(Violation::MagnetPosition));
    }

    #[test]
    fn default_bounds_geometry() {
        let phantom = Aabb::new(Point3::new(-0.05, -0.05, -0.05), Point3::new(0.05, 0.05, 0.05));
        let b = Bounds::for_phantom(&phantom);
        assert!((b.capsule_box.max.x - 0.055).abs() < 1e-12);
        assert!((b.magnet_box.extent() - Vector3::repeat(0.3)).norm() < 1e-12);
        assert!((b.magnet_box.min.y - 0.05).abs() < 1e-12);
        assert!(b.validate().is_ok());
    }

    #[test]
    fn params_validation() {
        assert!(WorldParams::default().validate().is_ok());
        assert!(WorldParams { dt: 0.0, ..Default::default() }.validate().is_err());
        assert!(WorldParams { buoyancy_fraction: 1.5, ..Default::default() }.validate().is_err());
        assert!(DipoleSpec::new(0.0, Vector3::z()).is_err());
        assert!(DipoleSpec::new(1.0, Vector3::new(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn wrench_torque_vanishes_when_aligned_with_field() {
        let magnet = RigidState::at_rest(Point3::new(0.0, 0.2, 0.0), UnitQuaternion::identity());
        let md = DipoleSpec::magnet_default();
        // directly below a downward moment the field points down (-y)
        let down = UnitQuaternion::rotation_between(&Vector3::z(), &-Vector3::y()).unwrap();
        let capsule = RigidState::at_rest(Point3::origin(), down);
        let w = dipole_wrench(&magnet, &md, &capsule, &DipoleSpec::capsule_default()).unwrap();
        assert!(w.torque.norm() < 1e-20);
        // aligned dipoles attract: force points up toward the magnet
        assert!(w.force.y > 0.0);
    }

    #[test]
    fn cylinder_inertia_values() {
        let i = cylinder_inertia(0.005, 0.026, 0.011);
        assert!((i.z - 7.5625e-8).abs() < 1e-20);
        assert!((i.x - 0.005 * (3.0 * 0.0055f64.powi(2) + 0.026f64.powi(2)) / 12.0).abs() < 1e-20);
    }
}
