use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Bounds, RigidState};

pub const OBS_DIM: usize = 17;

/// Physical-unit state vector handed to controllers.
///
/// Layout: capsule position (0–2), capsule orientation quaternion w, x, y, z
/// (3–6), capsule linear velocity (7–9), magnet position (10–12), magnet
/// yaw, pitch, roll (13–15), episode progress (16).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn new(capsule: &RigidState, magnet: &RigidState, step: usize, max_steps: usize) -> Self {
        let mut o = [0.0; OBS_DIM];
        o[0..3].copy_from_slice(capsule.position.coords.as_slice());
        let q = capsule.orientation.quaternion();
        o[3..7].copy_from_slice(&[q.w, q.i, q.j, q.k]);
        o[7..10].copy_from_slice(capsule.linear_velocity.as_slice());
        o[10..13].copy_from_slice(magnet.position.coords.as_slice());
        let (roll, pitch, yaw) = magnet.orientation.euler_angles();
        o[13..16].copy_from_slice(&[yaw, pitch, roll]);
        o[16] = step as f64 / max_steps as f64;
        Self(o)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn capsule_position(&self) -> Point3<f64> {
        Point3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn magnet_position(&self) -> Point3<f64> {
        Point3::new(self.0[10], self.0[11], self.0[12])
    }

    pub fn progress(&self) -> f64 {
        self.0[16]
    }
}

/// Affine map from physical units to roughly unit scale: positions relative
/// to their box centers over the box half-extents, velocity over the speed
/// cap, angles over π. Quaternion and progress pass through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub capsule_center: Point3<f64>,
    pub capsule_half: Vector3<f64>,
    pub magnet_center: Point3<f64>,
    pub magnet_half: Vector3<f64>,
    pub speed_scale: f64,
}

impl ObsNormalizer {
    pub fn from_bounds(bounds: &Bounds) -> Self {
        Self {
            capsule_center: bounds.capsule_box.center(),
            capsule_half: bounds.capsule_box.half_extent(),
            magnet_center: bounds.magnet_box.center(),
            magnet_half: bounds.magnet_box.half_extent(),
            speed_scale: bounds.capsule_speed_max,
        }
    }

    pub fn apply(&self, obs: &Observation) -> [f64; OBS_DIM] {
        let o = &obs.0;
        let mut n = *o;
        for i in 0..3 {
            n[i] = (o[i] - self.capsule_center[i]) / self.capsule_half[i];
            n[7 + i] = o[7 + i] / self.speed_scale;
            n[10 + i] = (o[10 + i] - self.magnet_center[i]) / self.magnet_half[i];
            n[13 + i] = o[13 + i] / std::f64::consts::PI;
        }
        n
    }
}
