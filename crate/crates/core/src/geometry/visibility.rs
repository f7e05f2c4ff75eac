//! Which point-cloud vertices the capsule camera sees.
//!
//! A vertex is visible when it lies in the view cone between the near and
//! far depths, faces the camera, and (in occlusion mode) no triangle crosses
//! the camera→vertex segment before the vertex itself.

use nalgebra::{Point3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::bvh::{BvhIndex, Ray};
use super::mesh::TriangleMesh;
use crate::error::GeometryError;

/// Band along the ray, in meters, that excludes a vertex's own triangles.
pub const OCCLUSION_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    /// Full cone angle in degrees.
    pub fov_deg: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fov_deg: 110.0,
            near: 0.001,
            far: 0.2,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "fov_deg must be in (0, 180), got {}",
                self.fov_deg
            )));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(GeometryError::InvalidCamera(format!(
                "need 0 < near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        Ok(())
    }

    pub fn cos_half_fov(&self) -> f64 {
        (self.fov_deg.to_radians() * 0.5).cos()
    }
}

/// Camera placement; the forward axis is body +z (the capsule long axis).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Point3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl CameraPose {
    pub fn new(position: Point3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn forward(&self) -> Vector3<f64> {
        self.orientation * Vector3::z()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibilityMode {
    FrustumOnly,
    #[default]
    Occlusion,
}

/// Cone, depth and front-facing tests; no occlusion.
#[inline]
pub fn in_frustum(
    camera: &CameraModel,
    pose: &CameraPose,
    forward: &Vector3<f64>,
    vertex: &Point3<f64>,
    normal: &Vector3<f64>,
) -> bool {
    let d = vertex - pose.position;
    let depth = d.dot(forward);
    if depth < camera.near || depth > camera.far {
        return false;
    }
    let dist = d.norm();
    if depth < dist * camera.cos_half_fov() {
        return false;
    }
    // front-facing: normal points back toward the camera
    normal.dot(&(-d)) > 0.0
}

/// Whether the segment from the camera to `vertex` is blocked by a triangle
/// lying more than [`OCCLUSION_EPSILON`] in front of the vertex.
#[inline]
pub fn is_occluded(bvh: &BvhIndex, pose: &CameraPose, vertex: &Point3<f64>) -> bool {
    let d = vertex - pose.position;
    let dist = d.norm();
    let ray = Ray::new(pose.position, d / dist);
    bvh.any_hit(&ray, 0.0, dist - OCCLUSION_EPSILON)
}

/// Visible vertex indices in ascending order.
pub fn visible_vertices(
    camera: &CameraModel,
    pose: &CameraPose,
    mesh: &TriangleMesh,
    bvh: &BvhIndex,
    mode: VisibilityMode,
) -> Vec<usize> {
    visible_vertices_where(camera, pose, mesh, bvh, mode, |_| true)
}

/// Like [`visible_vertices`], restricted to indices where `candidate(i)` holds.
pub fn visible_vertices_where(
    camera: &CameraModel,
    pose: &CameraPose,
    mesh: &TriangleMesh,
    bvh: &BvhIndex,
    mode: VisibilityMode,
    candidate: impl Fn(usize) -> bool,
) -> Vec<usize> {
    let forward = pose.forward();
    (0..mesh.vertex_count())
        .filter(|&i| candidate(i))
        .filter(|&i| in_frustum(camera, pose, &forward, &mesh.vertices[i], &mesh.normals[i]))
        .filter(|&i| mode == VisibilityMode::FrustumOnly || !is_occluded(bvh, pose, &mesh.vertices[i]))
        .collect()
}
