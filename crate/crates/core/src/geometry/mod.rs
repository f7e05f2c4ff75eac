//! Stomach phantom geometry, camera visibility and coverage accounting.

pub mod bvh;
pub mod coverage;
pub mod io;
pub mod mesh;
pub mod phantom;
pub mod visibility;

pub use bvh::{BvhIndex, Ray};
pub use coverage::CoverageTracker;
pub use io::{load_mesh, save_ply};
pub use mesh::{Aabb, TriangleMesh};
pub use phantom::{generate_sphere_phantom, generate_stomach_phantom, STOMACH_VERTEX_COUNT};
pub use visibility::{visible_vertices, CameraModel, CameraPose, VisibilityMode};
