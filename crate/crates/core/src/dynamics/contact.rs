use crate::geometry::{BvhIndex, TriangleMesh};

use super::RigidState;

/// Keep a sphere of `radius` around the capsule center inside the phantom.
///
/// `mesh` must wind inward (normals toward the cavity). On penetration the
/// center is pushed back along the nearest face's normal and the velocity
/// component into the wall is removed. Repeats a few times so that a push
/// off one face does not leave the sphere inside a neighbouring one.
pub fn resolve_wall_contact(
    state: &RigidState,
    radius: f64,
    mesh: &TriangleMesh,
    bvh: &BvhIndex,
) -> RigidState {
    const PASSES: usize = 4;
    let mut out = *state;
    for _ in 0..PASSES {
        let Some(cp) = bvh.closest_point(&out.position) else {
            break;
        };
        let n = mesh.face_normal(cp.triangle);
        let clearance = (out.position - cp.point).dot(&n);
        // tolerance keeps a resting capsule from being re-pushed every step
        if clearance >= radius * (1.0 - 1e-9) {
            break;
        }
        out.position += n * (radius - clearance);
        let vn = out.linear_velocity.dot(&n);
        if vn < 0.0 {
            out.linear_velocity -= n * vn;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generate_sphere_phantom;
    use nalgebra::{Point3, UnitQuaternion, Vector3};

    #[test]
    fn interior_state_is_untouched() {
        let m = generate_sphere_phantom(642, 0.05).unwrap().inward();
        let bvh = BvhIndex::build(&m);
        let s = RigidState::at_rest(Point3::new(0.0, -0.01, 0.0), UnitQuaternion::identity());
        assert_eq!(resolve_wall_contact(&s, 0.0055, &m, &bvh), s);
    }

    #[test]
    fn penetrating_state_is_pushed_back_and_stopped() {
        let m = generate_sphere_phantom(642, 0.05).unwrap().inward();
        let bvh = BvhIndex::build(&m);
        let s = RigidState {
            linear_velocity: Vector3::new(0.01, -0.02, 0.0),
            ..RigidState::at_rest(Point3::new(0.0, -0.049, 0.0), UnitQuaternion::identity())
        };
        let out = resolve_wall_contact(&s, 0.0055, &m, &bvh);
        let cp = bvh.closest_point(&out.position).unwrap();
        let gap = (out.position - cp.point).norm();
        assert!(gap >= 0.0055 * (1.0 - 1e-6), "gap {gap}");
        assert!(out.linear_velocity.y.abs() < 1e-3, "normal velocity removed");
        assert!((out.linear_velocity.x - 0.01).abs() < 2e-3, "tangential velocity kept");
    }
}
