use std::f64::consts::PI;

use capscan_core::dynamics::{
    apply_magnet_command, check_bounds, dipole_field, dipole_force, dipole_force_fd, dipole_wrench, kinetic_energy,
    step_capsule, Bounds, DipoleSpec, RigidState, Violation, WorldParams, Wrench, MU0,
};
use capscan_core::geometry::Aabb;
use nalgebra::{Point3, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_body(rng: &mut ChaCha8Rng) -> RigidState {
    let p = Point3::from(unit(rng) * rng.random_range(0.0..0.2));
    let q = UnitQuaternion::from_scaled_axis(unit(rng) * rng.random_range(0.0..PI));
    RigidState::at_rest(p, q)
}

#[test]
fn action_reaction_over_random_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = random_body(&mut rng);
        let b = random_body(&mut rng);
        if (a.position - b.position).norm() < 0.01 {
            continue;
        }
        let da = DipoleSpec::new(rng.random_range(0.1..60.0), unit(&mut rng)).unwrap();
        let db = DipoleSpec::new(rng.random_range(0.001..1.0), unit(&mut rng)).unwrap();
        let on_b = dipole_wrench(&a, &da, &b, &db).unwrap().force;
        let on_a = dipole_wrench(&b, &db, &a, &da).unwrap().force;
        worst = worst.max((on_a + on_b).norm() / on_b.norm());
    }
    assert!(worst <= 1e-9, "worst relative residual {worst:e}");
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[test]
fn field_and_force_power_laws() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let m_s = unit(&mut rng) * 50.0;
        let m_t = unit(&mut rng) * 0.02;
        let dir = unit(&mut rng);
        let rs: Vec<f64> = (0..30).map(|k| 0.02 * 1.1f64.powi(k)).collect();
        let lr: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
        let lb: Vec<f64> = rs.iter().map(|&r| dipole_field(&m_s, &(dir * r)).unwrap().norm().ln()).collect();
        let lf: Vec<f64> = rs.iter().map(|&r| dipole_force(&m_s, &m_t, &(dir * r)).unwrap().norm().ln()).collect();
        assert!((slope(&lr, &lb) + 3.0).abs() <= 1e-3);
        assert!((slope(&lr, &lf) + 4.0).abs() <= 1e-3);
    }
}

#[test]
fn coaxial_force_matches_analytic_value() {
    for &(m1, m2, d) in &[(50.0f64, 0.02f64, 0.1f64), (5.0, 0.01, 0.05), (120.0, 0.5, 0.3)] {
        let expected = 3.0 * MU0 * m1 * m2 / (2.0 * PI * d.powi(4));
        let f = dipole_force(&Vector3::new(0.0, m1, 0.0), &Vector3::new(0.0, -m2, 0.0), &Vector3::new(0.0, d, 0.0))
            .unwrap();
        assert!((f.norm() - expected).abs() <= 1e-8 * expected);
        assert!(f.y > 0.0);
        let attract = dipole_force(&Vector3::new(0.0, m1, 0.0), &Vector3::new(0.0, m2, 0.0), &Vector3::new(0.0, d, 0.0))
            .unwrap();
        assert!(attract.y < 0.0);
    }
}

#[test]
fn drag_only_kinetic_energy_never_increases() {
    let p = WorldParams {
        gravity: Vector3::zeros(),
        dt: 0.005,
        ..WorldParams::default()
    };
    let mut s = RigidState {
        position: Point3::origin(),
        orientation: UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1),
        linear_velocity: Vector3::new(0.03, -0.01, 0.02),
        angular_velocity: Vector3::new(2.0, -5.0, 9.0),
    };
    let mut e = kinetic_energy(&s, &p);
    for k in 0..10_000 {
        s = step_capsule(&s, &Wrench::default(), &p);
        let e2 = kinetic_energy(&s, &p);
        assert!(e2 <= e, "energy rose at step {k}: {e} -> {e2}");
        e = e2;
    }
}

#[test]
fn magnet_command_arithmetic() {
    let p = WorldParams::default();
    let b = Bounds::for_phantom(&Aabb::new(Point3::new(-0.1, -0.1, -0.1), Point3::new(0.1, 0.1, 0.1)));
    let m = RigidState::at_rest(Point3::new(0.0, 0.2, 0.0), UnitQuaternion::identity());
    let same = apply_magnet_command(&m, &Vector3::zeros(), &Vector3::zeros(), &p, &b);
    assert_eq!(same, m);
    let moved = apply_magnet_command(&m, &Vector3::new(0.01, 0.0, 0.0), &Vector3::zeros(), &p, &b);
    assert!((moved.position.x - 0.001).abs() < 1e-15);
    let turned = apply_magnet_command(&m, &Vector3::zeros(), &Vector3::new(0.0, 0.0, PI), &p, &b);
    let (_, _, yaw) = turned.orientation.euler_angles();
    assert!((yaw - 0.1 * PI).abs() < 1e-12);
}

#[test]
fn bounds_precedence() {
    let b = Bounds::for_phantom(&Aabb::new(Point3::new(-0.1, -0.1, -0.1), Point3::new(0.1, 0.1, 0.1)));
    let inside = RigidState::at_rest(b.capsule_box.center(), UnitQuaternion::identity());
    let magnet = RigidState::at_rest(b.magnet_box.center(), UnitQuaternion::identity());
    assert_eq!(check_bounds(&inside, &magnet, &b), None);
    let fast = RigidState {
        linear_velocity: Vector3::new(1.01 * b.capsule_speed_max, 0.0, 0.0),
        ..inside
    };
    assert_eq!(check_bounds(&fast, &magnet, &b), Some(Violation::CapsuleVelocity));
    let out = RigidState::at_rest(Point3::new(1.0, 0.0, 0.0), UnitQuaternion::identity());
    let magnet_out = RigidState::at_rest(Point3::new(0.0, -5.0, 0.0), UnitQuaternion::identity());
    assert_eq!(check_bounds(&out, &magnet_out, &b), Some(Violation::CapsulePosition));
    assert_eq!(check_bounds(&inside, &magnet_out, &b), Some(Violation::MagnetPosition));
}

proptest! {
    #[test]
    fn closed_form_force_agrees_with_finite_differences(
        seed in any::<u64>(),
        r in 0.03f64..0.3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = unit(&mut rng) * 50.0;
        let t = unit(&mut rng) * 0.02;
        let off = unit(&mut rng) * r;
        let a = dipole_force(&s, &t, &off).unwrap();
        let n = dipole_force_fd(&s, &t, &off, 1e-6).unwrap();
        prop_assert!((a - n).norm() <= 1e-8 * a.norm().max(1e-300) + 1e-20);
    }

    #[test]
    fn integrator_is_bit_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = RigidState {
            linear_velocity: unit(&mut rng) * 0.01,
            angular_velocity: unit(&mut rng),
            ..random_body(&mut rng)
        };
        let w = Wrench { force: unit(&mut rng) * 1e-3, torque: unit(&mut rng) * 1e-6 };
        let p = WorldParams::default().with_dt(0.005);
        let a = step_capsule(&s, &w, &p);
        let b = step_capsule(&s, &w, &p);
        prop_assert_eq!(a, b);
        prop_assert!(((a.orientation.norm()) - 1.0).abs() <= 1e-9);
        prop_assert!(a.is_finite());
    }
}
