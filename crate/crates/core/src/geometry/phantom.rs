//! Procedural phantoms: a geodesic sphere for fast experiments and a
//! J-shaped stomach-like tube with 24822 vertices.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};

use super::mesh::TriangleMesh;
use crate::error::GeometryError;

/// Vertex count of the stomach phantom (rings × segments + 2 poles).
pub const STOMACH_VERTEX_COUNT: usize = 24822;
const STOMACH_RINGS: usize = 170;
const STOMACH_SEGMENTS: usize = 146;

fn icosahedron() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let v = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|c| Vector3::from(*c).normalize())
    .collect();
    let f = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (v, f)
}

/// Geodesic frequency used for a requested vertex count (`10 f² + 2` vertices).
pub fn sphere_frequency(n_vertices: usize) -> usize {
    let f = (((n_vertices.saturating_sub(2)) as f64) / 10.0).sqrt().round() as usize;
    f.max(1)
}

/// Geodesic sphere with `10 f² + 2` vertices, `f` chosen so the count is as
/// close as possible to `n_vertices`. Faces wind outward; call
/// [`TriangleMesh::inward`] for an interior view.
pub fn generate_sphere_phantom(n_vertices: usize, radius: f64) -> Result<TriangleMesh, GeometryError> {
    if n_vertices < 12 {
        return Err(GeometryError::TooFewVertices(n_vertices));
    }
    let n = sphere_frequency(n_vertices);
    let (corners, faces) = icosahedron();

    let mut pts: Vec<Vector3<f64>> = corners.clone();
    // interior points of each edge, keyed by (lo, hi), ordered from lo to hi
    let mut edge_base: HashMap<(usize, usize), usize> = HashMap::new();
    for f in &faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            if edge_base.contains_key(&key) {
                continue;
            }
            edge_base.insert(key, pts.len());
            for s in 1..n {
                let w = s as f64 / n as f64;
                pts.push(corners[key.0] + (corners[key.1] - corners[key.0]) * w);
            }
        }
    }
    let edge_point = |u: usize, v: usize, k: usize| -> usize {
        if u < v {
            edge_base[&(u, v)] + k - 1
        } else {
            edge_base[&(v, u)] + (n - k) - 1
        }
    };

    let mut triangles = Vec::with_capacity(20 * n * n);
    for f in &faces {
        let [a, b, c] = *f;
        let mut interior = HashMap::new();
        for i in 1..n {
            for j in 1..n {
                if i + j < n {
                    interior.insert((i, j), pts.len());
                    let (ca, cb, cc) = (corners[a], corners[b], corners[c]);
                    pts.push(ca + (cb - ca) * (i as f64 / n as f64) + (cc - ca) * (j as f64 / n as f64));
                }
            }
        }
        let idx = |i: usize, j: usize| -> usize {
            match (i, j) {
                (0, 0) => a,
                (i, 0) if i == n => b,
                (0, j) if j == n => c,
                (i, 0) => edge_point(a, b, i),
                (0, j) => edge_point(a, c, j),
                (i, j) if i + j == n => edge_point(b, c, j),
                _ => interior[&(i, j)],
            }
        };
        for i in 0..n {
            for j in 0..(n - i) {
                triangles.push([idx(i, j), idx(i + 1, j), idx(i, j + 1)]);
                if i + j + 1 < n {
                    triangles.push([idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
                }
            }
        }
    }

    let vertices = pts
        .iter()
        .map(|p| Point3::from(p.normalize() * radius))
        .collect();
    let normals = pts.iter().map(|p| p.normalize()).collect();
    let triangles = triangles
        .into_iter()
        .map(|t| [t[0] as u32, t[1] as u32, t[2] as u32])
        .collect();
    TriangleMesh::new(vertices, triangles, Some(normals))
}

/// J-shaped stomach phantom: a closed tube swept along a bent centerline in
/// the x–y plane (y up), wide at the fundus end and narrowing toward the
/// pylorus. Exactly [`STOMACH_VERTEX_COUNT`] vertices, watertight, faces
/// winding outward.
pub fn generate_stomach_phantom() -> TriangleMesh {
    let rings = STOMACH_RINGS;
    let segs = STOMACH_SEGMENTS;
    let phi0 = 160f64.to_radians();
    let phi1 = 380f64.to_radians();
    let centerline = |s: f64| -> Vector3<f64> {
        let rc = 0.07 - 0.02 * s;
        let phi = phi0 + s * (phi1 - phi0);
        Vector3::new(rc * phi.cos(), rc * phi.sin(), 0.0)
    };
    let tube_radius = |s: f64| -> f64 { (0.045 - 0.025 * s) * (PI * s).sin().max(0.0).sqrt() };
    let depth_scale = 0.85;

    let mut pts: Vec<Vector3<f64>> = Vec::with_capacity(STOMACH_VERTEX_COUNT);
    pts.push(centerline(0.0));
    for k in 1..=rings {
        let s = k as f64 / (rings + 1) as f64;
        let h = 1e-6;
        let tangent = (centerline(s + h) - centerline(s - h)).normalize();
        let side = Vector3::z().cross(&tangent).normalize();
        let r = tube_radius(s);
        let c = centerline(s);
        for j in 0..segs {
            let th = 2.0 * PI * j as f64 / segs as f64;
            pts.push(c + side * (r * th.cos()) + Vector3::z() * (depth_scale * r * th.sin()));
        }
    }
    pts.push(centerline(1.0));

    let ring = |k: usize, j: usize| -> u32 { (1 + k * segs + (j % segs)) as u32 };
    let last = (pts.len() - 1) as u32;
    let mut triangles = Vec::with_capacity(2 * STOMACH_VERTEX_COUNT - 4);
    for j in 0..segs {
        triangles.push([0, ring(0, j + 1), ring(0, j)]);
    }
    for k in 0..rings - 1 {
        for j in 0..segs {
            triangles.push([ring(k, j), ring(k, j + 1), ring(k + 1, j)]);
            triangles.push([ring(k, j + 1), ring(k + 1, j + 1), ring(k + 1, j)]);
        }
    }
    for j in 0..segs {
        triangles.push([last, ring(rings - 1, j), ring(rings - 1, j + 1)]);
    }

    let vertices = pts.into_iter().map(Point3::from).collect();
    let mut mesh = TriangleMesh::new(vertices, triangles, None)
        .expect("stomach phantom construction is valid");
    if mesh.signed_volume() < 0.0 {
        mesh.flip_orientation();
    }
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_icosahedron() {
        let m = generate_sphere_phantom(12, 0.05).unwrap();
        assert_eq!(m.vertex_count(), 12);
        assert_eq!(m.triangle_count(), 20);
        assert!(m.is_watertight());
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn two_thousand_vertex_sphere() {
        let m = generate_sphere_phantom(2000, 0.05).unwrap();
        let n = m.vertex_count();
        assert_eq!(n, 1962);
        assert!((1800..=2200).contains(&n));
        assert!(m.is_watertight());
        assert_eq!(m.triangle_count(), 2 * n - 4);
        for (p, nrm) in m.vertices.iter().zip(&m.normals) {
            assert!((p.coords.norm() - 0.05).abs() < 1e-12);
            assert!((nrm.norm() - 1.0).abs() < 1e-6);
            // outward normals before flipping
            assert!(nrm.dot(&p.coords) > 0.0);
        }
        assert!(m.signed_volume() > 0.0);
        let inward = m.inward();
        assert!(inward.normals.iter().zip(&inward.vertices).all(|(n, p)| n.dot(&p.coords) < 0.0));
    }

    #[test]
    fn too_few_vertices() {
        assert!(matches!(
            generate_sphere_phantom(11, 0.05),
            Err(GeometryError::TooFewVertices(11))
        ));
    }

    #[test]
    fn frequencies_follow_the_schedule() {
        for target in [12, 42, 162, 500, 642, 2000, 2562, 10_000] {
            let m = generate_sphere_phantom(target, 1.0).unwrap();
            let f = sphere_frequency(target);
            assert_eq!(m.vertex_count(), 10 * f * f + 2);
            assert!(m.is_watertight(), "target {target}");
        }
    }

    #[test]
    fn stomach_phantom_shape() {
        let m = generate_stomach_phantom();
        assert_eq!(m.vertex_count(), STOMACH_VERTEX_COUNT);
        assert!(m.is_watertight());
        assert_eq!(m.triangle_count(), 2 * STOMACH_VERTEX_COUNT - 4);
        assert!(m.signed_volume() > 0.0);
        let b = m.bounds();
        let e = b.extent();
        assert!(e.x > 0.1 && e.x < 0.25, "extent {e:?}");
        assert!(e.y > 0.05 && e.y < 0.2, "extent {e:?}");
        for n in &m.normals {
            assert!((n.norm() - 1.0).abs() < 1e-6);
        }
    }
}
