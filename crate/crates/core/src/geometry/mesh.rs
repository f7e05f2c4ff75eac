use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::error::GeometryError;

/// Triangle mesh whose vertex set doubles as the coverage point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self { min, max }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn half_extent(&self) -> Vector3<f64> {
        self.extent() * 0.5
    }

    /// Scale about the center, `factor = 1.1` inflates every side by 10%.
    pub fn scaled(&self, factor: f64) -> Aabb {
        let c = self.center();
        let h = self.half_extent() * factor;
        Aabb::new(c - h, c + h)
    }

    pub fn padded(&self, pad: f64) -> Aabb {
        let p = Vector3::repeat(pad);
        Aabb::new(self.min - p, self.max + p)
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn is_degenerate(&self) -> bool {
        (0..3).any(|i| !(self.max[i] > self.min[i]))
    }

    pub fn surface_area(&self) -> f64 {
        let e = self.extent();
        if e.iter().any(|v| *v < 0.0) {
            return 0.0;
        }
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

impl TriangleMesh {
    /// Build a mesh, computing area-weighted vertex normals when none are given.
    pub fn new(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
        normals: Option<Vec<Vector3<f64>>>,
    ) -> Result<Self, GeometryError> {
        if vertices.is_empty() {
            return Err(GeometryError::NoVertices);
        }
        let n = vertices.len();
        if let Some(bad) = triangles.iter().flatten().find(|&&i| i as usize >= n) {
            return Err(GeometryError::IndexOutOfRange {
                index: *bad as usize,
                count: n,
            });
        }
        let mut mesh = Self {
            vertices,
            normals: Vec::new(),
            triangles,
        };
        match normals {
            Some(ns) if ns.len() == n => {
                mesh.normals = ns
                    .into_iter()
                    .map(|v| v.try_normalize(1e-300).unwrap_or_else(Vector3::z))
                    .collect();
            }
            _ => mesh.recompute_normals(),
        }
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Unnormalized face normal following the winding (length = 2 · area).
    pub fn face_normal_raw(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle_points(t);
        (b - a).cross(&(c - a))
    }

    pub fn face_normal(&self, t: usize) -> Vector3<f64> {
        self.face_normal_raw(t)
            .try_normalize(0.0)
            .unwrap_or_else(Vector3::zeros)
    }

    /// Area-weighted average of incident face normals.
    pub fn recompute_normals(&mut self) {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for t in 0..self.triangles.len() {
            // raw cross product is already area-weighted
            let n = self.face_normal_raw(t);
            for &i in &self.triangles[t] {
                acc[i as usize] += n;
            }
        }
        self.normals = acc
            .into_iter()
            .map(|v| v.try_normalize(0.0).unwrap_or_else(Vector3::z))
            .collect();
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Signed enclosed volume; positive when faces wind outward.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }

    /// Reverse the winding of every triangle and negate the normals.
    pub fn flip_orientation(&mut self) {
        for tri in &mut self.triangles {
            tri.swap(1, 2);
        }
        for n in &mut self.normals {
            *n = -*n;
        }
    }

    /// Copy with normals pointing into the enclosed volume.
    pub fn inward(&self) -> TriangleMesh {
        let mut m = self.clone();
        if m.signed_volume() > 0.0 {
            m.flip_orientation();
        }
        m
    }

    /// Every undirected edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        !edges.is_empty() && edges.values().all(|&c| c == 2)
    }

    pub fn transformed(&self, iso: &nalgebra::Isometry3<f64>) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|p| iso * p).collect(),
            normals: self.normals.iter().map(|n| iso * n).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Generalized winding number of the closed surface around `p`
    /// (≈ ±1 inside, ≈ 0 outside).
    pub fn winding_number(&self, p: &Point3<f64>) -> f64 {
        let mut total = 0.0;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_points(t);
            let (a, b, c) = (a - p, b - p, c - p);
            let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
            let num = a.dot(&b.cross(&c));
            let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
            total += 2.0 * num.atan2(den);
        }
        total / (4.0 * std::f64::consts::PI)
    }

    /// Inside test that does not depend on face orientation.
    pub fn contains_point(&self, p: &Point3<f64>) -> bool {
        self.winding_number(p).abs() > 0.5
    }
}
