//! Bounding volume hierarchy over mesh triangles.

use nalgebra::{Point3, Vector3};

use super::mesh::{Aabb, TriangleMesh};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub dir: Vector3<f64>,
    inv_dir: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Point3<f64>, dir: Vector3<f64>) -> Self {
        Self {
            origin,
            dir,
            inv_dir: dir.map(|d| 1.0 / d),
        }
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.dir * t
    }
}

/// Möller–Trumbore intersection, two-sided. Returns the ray parameter of
/// the hit, if any.
#[inline]
pub fn ray_triangle(ray: &Ray, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = ray.dir.cross(&e2);
    let det = e1.dot(&p);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = ray.dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) * inv)
}

/// Closest point to `p` on triangle `abc`.
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: first index into `order`; interior: index of the left child.
    start: u32,
    /// Triangle count for leaves, zero for interior nodes.
    count: u32,
    right: u32,
}

/// Immutable BVH; shareable across threads.
#[derive(Debug, Clone)]
pub struct BvhIndex {
    nodes: Vec<Node>,
    order: Vec<u32>,
    tri_points: Vec<[Point3<f64>; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub triangle: usize,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub triangle: usize,
    pub point: Point3<f64>,
    pub distance_squared: f64,
}

fn slab(bounds: &Aabb, ray: &Ray, t_max: f64) -> Option<f64> {
    let mut lo = 0.0f64;
    let mut hi = t_max;
    for i in 0..3 {
        let t1 = (bounds.min[i] - ray.origin[i]) * ray.inv_dir[i];
        let t2 = (bounds.max[i] - ray.origin[i]) * ray.inv_dir[i];
        // NaN (origin on a slab plane with zero direction) leaves the interval untouched
        lo = lo.max(t1.min(t2));
        hi = hi.min(t1.max(t2));
    }
    (lo <= hi).then_some(lo)
}

impl BvhIndex {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let tri_points: Vec<[Point3<f64>; 3]> =
            (0..mesh.triangle_count()).map(|t| mesh.triangle_points(t)).collect();
        let scale = mesh.bounds().extent().norm().max(1e-12);
        let pad = scale * 1e-9;
        let boxes: Vec<Aabb> = tri_points
            .iter()
            .map(|p| Aabb::from_points(p.iter()).padded(pad))
            .collect();
        let centroids: Vec<Point3<f64>> = boxes.iter().map(Aabb::center).collect();
        let mut order: Vec<u32> = (0..tri_points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * tri_points.len() / LEAF_SIZE + 1);
        if !order.is_empty() {
            Self::build_node(&mut nodes, &mut order, 0, &boxes, &centroids);
        }
        Self {
            nodes,
            order,
            tri_points,
        }
    }

    fn build_node(
        nodes: &mut Vec<Node>,
        order: &mut [u32],
        offset: usize,
        boxes: &[Aabb],
        centroids: &[Point3<f64>],
    ) -> u32 {
        let bounds = order
            .iter()
            .fold(Aabb::empty(), |acc, &t| acc.merge(&boxes[t as usize]));
        let id = nodes.len();
        nodes.push(Node {
            bounds,
            start: offset as u32,
            count: order.len() as u32,
            right: 0,
        });
        if order.len() <= LEAF_SIZE {
            return id as u32;
        }
        let cb = Aabb::from_points(order.iter().map(|&t| &centroids[t as usize]));
        let ext = cb.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |a, b| {
            centroids[*a as usize][axis]
                .total_cmp(&centroids[*b as usize][axis])
                .then(a.cmp(b))
        });
        let (l, r) = order.split_at_mut(mid);
        let left = Self::build_node(nodes, l, offset, boxes, centroids);
        let right = Self::build_node(nodes, r, offset + mid, boxes, centroids);
        nodes[id].start = left;
        nodes[id].count = 0;
        nodes[id].right = right;
        id as u32
    }

    pub fn triangle_count(&self) -> usize {
        self.tri_points.len()
    }

    /// Union of all leaf boxes.
    pub fn root_bounds(&self) -> Option<Aabb> {
        self.nodes.first().map(|n| n.bounds)
    }

    /// Every leaf's box contains its triangles (checked without padding slack).
    pub fn leaves_contain_triangles(&self) -> bool {
        let mut seen = vec![false; self.tri_points.len()];
        for n in self.nodes.iter().filter(|n| n.count > 0) {
            for &t in &self.order[n.start as usize..(n.start + n.count) as usize] {
                seen[t as usize] = true;
                if !self.tri_points[t as usize].iter().all(|p| n.bounds.contains(p)) {
                    return false;
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Nearest hit with `t_min < t < t_max`; ties go to the lower triangle index.
    pub fn nearest_hit(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        self.traverse(ray, &mut limit, |tri, t, limit| {
            if t > t_min && t <= *limit {
                let better = match best {
                    None => true,
                    Some(b) => t < b.t || (t == b.t && tri < b.triangle),
                };
                if better {
                    best = Some(Hit { triangle: tri, t });
                    *limit = t;
                }
            }
            false
        });
        best.filter(|h| h.t < t_max)
    }

    /// Whether any triangle is hit with `t_min < t < t_max`.
    pub fn any_hit(&self, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        let mut found = false;
        let mut limit = t_max;
        self.traverse(ray, &mut limit, |_, t, _| {
            if t > t_min && t < t_max {
                found = true;
            }
            found
        });
        found
    }

    /// Visit candidate triangles; `f(tri, t, limit)` returns true to stop.
    fn traverse(&self, ray: &Ray, limit: &mut f64, mut f: impl FnMut(usize, f64, &mut f64) -> bool) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if slab(&node.bounds, ray, *limit).is_none() {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let [a, b, c] = &self.tri_points[t as usize];
                    if let Some(hit) = ray_triangle(ray, a, b, c) {
                        if f(t as usize, hit, limit) {
                            return;
                        }
                    }
                }
            } else {
                stack.push(node.right);
                stack.push(node.start);
            }
        }
    }

    /// Closest surface point to `p`.
    pub fn closest_point(&self, p: &Point3<f64>) -> Option<ClosestPoint> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<ClosestPoint> = None;
        let mut best_d2 = f64::INFINITY;
        let mut stack: Vec<u32> = vec![0];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if node.bounds.distance_squared(p) > best_d2 {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let [a, b, c] = &self.tri_points[t as usize];
                    let q = closest_point_on_triangle(p, a, b, c);
                    let d2 = (q - p).norm_squared();
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best = Some(ClosestPoint {
                            triangle: t as usize,
                            point: q,
                            distance_squared: d2,
                        });
                    }
                }
            } else {
                let l = &self.nodes[node.start as usize];
                let r = &self.nodes[node.right as usize];
                // visit the nearer child first
                if l.bounds.distance_squared(p) <= r.bounds.distance_squared(p) {
                    stack.push(node.right);
                    stack.push(node.start);
                } else {
                    stack.push(node.start);
                    stack.push(node.right);
                }
            }
        }
        best
    }
}
