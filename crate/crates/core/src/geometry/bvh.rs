//! Bounding volume hierarchy over one or more triangle meshes.
//!
//! Triangles are tested with the watertight shear/scale formulation, so rays
//! through shared edges hit at least one of the adjacent triangles. Among hits
//! at equal distance the lowest global triangle index wins; global indices
//! enumerate meshes in construction order, then triangles within each mesh.

use super::{Aabb, GeometryError, Hit, MeshTag, Ray, Shape, TriMesh, Vec3, SELF_INTERSECTION_FRACTION, SLAB_PAD};

const BINS: usize = 16;
const MAX_LEAF: usize = 4;
const TRAVERSAL_COST: f64 = 1.0;
const INTERSECT_COST: f64 = 1.0;

#[derive(Debug, Clone, Copy)]
struct Node {
    min: [f64; 3],
    max: [f64; 3],
    /// First primitive slot for leaves, left child index for interior nodes.
    first: u32,
    /// Primitive count; zero marks an interior node.
    count: u32,
}

/// Raw result of a single triangle test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleHit {
    pub distance: f64,
    /// Barycentric weights of the triangle's three vertices.
    pub barycentric: [f64; 3],
}

/// Per-ray constants of the watertight test.
#[derive(Debug, Clone, Copy)]
struct Shear {
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

impl Shear {
    fn new(dir: &Vec3) -> Self {
        let a = dir.abs();
        let kz = if a.x > a.y {
            if a.x > a.z { 0 } else { 2 }
        } else if a.y > a.z {
            1
        } else {
            2
        };
        let mut kx = (kz + 1) % 3;
        let mut ky = (kx + 1) % 3;
        if dir[kz] < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        Self {
            kx,
            ky,
            kz,
            sx: dir[kx] / dir[kz],
            sy: dir[ky] / dir[kz],
            sz: 1.0 / dir[kz],
        }
    }
}

#[inline]
fn watertight(shear: &Shear, origin: &Vec3, tri: &[Vec3; 3], t_min: f64, t_max: f64) -> Option<TriangleHit> {
    let Shear { kx, ky, kz, sx, sy, sz } = *shear;
    let a = tri[0] - origin;
    let b = tri[1] - origin;
    let c = tri[2] - origin;
    let ax = a[kx] - sx * a[kz];
    let ay = a[ky] - sy * a[kz];
    let bx = b[kx] - sx * b[kz];
    let by = b[ky] - sy * b[kz];
    let cx = c[kx] - sx * c[kz];
    let cy = c[ky] - sy * c[kz];
    let u = cx * by - cy * bx;
    let v = ax * cy - ay * cx;
    let w = bx * ay - by * ax;
    if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
        return None;
    }
    let det = u + v + w;
    if det == 0.0 {
        return None;
    }
    let t_scaled = u * (sz * a[kz]) + v * (sz * b[kz]) + w * (sz * c[kz]);
    let t = t_scaled / det;
    if !(t > t_min && t < t_max) {
        return None;
    }
    let inv = 1.0 / det;
    Some(TriangleHit {
        distance: t,
        barycentric: [u * inv, v * inv, w * inv],
    })
}

/// Single triangle test, exposed for oracles and tests.
pub fn intersect_triangle(ray: &Ray, tri: &[Vec3; 3], t_min: f64, t_max: f64) -> Option<TriangleHit> {
    watertight(&Shear::new(&ray.direction), &ray.origin, tri, t_min, t_max)
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Leaf slots -> global triangle index.
    order: Vec<u32>,
    /// Global triangle index -> vertex positions.
    tris: Vec<[Vec3; 3]>,
    /// Global triangle index -> (mesh, local triangle).
    owner: Vec<(u32, u32)>,
    meshes: Vec<TriMesh>,
    epsilon: f64,
}

impl Bvh {
    pub fn build(mesh: TriMesh) -> Result<Self, GeometryError> {
        Self::build_many(vec![mesh])
    }

    /// Builds one hierarchy over several meshes.
    pub fn build_many(meshes: Vec<TriMesh>) -> Result<Self, GeometryError> {
        let total: usize = meshes.iter().map(|m| m.triangles().len()).sum();
        if total == 0 {
            return Err(GeometryError::EmptyGeometry);
        }
        let mut tris = Vec::with_capacity(total);
        let mut owner = Vec::with_capacity(total);
        for (mi, m) in meshes.iter().enumerate() {
            for t in 0..m.triangles().len() {
                tris.push(m.triangle_vertices(t));
                owner.push((mi as u32, t as u32));
            }
        }
        let diagonal = super::scene_diagonal(meshes.iter());
        let mut bvh = Self {
            nodes: Vec::new(),
            order: (0..total as u32).collect(),
            tris,
            owner,
            meshes,
            epsilon: SELF_INTERSECTION_FRACTION * diagonal,
        };
        bvh.construct();
        Ok(bvh)
    }

    pub fn meshes(&self) -> &[TriMesh] {
        &self.meshes
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Self-intersection offset, `1e-4` of this geometry's diagonal.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Nearest hit farther than [`Bvh::epsilon`].
    pub fn intersect_ray(&self, ray: &Ray) -> Option<Hit> {
        self.intersect(ray, self.epsilon, f64::INFINITY)
    }

    fn construct(&mut self) {
        let n = self.tris.len();
        let mut bounds = Vec::with_capacity(n);
        let mut centroids = Vec::with_capacity(n);
        for t in &self.tris {
            let b = Aabb::from_points(t.iter().copied());
            centroids.push(b.center());
            bounds.push(b);
        }
        self.nodes.reserve(2 * n / MAX_LEAF + 1);
        self.nodes.push(Node { min: [0.0; 3], max: [0.0; 3], first: 0, count: 0 });
        let mut stack = vec![(0usize, 0usize, n)];
        while let Some((node_idx, start, end)) = stack.pop() {
            let mut nb = Aabb::empty();
            let mut cb = Aabb::empty();
            for &p in &self.order[start..end] {
                nb = nb.union(&bounds[p as usize]);
                cb = cb.grow(centroids[p as usize]);
            }
            self.nodes[node_idx].min = nb.min.into();
            self.nodes[node_idx].max = nb.max.into();
            let count = end - start;
            let split = if count <= MAX_LEAF {
                None
            } else {
                self.find_split(start, end, &nb, &cb, &bounds, &centroids)
            };
            match split {
                None => {
                    self.nodes[node_idx].first = start as u32;
                    self.nodes[node_idx].count = count as u32;
                }
                Some(mid) => {
                    let left = self.nodes.len();
                    let blank = Node { min: [0.0; 3], max: [0.0; 3], first: 0, count: 0 };
                    self.nodes.push(blank);
                    self.nodes.push(blank);
                    self.nodes[node_idx].first = left as u32;
                    self.nodes[node_idx].count = 0;
                    stack.push((left + 1, mid, end));
                    stack.push((left, start, mid));
                }
            }
        }
    }

    /// Binned SAH split; partitions `order[start..end]` and returns the midpoint.
    fn find_split(
        &mut self,
        start: usize,
        end: usize,
        node_bounds: &Aabb,
        centroid_bounds: &Aabb,
        bounds: &[Aabb],
        centroids: &[Vec3],
    ) -> Option<usize> {
        let count = end - start;
        let extent = centroid_bounds.diagonal();
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let lo = centroid_bounds.min[axis];
        let span = extent[axis];
        let order = &mut self.order[start..end];
        if span <= 0.0 {
            // All centroids coincide: split by index to bound leaf sizes.
            return (count > 2 * MAX_LEAF).then_some(start + count / 2);
        }
        let scale = BINS as f64 / span;
        let bin_of = |p: u32| (((centroids[p as usize][axis] - lo) * scale) as usize).min(BINS - 1);
        let mut bin_bounds = [Aabb::empty(); BINS];
        let mut bin_counts = [0usize; BINS];
        for &p in order.iter() {
            let b = bin_of(p);
            bin_counts[b] += 1;
            bin_bounds[b] = bin_bounds[b].union(&bounds[p as usize]);
        }
        let mut right_area = [0.0; BINS];
        let mut right_count = [0usize; BINS];
        let mut acc = Aabb::empty();
        let mut acc_n = 0;
        for i in (1..BINS).rev() {
            acc = acc.union(&bin_bounds[i]);
            acc_n += bin_counts[i];
            right_area[i] = acc.surface_area();
            right_count[i] = acc_n;
        }
        let mut best = (f64::INFINITY, 0usize);
        let mut acc = Aabb::empty();
        let mut acc_n = 0;
        for i in 0..BINS - 1 {
            acc = acc.union(&bin_bounds[i]);
            acc_n += bin_counts[i];
            if acc_n == 0 || right_count[i + 1] == 0 {
                continue;
            }
            let cost = acc.surface_area() * acc_n as f64 + right_area[i + 1] * right_count[i + 1] as f64;
            if cost < best.0 {
                best = (cost, i);
            }
        }
        let parent_area = node_bounds.surface_area();
        let split_cost = TRAVERSAL_COST + INTERSECT_COST * best.0 / parent_area.max(f64::MIN_POSITIVE);
        let leaf_cost = INTERSECT_COST * count as f64;
        if !best.0.is_finite() || (split_cost >= leaf_cost && count <= 16) {
            return None;
        }
        let mut i = 0;
        let mut j = order.len();
        while i < j {
            if bin_of(order[i]) <= best.1 {
                i += 1;
            } else {
                j -= 1;
                order.swap(i, j);
            }
        }
        if i == 0 || i == order.len() {
            return None;
        }
        Some(start + i)
    }

    fn make_hit(&self, ray: &Ray, prim: u32, th: TriangleHit) -> Hit {
        let (mi, ti) = self.owner[prim as usize];
        let mesh = &self.meshes[mi as usize];
        let tri = &self.tris[prim as usize];
        let geometric = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
        let front_face = ray.direction.dot(&geometric) < 0.0;
        let facing = if front_face { geometric } else { -geometric };
        let normal = match mesh.normals() {
            Some(ns) => {
                let [a, b, c] = mesh.triangles()[ti as usize];
                let [wa, wb, wc] = th.barycentric;
                let s = ns[a as usize] * wa + ns[b as usize] * wb + ns[c as usize] * wc;
                let norm = s.norm();
                if norm > 0.0 {
                    let s = s / norm;
                    let s = if s.dot(&facing) >= 0.0 { s } else { -s };
                    // Interpolated normals can tip past the ray near silhouettes.
                    if s.dot(&ray.direction) <= 0.0 { s } else { facing }
                } else {
                    facing
                }
            }
            None => facing,
        };
        Hit {
            point: ray.at(th.distance),
            normal,
            distance: th.distance,
            tag: mesh.tag(),
            triangle_index: ti as usize,
            front_face,
        }
    }

    /// Nearest `(global triangle, hit)` in `(t_min, t_max)` with index tie-breaking.
    pub fn nearest_triangle(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<(u32, TriangleHit)> {
        let shear = Shear::new(&ray.direction);
        let inv = ray.direction.map(|x| 1.0 / x);
        let o = ray.origin;
        let mut best: Option<(u32, TriangleHit)> = None;
        let mut best_t = t_max;
        let mut stack = [0u32; 96];
        let mut sp = 0usize;
        let root = &self.nodes[0];
        if node_interval(root, &o, &inv, t_min, best_t).is_none() {
            return None;
        }
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.count > 0 {
                let s = node.first as usize;
                for &p in &self.order[s..s + node.count as usize] {
                    if let Some(h) = watertight(&shear, &o, &self.tris[p as usize], t_min, t_max) {
                        // Equal distances fall through to the index comparison.
                        let better = match best {
                            None => true,
                            Some((bp, bh)) => h.distance < bh.distance || (h.distance == bh.distance && p < bp),
                        };
                        if better {
                            best_t = h.distance;
                            best = Some((p, h));
                        }
                    }
                }
                continue;
            }
            let l = node.first as usize;
            let (a, b) = (&self.nodes[l], &self.nodes[l + 1]);
            let ia = node_interval(a, &o, &inv, t_min, best_t);
            let ib = node_interval(b, &o, &inv, t_min, best_t);
            match (ia, ib) {
                (Some(ta), Some(tb)) => {
                    let (near, far) = if ta <= tb { (l, l + 1) } else { (l + 1, l) };
                    stack[sp] = far as u32;
                    stack[sp + 1] = near as u32;
                    sp += 2;
                }
                (Some(_), None) => {
                    stack[sp] = l as u32;
                    sp += 1;
                }
                (None, Some(_)) => {
                    stack[sp] = (l + 1) as u32;
                    sp += 1;
                }
                (None, None) => {}
            }
        }
        best
    }
}

#[inline]
fn node_interval(node: &Node, o: &Vec3, inv: &Vec3, t_min: f64, t_max: f64) -> Option<f64> {
    let mut lo = t_min;
    let mut hi = t_max;
    for k in 0..3 {
        let t0 = (node.min[k] - o[k]) * inv[k];
        let t1 = (node.max[k] - o[k]) * inv[k];
        let (a, b) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        let b = b * SLAB_PAD;
        if a > lo {
            lo = a;
        }
        if b < hi {
            hi = b;
        }
    }
    (lo <= hi).then_some(lo)
}

impl Shape for Bvh {
    fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        self.nearest_triangle(ray, t_min, t_max)
            .map(|(p, h)| self.make_hit(ray, p, h))
    }

    fn bounds(&self) -> Aabb {
        let n = &self.nodes[0];
        Aabb { min: n.min.into(), max: n.max.into() }
    }
}

/// Reference scan over every triangle of every mesh, in global index order.
pub fn brute_force_intersect(meshes: &[TriMesh], ray: &Ray, t_min: f64, t_max: f64) -> Option<(MeshTag, usize, f64)> {
    let mut best: Option<(MeshTag, usize, f64)> = None;
    for m in meshes {
        for t in 0..m.triangles().len() {
            if let Some(h) = intersect_triangle(ray, &m.triangle_vertices(t), t_min, t_max) {
                if best.map_or(true, |(_, _, d)| h.distance < d) {
                    best = Some((m.tag(), t, h.distance));
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::uv_sphere;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quad(tag: MeshTag) -> TriMesh {
        TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            None,
            tag,
        )
        .unwrap()
    }

    #[test]
    fn empty_geometry_is_an_error() {
        assert_eq!(Bvh::build_many(vec![]).unwrap_err(), GeometryError::EmptyGeometry);
    }

    #[test]
    fn single_triangle_is_one_leaf() {
        let m = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
            None,
            MeshTag::Background,
        )
        .unwrap();
        let bvh = Bvh::build(m).unwrap();
        assert_eq!(bvh.node_count(), 1);
        let ray = Ray::new(Vec3::new(0.2, 0.2, 1.0), -Vec3::z()).unwrap();
        let hit = bvh.intersect_ray(&ray).unwrap();
        assert!((hit.distance - 1.0).abs() < 1e-15);
        assert!((hit.normal - Vec3::z()).norm() < 1e-15);
    }

    #[test]
    fn diagonal_edge_hit_resolves_to_lowest_index() {
        let bvh = Bvh::build(quad(MeshTag::Background)).unwrap();
        let ray = Ray::new(Vec3::new(0.5, 0.5, 1.0), -Vec3::z()).unwrap();
        let hit = bvh.intersect_ray(&ray).unwrap();
        assert_eq!(hit.triangle_index, 0);
        assert_eq!(hit.distance, 1.0);
    }

    #[test]
    fn ray_pointing_away_misses() {
        let bvh = Bvh::build(quad(MeshTag::Background)).unwrap();
        let ray = Ray::new(Vec3::new(0.5, 0.5, 1.0), Vec3::z()).unwrap();
        assert!(bvh.intersect_ray(&ray).is_none());
    }

    #[test]
    fn unit_sphere_axis_hit() {
        let sphere = uv_sphere(Vec3::new(0.0, 0.0, -3.0), 1.0, 64, 32, true).unwrap();
        let bvh = Bvh::build(sphere).unwrap();
        let ray = Ray::new(Vec3::zeros(), -Vec3::z()).unwrap();
        let hit = bvh.intersect_ray(&ray).unwrap();
        // The tessellation is inscribed, so the hit lies slightly behind the true surface.
        assert!((hit.distance - 2.0).abs() < 2e-3);
        assert!((hit.normal - Vec3::z()).norm() < 1e-3);
        assert!(hit.normal.dot(&ray.direction) <= 0.0);
    }

    #[test]
    fn matches_brute_force_on_quad() {
        let m = quad(MeshTag::Background);
        let bvh = Bvh::build(m.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let o = Vec3::new(rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5), rng.random_range(0.2..2.0));
            let target = Vec3::new(rng.random_range(-0.2..1.2), rng.random_range(-0.2..1.2), 0.0);
            let ray = Ray::new(o, target - o).unwrap();
            let a = bvh.intersect(&ray, 1e-9, f64::INFINITY).map(|h| (h.tag, h.triangle_index, h.distance));
            let b = brute_force_intersect(std::slice::from_ref(&m), &ray, 1e-9, f64::INFINITY);
            assert_eq!(a, b);
        }
    }
}
