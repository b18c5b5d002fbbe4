use super::{GeometryError, Hit, MeshTag, Ray, TriMesh, Vec3, SLAB_PAD};

/// Anything a ray can be tested against.
pub trait Shape: Send + Sync {
    /// Nearest hit with `t_min < distance < t_max`.
    fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit>;

    fn bounds(&self) -> Aabb;
}

impl<S: Shape + ?Sized> Shape for &S {
    fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        (**self).intersect(ray, t_min, t_max)
    }

    fn bounds(&self) -> Aabb {
        (**self).bounds()
    }
}

impl<S: Shape + ?Sized> Shape for Box<S> {
    fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        (**self).intersect(ray, t_min, t_max)
    }

    fn bounds(&self) -> Aabb {
        (**self).bounds()
    }
}

/// Union of shapes; the nearest hit wins, earlier members win exact ties.
pub struct Group<'a>(pub Vec<&'a dyn Shape>);

impl Shape for Group<'_> {
    fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        for shape in &self.0 {
            if let Some(hit) = shape.intersect(ray, t_min, limit) {
                if best.map_or(true, |b| hit.distance < b.distance) {
                    limit = hit.distance;
                    best = Some(hit);
                }
            }
        }
        best
    }

    fn bounds(&self) -> Aabb {
        self.0
            .iter()
            .fold(Aabb::empty(), |acc, s| acc.union(&s.bounds()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points(points: impl IntoIterator<Item = Vec3>) -> Self {
        points.into_iter().fold(Self::empty(), |b, p| b.grow(p))
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    pub fn grow(self, p: Vec3) -> Self {
        Self {
            min: self.min.inf(&p),
            max: self.max.sup(&p),
        }
    }

    pub fn union(&self, other: &Aabb) -> Self {
        Self {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn diagonal(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn surface_area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let d = self.diagonal();
        2.0 * (d.x * d.y + d.y * d.z + d.z * d.x)
    }

    /// Box scaled about its center so each extent grows by `fraction`.
    pub fn inflated(&self, fraction: f64) -> Self {
        let c = self.center();
        let half = self.diagonal() * (0.5 * (1.0 + fraction));
        Self {
            min: c - half,
            max: c + half,
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    /// Slab test; returns the parametric entry/exit interval clipped to `[t_min, t_max]`.
    #[inline]
    pub fn ray_interval(&self, origin: &Vec3, inv_dir: &Vec3, t_min: f64, t_max: f64) -> Option<(f64, f64)> {
        let mut lo = t_min;
        let mut hi = t_max;
        for k in 0..3 {
            let t0 = (self.min[k] - origin[k]) * inv_dir[k];
            let t1 = (self.max[k] - origin[k]) * inv_dir[k];
            let (a, b) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            let b = b * SLAB_PAD;
            // NaN from 0 * inf compares false and leaves the interval untouched.
            if a > lo {
                lo = a;
            }
            if b < hi {
                hi = b;
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Closed box as 12 outward-facing triangles.
    pub fn to_mesh(&self, tag: MeshTag) -> Result<TriMesh, GeometryError> {
        let (a, b) = (self.min, self.max);
        let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
        let vertices = vec![
            v(a.x, a.y, a.z),
            v(b.x, a.y, a.z),
            v(b.x, b.y, a.z),
            v(a.x, b.y, a.z),
            v(a.x, a.y, b.z),
            v(b.x, a.y, b.z),
            v(b.x, b.y, b.z),
            v(a.x, b.y, b.z),
        ];
        let triangles = vec![
            [0, 2, 1],
            [0, 3, 2], // -z
            [4, 5, 6],
            [4, 6, 7], // +z
            [0, 1, 5],
            [0, 5, 4], // -y
            [3, 7, 6],
            [3, 6, 2], // +y
            [0, 4, 7],
            [0, 7, 3], // -x
            [1, 2, 6],
            [1, 6, 5], // +x
        ];
        TriMesh::new(vertices, triangles, None, tag)
    }
}

/// Analytic sphere with exact normals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
    pub tag: MeshTag,
}

impl Sphere {
    pub fn new(center: Vec3, radius: f64) -> Self {
        Self {
            center,
            radius,
            tag: MeshTag::Object,
        }
    }
}

impl Shape for Sphere {
    fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        let oc = ray.origin - self.center;
        let half_b = oc.dot(&ray.direction);
        let c = oc.norm_squared() - self.radius * self.radius;
        let disc = half_b * half_b - c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        // Stable pair of roots.
        let q = -half_b - sq.copysign(half_b);
        let (mut t0, mut t1) = if q != 0.0 { (q, c / q) } else { (-half_b, -half_b) };
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        let t = if t0 > t_min && t0 < t_max {
            t0
        } else if t1 > t_min && t1 < t_max {
            t1
        } else {
            return None;
        };
        let point = ray.at(t);
        let outward = (point - self.center) / self.radius;
        let outward = outward.normalize();
        let front_face = ray.direction.dot(&outward) < 0.0;
        Some(Hit {
            point,
            normal: if front_face { outward } else { -outward },
            distance: t,
            tag: self.tag,
            triangle_index: 0,
            front_face,
        })
    }

    fn bounds(&self) -> Aabb {
        Aabb {
            min: self.center - Vec3::repeat(self.radius),
            max: self.center + Vec3::repeat(self.radius),
        }
    }
}

/// Watertight latitude/longitude sphere with outward winding.
///
/// Produces `2 * slices * (stacks - 1)` triangles. With `smooth` set, vertex
/// normals are the exact radial directions.
pub fn uv_sphere(center: Vec3, radius: f64, slices: usize, stacks: usize, smooth: bool) -> Result<TriMesh, GeometryError> {
    assert!(slices >= 3 && stacks >= 2, "sphere needs >= 3 slices and >= 2 stacks");
    let mut dirs = Vec::with_capacity(2 + slices * (stacks - 1));
    dirs.push(Vec3::y());
    for i in 1..stacks {
        let polar = std::f64::consts::PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let az = 2.0 * std::f64::consts::PI * j as f64 / slices as f64;
            dirs.push(Vec3::new(polar.sin() * az.cos(), polar.cos(), -polar.sin() * az.sin()));
        }
    }
    dirs.push(-Vec3::y());
    let south = (dirs.len() - 1) as u32;
    let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;

    let mut tris = Vec::with_capacity(2 * slices * (stacks - 1));
    for j in 0..slices {
        tris.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b) = (ring(i, j), ring(i, j + 1));
            let (c, d) = (ring(i + 1, j), ring(i + 1, j + 1));
            tris.push([a, c, d]);
            tris.push([a, d, b]);
        }
    }
    for j in 0..slices {
        tris.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }
    let vertices = dirs.iter().map(|d| center + d * radius).collect();
    let normals = smooth.then(|| dirs.clone());
    TriMesh::new(vertices, tris, normals, MeshTag::Object)
}
