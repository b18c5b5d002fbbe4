//! Meshes, cameras, ray/triangle intersection and scene placement.
//!
//! Coordinates are in meters. Cameras look down their local `-z` axis with
//! `+x` to the right and `+y` up; image rows grow downward.

mod bvh;
mod camera;
mod depth;
mod obj;
mod placement;
mod shapes;

pub use bvh::{brute_force_intersect, intersect_triangle, Bvh, TriangleHit};
pub use camera::{PanoCamera, PerspectiveCamera, Projection};
pub use depth::{depth_to_mesh, DepthMap, DEFAULT_DISCONTINUITY_RATIO};
pub use obj::{parse_obj, read_obj};
pub use placement::{place_object, PlacementConfig, Placement};
pub use shapes::{uv_sphere, Aabb, Group, Shape, Sphere};

use nalgebra::{Similarity3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Tolerance on `|direction| = 1` accepted by [`Ray::from_unit`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Minimum triangle area (m²) accepted by [`TriMesh::new`].
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Self-intersection offset as a fraction of the scene diagonal.
pub const SELF_INTERSECTION_FRACTION: f64 = 1e-4;

/// Widens slab exits so rounding cannot reject rays grazing flat boxes.
pub(crate) const SLAB_PAD: f64 = 1.0 + 2.0 * (3.0 * f64::EPSILON / 2.0) / (1.0 - 3.0 * f64::EPSILON / 2.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("empty geometry")]
    EmptyGeometry,
    #[error("triangle {triangle} references vertex {index} but mesh has {count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: u32,
        count: usize,
    },
    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),
    #[error("object mesh is not watertight ({0} boundary or non-manifold edges)")]
    NotWatertight(usize),
    #[error("normal count {normals} does not match vertex count {vertices}")]
    NormalCount { normals: usize, vertices: usize },
    #[error("ray direction must be non-zero and finite")]
    BadDirection,
    #[error("no reconstructable surface")]
    NoReconstructableSurface,
    #[error("no supporting surface")]
    NoSupportingSurface,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid depth map: {0}")]
    InvalidDepth(String),
    #[error("obj parse error on line {line}: {message}")]
    Obj { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self, GeometryError> {
        let norm = direction.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(GeometryError::BadDirection);
        }
        Ok(Self {
            origin,
            direction: direction / norm,
        })
    }

    /// Builds a ray from an already unit-length direction.
    pub fn from_unit(origin: Vec3, direction: Vec3) -> Result<Self, GeometryError> {
        if (direction.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(GeometryError::BadDirection);
        }
        Ok(Self { origin, direction })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshTag {
    Object,
    Background,
    BoundingBox,
}

/// Nearest surface intersection along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub point: Vec3,
    /// Unit shading normal, oriented against the incoming ray.
    pub normal: Vec3,
    pub distance: f64,
    pub tag: MeshTag,
    pub triangle_index: usize,
    /// True when the ray arrived from the side the surface's outward normal faces.
    pub front_face: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    normals: Option<Vec<Vec3>>,
    tag: MeshTag,
}

impl TriMesh {
    /// Validates and builds a mesh. Object meshes must be watertight.
    pub fn new(
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        normals: Option<Vec<Vec3>>,
        tag: MeshTag,
    ) -> Result<Self, GeometryError> {
        let mesh = Self {
            vertices,
            triangles,
            normals,
            tag,
        };
        mesh.validate()?;
        if tag == MeshTag::Object {
            let open = mesh.open_edge_count();
            if open > 0 {
                return Err(GeometryError::NotWatertight(open));
            }
        }
        Ok(mesh)
    }

    fn validate(&self) -> Result<(), GeometryError> {
        if let Some(n) = &self.normals {
            if n.len() != self.vertices.len() {
                return Err(GeometryError::NormalCount {
                    normals: n.len(),
                    vertices: self.vertices.len(),
                });
            }
        }
        let count = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            for &index in tri {
                if index as usize >= count {
                    return Err(GeometryError::IndexOutOfRange {
                        triangle: t,
                        index,
                        count,
                    });
                }
            }
            if self.triangle_area(t) <= MIN_TRIANGLE_AREA {
                return Err(GeometryError::DegenerateTriangle(t));
            }
        }
        Ok(())
    }

    /// Number of undirected edges not shared by exactly two triangles.
    pub fn open_edge_count(&self) -> usize {
        let mut edges: std::collections::HashMap<(u32, u32), u32> =
            std::collections::HashMap::with_capacity(self.triangles.len() * 3 / 2);
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        edges.values().filter(|&&c| c != 2).count()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn tag(&self) -> MeshTag {
        self.tag
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_vertices(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Unnormalized-free face normal following the winding `a → b → c`.
    pub fn face_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle_vertices(t);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter().copied())
    }

    /// Applies a similarity transform to vertices and normals.
    pub fn transformed(&self, transform: &Similarity3<f64>) -> Self {
        let vertices = self
            .vertices
            .iter()
            .map(|v| transform.transform_point(&(*v).into()).coords)
            .collect();
        let normals = self.normals.as_ref().map(|ns| {
            ns.iter()
                .map(|n| transform.isometry.rotation * n)
                .collect()
        });
        Self {
            vertices,
            triangles: self.triangles.clone(),
            normals,
            tag: self.tag,
        }
    }

    pub fn with_tag(mut self, tag: MeshTag) -> Self {
        self.tag = tag;
        self
    }
}

/// Diagonal length of the union of the bounds of `meshes`.
pub fn scene_diagonal<'a>(meshes: impl IntoIterator<Item = &'a TriMesh>) -> f64 {
    let mut bounds = Aabb::empty();
    for m in meshes {
        bounds = bounds.union(&m.bounds());
    }
    if bounds.is_empty() {
        0.0
    } else {
        bounds.diagonal().norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> TriMesh {
        TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            None,
            MeshTag::Background,
        )
        .unwrap()
    }

    #[test]
    fn rejects_out_of_range_index() {
        let err = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 3]],
            None,
            MeshTag::Background,
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::IndexOutOfRange { index: 3, .. }));
    }

    #[test]
    fn rejects_degenerate_triangle() {
        let err = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0],
            vec![[0, 1, 2]],
            None,
            MeshTag::Background,
        )
        .unwrap_err();
        assert_eq!(err, GeometryError::DegenerateTriangle(0));
    }

    #[test]
    fn open_object_mesh_is_rejected() {
        let q = quad();
        let err = TriMesh::new(
            q.vertices().to_vec(),
            q.triangles().to_vec(),
            None,
            MeshTag::Object,
        )
        .unwrap_err();
        assert_eq!(err, GeometryError::NotWatertight(4));
    }

    #[test]
    fn ray_new_normalizes() {
        let r = Ray::new(Vec3::zeros(), Vec3::new(0.0, 3.0, 4.0)).unwrap();
        assert!((r.direction.norm() - 1.0).abs() < 1e-15);
        assert!(Ray::new(Vec3::zeros(), Vec3::zeros()).is_err());
        assert!(Ray::from_unit(Vec3::zeros(), Vec3::new(0.0, 0.0, 1.1)).is_err());
    }
}
