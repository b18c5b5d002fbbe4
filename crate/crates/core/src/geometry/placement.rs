//! Heuristic placement of the transparent object on a supporting surface.

use nalgebra::{Similarity3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::{GeometryError, PerspectiveCamera, TriMesh, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    /// World up; defaults to the camera's `+y` axis.
    pub up: Option<[f64; 3]>,
    /// Largest angle between a surface normal and up that still counts as horizontal.
    pub max_tilt_deg: f64,
    /// Surfaces farther than this below the optical axis are ignored (meters).
    pub max_drop_below_axis: f64,
    /// Size of the object's largest bounding-box extent after scaling (meters).
    pub physical_size: f64,
    /// Connected horizontal patches smaller than this are ignored (m²).
    pub min_surface_area: f64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            up: None,
            max_tilt_deg: 15.0,
            max_drop_below_axis: 1.5,
            physical_size: 1.0,
            min_surface_area: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    /// Object-to-world transform including the uniform scale.
    pub transform: Similarity3<f64>,
    /// Contact point on the selected surface.
    pub contact: Vec3,
    pub up: Vec3,
    /// Triangles of the background mesh forming the selected surface.
    pub surface: Vec<usize>,
}

struct UnionFind(Vec<u32>);

impl UnionFind {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.0[x as usize] != x {
            let parent = self.0[x as usize];
            self.0[x as usize] = self.0[parent as usize];
            x = parent;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi as usize] = lo;
        }
    }
}

/// Places `object` on the nearest horizontal surface of `background`.
///
/// Upward-facing patches within `max_tilt_deg` of up are grouped by shared
/// vertices; patches more than `max_drop_below_axis` below the optical axis
/// are excluded and the one closest to the camera is chosen. The object is
/// scaled to `physical_size`, its `+y` axis aligned with up, and its lowest
/// point set on the surface where the vertical plane through the optical
/// axis crosses the patch, at the middle of that crossing.
pub fn place_object(
    object: &TriMesh,
    background: &TriMesh,
    cam: &PerspectiveCamera,
    config: &PlacementConfig,
) -> Result<Placement, GeometryError> {
    if object.is_empty() {
        return Err(GeometryError::EmptyGeometry);
    }
    let up = config.up.map(Vec3::from).unwrap_or_else(|| cam.up()).normalize();
    let origin = cam.center();
    let forward = cam.forward();
    let cos_tilt = config.max_tilt_deg.to_radians().cos();

    let mut candidates = Vec::new();
    for t in 0..background.triangles().len() {
        let [a, b, c] = background.triangle_vertices(t);
        let centroid = (a + b + c) / 3.0;
        let mut n = background.face_normal(t);
        if n.dot(&(origin - centroid)) < 0.0 {
            n = -n;
        }
        if n.dot(&up) < cos_tilt {
            continue;
        }
        let along = (centroid - origin).dot(&forward);
        if along <= 0.0 {
            continue;
        }
        let on_axis = origin + forward * along;
        let drop = -(centroid - on_axis).dot(&up);
        if drop > config.max_drop_below_axis {
            continue;
        }
        candidates.push(t);
    }
    if candidates.is_empty() {
        return Err(GeometryError::NoSupportingSurface);
    }

    let mut uf = UnionFind((0..background.vertices().len() as u32).collect());
    for &t in &candidates {
        let [a, b, c] = background.triangles()[t];
        uf.union(a, b);
        uf.union(b, c);
    }
    let mut groups: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for &t in &candidates {
        let root = uf.find(background.triangles()[t][0]);
        groups.entry(root).or_default().push(t);
    }
    let surface = groups
        .into_values()
        .filter(|tris| tris.iter().map(|&t| background.triangle_area(t)).sum::<f64>() >= config.min_surface_area)
        .map(|tris| {
            let dist = tris
                .iter()
                .map(|&t| {
                    let [a, b, c] = background.triangle_vertices(t);
                    ((a + b + c) / 3.0 - origin).norm()
                })
                .fold(f64::INFINITY, f64::min);
            (dist, tris)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, tris)| tris)
        .ok_or(GeometryError::NoSupportingSurface)?;

    let contact = contact_point(background, &surface, origin, forward, up);
    let transform = fit_object(object, contact, up, config.physical_size);
    Ok(Placement { transform, contact, up, surface })
}

/// Middle of the patch's crossing with the vertical plane through the optical
/// axis, or the patch vertex nearest the axis if there is no crossing.
fn contact_point(mesh: &TriMesh, surface: &[usize], origin: Vec3, forward: Vec3, up: Vec3) -> Vec3 {
    let horizontal = forward - up * forward.dot(&up);
    let mut segments = Vec::new();
    if horizontal.norm() > 1e-9 {
        let ahead = horizontal.normalize();
        let lateral = ahead.cross(&up);
        for &t in surface {
            let vs = mesh.triangle_vertices(t);
            let side: Vec<f64> = vs.iter().map(|v| (v - origin).dot(&lateral)).collect();
            let mut pts = Vec::new();
            for k in 0..3 {
                let (i, j) = (k, (k + 1) % 3);
                if side[i] == 0.0 {
                    pts.push(vs[i]);
                }
                if side[i] * side[j] < 0.0 {
                    let s = side[i] / (side[i] - side[j]);
                    pts.push(vs[i] + (vs[j] - vs[i]) * s);
                }
            }
            if pts.len() >= 2 {
                let q = |p: &Vec3| (p - origin).dot(&ahead);
                let (mut p0, mut p1) = (pts[0], pts[1]);
                for p in &pts[2..] {
                    if q(p) < q(&p0) {
                        p0 = *p;
                    } else if q(p) > q(&p1) {
                        p1 = *p;
                    }
                }
                if q(&p0) > q(&p1) {
                    std::mem::swap(&mut p0, &mut p1);
                }
                segments.push((q(&p0), q(&p1), p0, p1));
            }
        }
        if !segments.is_empty() {
            let lo = segments.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
            let hi = segments.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
            let mid = 0.5 * (lo + hi);
            let mut best: Option<(f64, Vec3)> = None;
            for &(q0, q1, p0, p1) in &segments {
                let (gap, point) = if mid < q0 {
                    (q0 - mid, p0)
                } else if mid > q1 {
                    (mid - q1, p1)
                } else {
                    let s = if q1 > q0 { (mid - q0) / (q1 - q0) } else { 0.0 };
                    (0.0, p0 + (p1 - p0) * s)
                };
                if best.map_or(true, |(g, _)| gap < g) {
                    best = Some((gap, point));
                }
            }
            return best.expect("segments is non-empty").1;
        }
    }
    let axis_distance = |p: &Vec3| {
        let rel = p - origin;
        (rel - forward * rel.dot(&forward)).norm()
    };
    surface
        .iter()
        .flat_map(|&t| mesh.triangle_vertices(t))
        .min_by(|a, b| axis_distance(a).total_cmp(&axis_distance(b)))
        .expect("surface is non-empty")
}

fn fit_object(object: &TriMesh, contact: Vec3, up: Vec3, physical_size: f64) -> Similarity3<f64> {
    let extent = object.bounds().diagonal().max();
    let scale = if extent > 0.0 { physical_size / extent } else { 1.0 };
    let rotation = UnitQuaternion::rotation_between(&Vec3::y(), &up)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI));
    let placed: Vec<Vec3> = object.vertices().iter().map(|v| rotation * (v * scale)).collect();
    let lowest = placed.iter().map(|p| p.dot(&up)).fold(f64::INFINITY, f64::min);
    let center = super::Aabb::from_points(placed.iter().copied()).center();
    let horizontal = |p: Vec3| p - up * p.dot(&up);
    let offset = horizontal(contact) - horizontal(center) + up * (contact.dot(&up) - lowest);
    Similarity3::from_parts(Translation3::from(offset), rotation, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{uv_sphere, MeshTag};
    use nalgebra::Isometry3;

    fn rect(x0: f64, x1: f64, y: f64, z_near: f64, z_far: f64) -> (Vec<Vec3>, Vec<[u32; 3]>) {
        let v = vec![
            Vec3::new(x0, y, z_near),
            Vec3::new(x1, y, z_near),
            Vec3::new(x1, y, z_far),
            Vec3::new(x0, y, z_far),
        ];
        (v, vec![[0, 1, 2], [0, 2, 3]])
    }

    fn merge(parts: &[(Vec<Vec3>, Vec<[u32; 3]>)]) -> TriMesh {
        let mut vs = Vec::new();
        let mut ts = Vec::new();
        for (v, t) in parts {
            let base = vs.len() as u32;
            vs.extend_from_slice(v);
            ts.extend(t.iter().map(|t| t.map(|i| i + base)));
        }
        TriMesh::new(vs, ts, None, MeshTag::Background).unwrap()
    }

    fn cam() -> PerspectiveCamera {
        PerspectiveCamera::from_vertical_fov(64, 48, 60.0, Isometry3::identity()).unwrap()
    }

    fn config() -> PlacementConfig {
        PlacementConfig { physical_size: 0.2, ..Default::default() }
    }

    #[test]
    fn tabletop_below_axis() {
        // Table top from 1 m to 2 m ahead, 0.3 m below the level optical axis.
        let bg = merge(&[rect(-0.5, 0.5, -0.3, -1.0, -2.0)]);
        let sphere = uv_sphere(Vec3::zeros(), 1.0, 16, 8, true).unwrap();
        let p = place_object(&sphere, &bg, &cam(), &config()).unwrap();
        // The vertical plane through the axis is x = 0; it crosses the table
        // along z in [-2, -1], whose midpoint is the contact.
        let expected = Vec3::new(0.0, -0.3, -1.5);
        assert!((p.contact - expected).norm() < 1e-12, "{:?}", p.contact);
        let placed = sphere.transformed(&p.transform);
        let lowest = placed.vertices().iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
        assert!((lowest - (-0.3)).abs() < 1e-6);
        let b = placed.bounds();
        assert!((b.diagonal().max() - 0.2).abs() < 1e-9);
        assert!(b.center().x.abs() < 1e-9 && (b.center().z + 1.5).abs() < 1e-9);
    }

    #[test]
    fn floor_far_below_axis_is_excluded() {
        let bg = merge(&[rect(-2.0, 2.0, -2.0, -1.0, -4.0)]);
        let sphere = uv_sphere(Vec3::zeros(), 1.0, 16, 8, true).unwrap();
        let err = place_object(&sphere, &bg, &cam(), &config()).unwrap_err();
        assert_eq!(err, GeometryError::NoSupportingSurface);
    }

    #[test]
    fn nearer_tabletop_wins() {
        let bg = merge(&[
            rect(-0.5, 0.5, -0.5, -2.8, -3.2),
            rect(-0.5, 0.5, -0.3, -0.8, -1.2),
        ]);
        let sphere = uv_sphere(Vec3::zeros(), 1.0, 16, 8, true).unwrap();
        let p = place_object(&sphere, &bg, &cam(), &config()).unwrap();
        assert!((p.contact - Vec3::new(0.0, -0.3, -1.0)).norm() < 1e-12);
        assert_eq!(p.surface, vec![2, 3]);
    }

    #[test]
    fn walls_and_ceilings_are_not_supports() {
        // A wall facing the camera and a ceiling above it.
        let wall = (
            vec![
                Vec3::new(-1.0, -1.0, -3.0),
                Vec3::new(1.0, -1.0, -3.0),
                Vec3::new(1.0, 1.0, -3.0),
                Vec3::new(-1.0, 1.0, -3.0),
            ],
            vec![[0u32, 1, 2], [0, 2, 3]],
        );
        let bg = merge(&[wall, rect(-1.0, 1.0, 1.0, -1.0, -3.0)]);
        let sphere = uv_sphere(Vec3::zeros(), 1.0, 16, 8, true).unwrap();
        assert!(place_object(&sphere, &bg, &cam(), &config()).is_err());
    }
}
