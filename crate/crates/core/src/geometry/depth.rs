use nalgebra::Point3;

use super::{GeometryError, MeshTag, PerspectiveCamera, TriMesh, Vec3, MIN_TRIANGLE_AREA};

pub const DEFAULT_DISCONTINUITY_RATIO: f64 = 3.0;

/// Per-pixel depth along the optical axis, in meters.
///
/// Zero and non-finite samples are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, depth: Vec<f32>) -> Result<Self, GeometryError> {
        if depth.len() != width * height {
            return Err(GeometryError::InvalidDepth(format!(
                "{} samples for a {width}x{height} map",
                depth.len()
            )));
        }
        if let Some(i) = depth.iter().position(|d| *d < 0.0) {
            return Err(GeometryError::InvalidDepth(format!("negative depth at sample {i}")));
        }
        Ok(Self { width, height, depth })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[f32] {
        &self.depth
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let d = self.depth[y * self.width + x];
        (d.is_finite() && d > 0.0).then_some(d as f64)
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite() && **d > 0.0).count()
    }
}

/// Unprojects a pixel center at depth `z` into world space.
pub(crate) fn unproject(cam: &PerspectiveCamera, x: usize, y: usize, z: f64) -> Vec3 {
    let px = x as f64 + 0.5;
    let py = y as f64 + 0.5;
    let local = Vec3::new((px - cam.cx) / cam.fx * z, -(py - cam.cy) / cam.fy * z, -z);
    cam.pose.transform_point(&Point3::from(local)).coords
}

/// Triangulates a depth map into a background mesh.
///
/// Each valid pixel becomes one vertex. Each 2x2 block of valid pixels yields
/// two camera-facing triangles unless its max/min depth ratio exceeds
/// `discontinuity_ratio`.
pub fn depth_to_mesh(depth: &DepthMap, cam: &PerspectiveCamera, discontinuity_ratio: f64) -> Result<TriMesh, GeometryError> {
    if depth.width != cam.width || depth.height != cam.height {
        return Err(GeometryError::InvalidDepth(format!(
            "depth map is {}x{} but camera is {}x{}",
            depth.width, depth.height, cam.width, cam.height
        )));
    }
    let (w, h) = (depth.width, depth.height);
    let mut index = vec![u32::MAX; w * h];
    let mut vertices = Vec::with_capacity(depth.valid_count());
    for y in 0..h {
        for x in 0..w {
            if let Some(z) = depth.get(x, y) {
                index[y * w + x] = vertices.len() as u32;
                vertices.push(unproject(cam, x, y, z));
            }
        }
    }
    if vertices.is_empty() {
        return Err(GeometryError::NoReconstructableSurface);
    }
    let mut triangles = Vec::with_capacity(2 * w * h);
    let area = |a: u32, b: u32, c: u32| {
        let (a, b, c) = (vertices[a as usize], vertices[b as usize], vertices[c as usize]);
        0.5 * (b - a).cross(&(c - a)).norm()
    };
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let corners = [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)];
            let mut zmin = f64::INFINITY;
            let mut zmax = 0.0f64;
            let mut ids = [0u32; 4];
            let mut complete = true;
            for (k, &(cx, cy)) in corners.iter().enumerate() {
                match depth.get(cx, cy) {
                    Some(z) => {
                        zmin = zmin.min(z);
                        zmax = zmax.max(z);
                        ids[k] = index[cy * w + cx];
                    }
                    None => complete = false,
                }
            }
            if !complete || zmax / zmin > discontinuity_ratio {
                continue;
            }
            let [a, b, c, d] = ids;
            for tri in [[a, c, b], [b, c, d]] {
                if area(tri[0], tri[1], tri[2]) > MIN_TRIANGLE_AREA {
                    triangles.push(tri);
                }
            }
        }
    }
    TriMesh::new(vertices, triangles, None, MeshTag::Background)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Isometry3;

    fn cam(w: usize, h: usize) -> PerspectiveCamera {
        PerspectiveCamera::new(w, h, 2.0, 2.0, w as f64 / 2.0, h as f64 / 2.0, Isometry3::identity()).unwrap()
    }

    #[test]
    fn constant_depth_gives_planar_quad() {
        let d = DepthMap::new(2, 2, vec![1.0; 4]).unwrap();
        let m = depth_to_mesh(&d, &cam(2, 2), 3.0).unwrap();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.triangles().len(), 2);
        for v in m.vertices() {
            assert_eq!(v.z, -1.0);
        }
        for t in 0..2 {
            // Facing the camera at the origin.
            assert!(m.face_normal(t).z > 0.999);
        }
    }

    #[test]
    fn discontinuity_drops_quad() {
        let d = DepthMap::new(2, 2, vec![1.0, 1.0, 10.0, 10.0]).unwrap();
        let m = depth_to_mesh(&d, &cam(2, 2), 3.0).unwrap();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.triangles().len(), 0);
    }

    #[test]
    fn ramp_keeps_every_quad() {
        let mut samples = Vec::new();
        for y in 0..4 {
            for x in 0..4 {
                samples.push(1.0 + (x + y) as f32 / 6.0);
            }
        }
        let d = DepthMap::new(4, 4, samples).unwrap();
        let m = depth_to_mesh(&d, &cam(4, 4), 3.0).unwrap();
        // Enumerate quads and discount those over the ratio threshold directly.
        let mut expected = 0;
        for y in 0..3 {
            for x in 0..3 {
                let zs = [d.get(x, y), d.get(x + 1, y), d.get(x, y + 1), d.get(x + 1, y + 1)].map(Option::unwrap);
                let (lo, hi) = zs.iter().fold((f64::MAX, 0.0f64), |(l, h), &z| (l.min(z), h.max(z)));
                if hi / lo <= 3.0 {
                    expected += 2;
                }
            }
        }
        assert_eq!(expected, 18);
        assert_eq!(m.triangles().len(), expected);
    }

    #[test]
    fn vertices_project_back_to_their_pixels() {
        let c = cam(5, 3);
        let samples: Vec<f32> = (0..15).map(|i| 1.0 + i as f32 * 0.1).collect();
        let d = DepthMap::new(5, 3, samples).unwrap();
        let m = depth_to_mesh(&d, &c, 3.0).unwrap();
        assert_eq!(m.vertices().len(), d.valid_count());
        for (i, v) in m.vertices().iter().enumerate() {
            let (x, y) = (i % 5, i / 5);
            let p = c.project_point(v).unwrap().pixel;
            assert!((p[0] - (x as f64 + 0.5)).abs() < 1e-12 && (p[1] - (y as f64 + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_inputs() {
        let d = DepthMap::new(2, 2, vec![0.0, f32::NAN, 0.0, f32::INFINITY]).unwrap();
        assert_eq!(depth_to_mesh(&d, &cam(2, 2), 3.0).unwrap_err(), GeometryError::NoReconstructableSurface);
        assert!(DepthMap::new(2, 2, vec![1.0, -1.0, 1.0, 1.0]).is_err());
        assert!(DepthMap::new(2, 2, vec![1.0; 3]).is_err());
        let d = DepthMap::new(2, 2, vec![1.0; 4]).unwrap();
        assert!(depth_to_mesh(&d, &cam(3, 2), 3.0).is_err());
    }

    #[test]
    fn missing_corner_skips_quad() {
        let d = DepthMap::new(3, 2, vec![1.0, 1.0, 1.0, 1.0, 0.0, 1.0]).unwrap();
        let m = depth_to_mesh(&d, &cam(3, 2), 3.0).unwrap();
        assert_eq!(m.vertices().len(), 5);
        assert_eq!(m.triangles().len(), 0);
    }
}
