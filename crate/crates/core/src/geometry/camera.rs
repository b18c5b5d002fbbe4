//! Pinhole and equirectangular cameras.
//!
//! Continuous pixel coordinates put the image on `[0, width] x [0, height]`;
//! the center of pixel `(i, j)` sits at `(i + 0.5, j + 0.5)`.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Point3};

use super::{GeometryError, Ray, Vec3};

/// A point's image position together with its depth along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: [f64; 2],
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerspectiveCamera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera-to-world transform.
    pub pose: Isometry3<f64>,
}

impl PerspectiveCamera {
    pub fn new(
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        pose: Isometry3<f64>,
    ) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidCamera("zero-sized image".into()));
        }
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidCamera(format!("focal lengths must be positive, got ({fx}, {fy})")));
        }
        if !(cx >= 0.0 && cx <= width as f64 && cy >= 0.0 && cy <= height as f64) {
            return Err(GeometryError::InvalidCamera(format!("principal point ({cx}, {cy}) outside image")));
        }
        Ok(Self { width, height, fx, fy, cx, cy, pose })
    }

    /// Centered principal point and a vertical field of view in degrees.
    pub fn from_vertical_fov(width: usize, height: usize, vfov_deg: f64, pose: Isometry3<f64>) -> Result<Self, GeometryError> {
        let f = 0.5 * height as f64 / (0.5 * vfov_deg.to_radians()).tan();
        Self::new(width, height, f, f, width as f64 / 2.0, height as f64 / 2.0, pose)
    }

    pub fn center(&self) -> Vec3 {
        self.pose.translation.vector
    }

    pub fn forward(&self) -> Vec3 {
        self.pose.rotation * -Vec3::z()
    }

    /// The camera's `+y` axis in world coordinates.
    pub fn up(&self) -> Vec3 {
        self.pose.rotation * Vec3::y()
    }

    pub fn pixel_ray(&self, pixel: [f64; 2]) -> Ray {
        let local = Vec3::new((pixel[0] - self.cx) / self.fx, -(pixel[1] - self.cy) / self.fy, -1.0);
        let dir = self.pose.rotation * local;
        Ray::new(self.center(), dir).expect("camera ray direction is never zero")
    }

    pub fn pixel_center_ray(&self, x: usize, y: usize) -> Ray {
        self.pixel_ray([x as f64 + 0.5, y as f64 + 0.5])
    }

    /// Projects a world point. `None` for points on or behind the image plane.
    pub fn project_point(&self, p: &Vec3) -> Option<Projection> {
        let local = self.pose.inverse_transform_point(&Point3::from(*p)).coords;
        self.project_local(&local)
    }

    /// Projects a world direction (a point at infinity).
    pub fn project_direction(&self, d: &Vec3) -> Option<Projection> {
        let local = self.pose.rotation.inverse_transform_vector(d);
        self.project_local(&local)
    }

    fn project_local(&self, local: &Vec3) -> Option<Projection> {
        let depth = -local.z;
        if !(depth > 0.0) {
            return None;
        }
        Some(Projection {
            pixel: [
                self.cx + self.fx * local.x / depth,
                self.cy - self.fy * local.y / depth,
            ],
            depth,
        })
    }

    pub fn contains(&self, pixel: [f64; 2]) -> bool {
        pixel[0] >= 0.0 && pixel[0] <= self.width as f64 && pixel[1] >= 0.0 && pixel[1] <= self.height as f64
    }
}

/// Equirectangular camera aligned with the world axes.
///
/// `u = (atan2(d.x, -d.z) / 2π + 0.5) * width` and
/// `v = (0.5 - asin(d.y) / π) * height`, so world `-z` lands at the image
/// center and `+y` at the top row.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoCamera {
    pub center: Vec3,
    pub width: usize,
    pub height: usize,
}

impl PanoCamera {
    pub fn new(center: Vec3, width: usize, height: usize) -> Result<Self, GeometryError> {
        if height == 0 || width != 2 * height {
            return Err(GeometryError::InvalidCamera(format!(
                "equirectangular image must be 2:1, got {width}x{height}"
            )));
        }
        Ok(Self { center, width, height })
    }

    pub fn direction(&self, pixel: [f64; 2]) -> Vec3 {
        let lon = (pixel[0] / self.width as f64 - 0.5) * 2.0 * PI;
        let lat = (0.5 - pixel[1] / self.height as f64) * PI;
        let (sl, cl) = lat.sin_cos();
        Vec3::new(cl * lon.sin(), sl, -cl * lon.cos())
    }

    pub fn pixel_center_direction(&self, x: usize, y: usize) -> Vec3 {
        self.direction([x as f64 + 0.5, y as f64 + 0.5])
    }

    /// Equirectangular coordinates of a unit direction.
    pub fn project(&self, d: &Vec3) -> [f64; 2] {
        let d = d.normalize();
        let u = (d.x.atan2(-d.z) / (2.0 * PI) + 0.5) * self.width as f64;
        let v = (0.5 - d.y.clamp(-1.0, 1.0).asin() / PI) * self.height as f64;
        [u, v]
    }

    pub fn project_point(&self, p: &Vec3) -> [f64; 2] {
        self.project(&(p - self.center))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam() -> PerspectiveCamera {
        PerspectiveCamera::new(64, 48, 50.0, 55.0, 30.0, 20.0, Isometry3::identity()).unwrap()
    }

    #[test]
    fn principal_point_looks_down_the_axis() {
        let c = cam();
        let r = c.pixel_ray([30.0, 20.0]);
        assert!((r.direction - (-Vec3::z())).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(PerspectiveCamera::new(64, 48, 0.0, 1.0, 3.0, 3.0, Isometry3::identity()).is_err());
        assert!(PerspectiveCamera::new(64, 48, 1.0, 1.0, 65.0, 3.0, Isometry3::identity()).is_err());
        assert!(PanoCamera::new(Vec3::zeros(), 100, 40).is_err());
    }

    #[test]
    fn perspective_round_trip() {
        let pose = Isometry3::new(Vec3::new(0.3, -0.2, 1.0), Vec3::new(0.1, -0.3, 0.05));
        let c = PerspectiveCamera::new(64, 48, 50.0, 55.0, 30.0, 20.0, pose).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = [rng.random_range(0.0..64.0), rng.random_range(0.0..48.0)];
            let ray = c.pixel_ray(p);
            let q = c.project_direction(&ray.direction).unwrap().pixel;
            assert!((p[0] - q[0]).abs() < 1e-6 && (p[1] - q[1]).abs() < 1e-6);
            let q2 = c.project_point(&ray.at(3.7)).unwrap().pixel;
            assert!((p[0] - q2[0]).abs() < 1e-6 && (p[1] - q2[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn behind_camera_is_invalid() {
        let c = cam();
        assert!(c.project_direction(&Vec3::z()).is_none());
        assert!(c.project_point(&Vec3::new(0.0, 0.0, 1.0)).is_none());
    }

    #[test]
    fn pano_forward_anchor() {
        let p = PanoCamera::new(Vec3::zeros(), 200, 100).unwrap();
        assert_eq!(p.project(&-Vec3::z()), [100.0, 50.0]);
        let up = p.project(&Vec3::y());
        assert!(up[1].abs() < 1e-12);
        let d = p.direction([100.0, 50.0]);
        assert!((d + Vec3::z()).norm() < 1e-15);
    }

    #[test]
    fn pano_round_trip_random_directions() {
        let p = PanoCamera::new(Vec3::zeros(), 2048, 1024).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if d.norm() < 1e-3 {
                continue;
            }
            let d = d.normalize();
            let px = p.project(&d);
            let px2 = p.project(&p.direction(px));
            let du = (px[0] - px2[0]).abs();
            let du = du.min(2048.0 - du);
            assert!(du < 1e-6 && (px[1] - px2[1]).abs() < 1e-6, "{px:?} vs {px2:?}");
        }
    }
}
