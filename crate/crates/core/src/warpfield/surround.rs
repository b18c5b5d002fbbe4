use crate::geometry::{Aabb, Hit, MeshTag, Ray, Shape, Vec3};

/// Stand-in for unobserved geometry: the inside of an axis-aligned box.
///
/// Only the exit point of a ray is reported, so a ray starting outside the
/// box passes through its near side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingSurround {
    pub aabb: Aabb,
}

impl BoundingSurround {
    pub const DEFAULT_INFLATION: f64 = 0.1;

    /// Box around `bounds`, each extent grown by `fraction`.
    pub fn around(bounds: &Aabb, fraction: f64) -> Self {
        Self { aabb: bounds.inflated(fraction) }
    }
}

impl Shape for BoundingSurround {
    fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        let mut exit = f64::INFINITY;
        let mut entry = f64::NEG_INFINITY;
        let mut axis = 0;
        for k in 0..3 {
            let d = ray.direction[k];
            if d == 0.0 {
                if ray.origin[k] < self.aabb.min[k] || ray.origin[k] > self.aabb.max[k] {
                    return None;
                }
                continue;
            }
            let t0 = (self.aabb.min[k] - ray.origin[k]) / d;
            let t1 = (self.aabb.max[k] - ray.origin[k]) / d;
            let (near, far) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            entry = entry.max(near);
            if far < exit {
                exit = far;
                axis = k;
            }
        }
        if entry > exit || !(exit > t_min && exit < t_max) {
            return None;
        }
        let mut normal = Vec3::zeros();
        normal[axis] = -ray.direction[axis].signum();
        let face = 2 * axis + usize::from(ray.direction[axis] > 0.0);
        Some(Hit {
            point: ray.at(exit),
            normal,
            distance: exit,
            tag: MeshTag::BoundingBox,
            triangle_index: face,
            front_face: false,
        })
    }

    fn bounds(&self) -> Aabb {
        self.aabb
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> BoundingSurround {
        BoundingSurround {
            aabb: Aabb::from_points([Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0)]),
        }
    }

    #[test]
    fn inside_ray_hits_far_wall() {
        let r = Ray::new(Vec3::new(0.2, 0.0, 0.0), Vec3::x()).unwrap();
        let h = unit().intersect(&r, 0.0, f64::INFINITY).unwrap();
        assert!((h.distance - 0.8).abs() < 1e-15);
        assert_eq!(h.normal, -Vec3::x());
        assert_eq!(h.tag, MeshTag::BoundingBox);
    }

    #[test]
    fn outside_ray_reports_exit_not_entry() {
        let r = Ray::new(Vec3::new(0.0, 0.0, 5.0), -Vec3::z()).unwrap();
        let h = unit().intersect(&r, 0.0, f64::INFINITY).unwrap();
        assert!((h.distance - 6.0).abs() < 1e-15);
        let away = Ray::new(Vec3::new(0.0, 0.0, 5.0), Vec3::z()).unwrap();
        assert!(unit().intersect(&away, 0.0, f64::INFINITY).is_none());
        let beside = Ray::new(Vec3::new(3.0, 0.0, 5.0), -Vec3::z()).unwrap();
        assert!(unit().intersect(&beside, 0.0, f64::INFINITY).is_none());
    }

    #[test]
    fn inflation_grows_extent() {
        let s = BoundingSurround::around(&unit().aabb, 0.1);
        assert!((s.aabb.max.x - 1.1).abs() < 1e-15);
    }
}
