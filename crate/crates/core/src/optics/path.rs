use crate::geometry::{Hit, MeshTag, Ray, Shape, Vec3};

use super::{reflect_direction, refract_direction, Medium, OpticsError, Refraction, DEFAULT_MAX_EVENTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathEvent {
    Refraction,
    TotalInternalReflection,
    Reflection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Terminal {
    /// Left the scene; the direction indexes an environment lookup.
    Escaped { direction: Vec3 },
    HitBackground { point: Vec3, tag: MeshTag, triangle: usize },
    /// Ran out of interaction budget inside the object.
    Absorbed,
}

/// Piecewise-linear ray trajectory.
///
/// `vertices[0]` is the ray origin and `directions[i]` leaves `vertices[i]`.
/// Interaction vertices `1..` carry one entry each in `events` and `normals`;
/// a background hit adds a final vertex with no event.
#[derive(Debug, Clone, PartialEq)]
pub struct LightPath {
    pub vertices: Vec<Vec3>,
    pub directions: Vec<Vec3>,
    /// Cumulative length at each vertex; starts at zero.
    pub lengths: Vec<f64>,
    pub events: Vec<PathEvent>,
    /// Surface normal at each interaction, oriented against the arriving ray.
    pub normals: Vec<Vec3>,
    pub terminal: Terminal,
}

impl LightPath {
    fn start(ray: &Ray) -> Self {
        Self {
            vertices: vec![ray.origin],
            directions: vec![ray.direction],
            lengths: vec![0.0],
            events: Vec::new(),
            normals: Vec::new(),
            terminal: Terminal::Absorbed,
        }
    }

    fn push(&mut self, hit: &Hit, outgoing: Vec3) {
        let last = *self.lengths.last().expect("path has an origin");
        self.vertices.push(hit.point);
        self.lengths.push(last + hit.distance);
        self.directions.push(outgoing);
    }

    /// Position at arc length `t`, following the final segment past its end.
    pub fn point_at(&self, t: f64) -> Vec3 {
        let i = match self.lengths.iter().rposition(|&l| l <= t) {
            Some(i) => i,
            None => 0,
        };
        self.vertices[i] + self.directions[i] * (t - self.lengths[i])
    }

    pub fn exit_direction(&self) -> Vec3 {
        *self.directions.last().expect("path has an origin")
    }

    /// True if the path interacted with the object at all.
    pub fn touched_object(&self) -> bool {
        !self.events.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSettings {
    pub max_events: usize,
    /// Hits closer than this to the segment origin are ignored.
    pub epsilon: f64,
}

impl Default for TraceSettings {
    fn default() -> Self {
        Self { max_events: DEFAULT_MAX_EVENTS, epsilon: 1e-9 }
    }
}

fn nearer(a: Option<Hit>, b: Option<Hit>) -> (Option<Hit>, bool) {
    match (a, b) {
        (Some(o), Some(g)) if o.distance <= g.distance => (Some(o), true),
        (Some(_), Some(g)) => (Some(g), false),
        (Some(o), None) => (Some(o), true),
        (None, g) => (g, false),
    }
}

/// Follows a camera ray through `object`, refracting at every crossing.
///
/// The ambient index is 1. Total internal reflection keeps the ray inside.
/// Tracing stops at the first background hit, when the ray leaves the scene,
/// or after `max_events` object interactions (terminal `Absorbed`).
pub fn trace_refraction_path(
    ray: &Ray,
    object: &dyn Shape,
    medium: Medium,
    background: &dyn Shape,
    settings: &TraceSettings,
) -> Result<LightPath, OpticsError> {
    if settings.max_events < 2 {
        return Err(OpticsError::MaxEvents(settings.max_events));
    }
    let mut path = LightPath::start(ray);
    let mut current = *ray;
    let mut inside = false;
    loop {
        let on_object = object.intersect(&current, settings.epsilon, f64::INFINITY);
        let limit = on_object.map_or(f64::INFINITY, |h| h.distance);
        let on_background = background.intersect(&current, settings.epsilon, limit.next_up());
        let (hit, is_object) = nearer(on_object, on_background);
        let Some(hit) = hit else {
            path.terminal = if inside {
                Terminal::Absorbed
            } else {
                Terminal::Escaped { direction: current.direction }
            };
            return Ok(path);
        };
        if !is_object {
            path.push(&hit, current.direction);
            path.terminal = Terminal::HitBackground {
                point: hit.point,
                tag: hit.tag,
                triangle: hit.triangle_index,
            };
            return Ok(path);
        }
        if path.events.len() >= settings.max_events {
            path.terminal = Terminal::Absorbed;
            return Ok(path);
        }
        let (nu_in, nu_out) = if inside { (medium.index(), 1.0) } else { (1.0, medium.index()) };
        let refraction = refract_direction(&current.direction, &hit.normal, nu_in, nu_out)?;
        let outgoing = refraction.direction();
        path.push(&hit, outgoing);
        path.normals.push(hit.normal);
        match refraction {
            Refraction::Refracted(_) => {
                path.events.push(PathEvent::Refraction);
                inside = !inside;
            }
            Refraction::TotalInternalReflection(_) => path.events.push(PathEvent::TotalInternalReflection),
        }
        current = Ray { origin: hit.point, direction: outgoing };
    }
}

/// First-bounce mirror path off the object's outer surface.
///
/// Rays that miss the object escape along their original direction.
pub fn trace_reflection_path(ray: &Ray, object: &dyn Shape, settings: &TraceSettings) -> Result<LightPath, OpticsError> {
    let mut path = LightPath::start(ray);
    match object.intersect(ray, settings.epsilon, f64::INFINITY) {
        Some(hit) => {
            let out = reflect_direction(&ray.direction, &hit.normal)?;
            path.push(&hit, out);
            path.normals.push(hit.normal);
            path.events.push(PathEvent::Reflection);
            path.terminal = Terminal::Escaped { direction: out };
        }
        None => path.terminal = Terminal::Escaped { direction: ray.direction },
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Bvh, Group, Sphere};

    fn no_background() -> Group<'static> {
        Group(vec![])
    }

    /// Closed-form deviation of a ray refracted twice by a sphere.
    fn sphere_deviation(impact: f64, nu: f64) -> f64 {
        let ti = impact.asin();
        let tt = (impact / nu).asin();
        2.0 * (ti - tt)
    }

    #[test]
    fn central_ray_passes_straight_through() {
        let s = Sphere::new(Vec3::new(0.0, 0.0, -5.0), 1.0);
        let ray = Ray::new(Vec3::zeros(), -Vec3::z()).unwrap();
        let p = trace_refraction_path(&ray, &s, Medium::GLASS, &no_background(), &TraceSettings::default()).unwrap();
        assert_eq!(p.events, vec![PathEvent::Refraction, PathEvent::Refraction]);
        assert!((p.exit_direction() + Vec3::z()).norm() < 1e-15);
        for v in &p.vertices {
            assert!(v.x.abs() < 1e-15 && v.y.abs() < 1e-15);
        }
        assert!(matches!(p.terminal, Terminal::Escaped { .. }));
    }

    #[test]
    fn off_axis_deviation_matches_closed_form() {
        let s = Sphere::new(Vec3::new(0.0, 0.0, -5.0), 1.0);
        for k in 1..10 {
            let b = k as f64 / 10.0;
            let ray = Ray::new(Vec3::new(0.0, b, 0.0), -Vec3::z()).unwrap();
            let p = trace_refraction_path(&ray, &s, Medium::GLASS, &no_background(), &TraceSettings::default()).unwrap();
            let dev = (-p.exit_direction().z).clamp(-1.0, 1.0).acos();
            assert!((dev - sphere_deviation(b, 1.5)).abs() < 1e-9, "b={b}");
            // Rays above the axis bend downward.
            assert!(p.exit_direction().y < 0.0);
        }
    }

    #[test]
    fn miss_is_one_segment_to_background() {
        let s = Sphere::new(Vec3::new(0.0, 0.0, -5.0), 1.0);
        let wall = Sphere::new(Vec3::new(0.0, 0.0, 0.0), 100.0);
        let ray = Ray::new(Vec3::new(3.0, 0.0, 0.0), -Vec3::z()).unwrap();
        let p = trace_refraction_path(&ray, &s, Medium::GLASS, &wall, &TraceSettings::default()).unwrap();
        assert!(p.events.is_empty());
        assert_eq!(p.vertices.len(), 2);
        assert!(matches!(p.terminal, Terminal::HitBackground { .. }));
        let expected = (100.0f64 * 100.0 - 9.0).sqrt();
        assert!((p.lengths[1] - expected).abs() < 1e-9);
    }

    #[test]
    fn path_invariants_hold() {
        let s = Sphere::new(Vec3::new(0.0, 0.0, -5.0), 1.0);
        let ray = Ray::new(Vec3::new(0.0, 0.7, 0.0), Vec3::new(0.05, 0.0, -1.0)).unwrap();
        let p = trace_refraction_path(&ray, &s, Medium::DIAMOND, &no_background(), &TraceSettings::default()).unwrap();
        for i in 0..p.vertices.len() - 1 {
            assert!((p.directions[i].norm() - 1.0).abs() < 1e-12);
            assert!(p.lengths[i + 1] > p.lengths[i]);
            let predicted = p.vertices[i] + p.directions[i] * (p.lengths[i + 1] - p.lengths[i]);
            assert!((predicted - p.vertices[i + 1]).norm() < 1e-12);
        }
        assert!((p.point_at(p.lengths[1]) - p.vertices[1]).norm() < 1e-12);
    }

    #[test]
    fn max_events_validation_and_absorption() {
        let s = Sphere::new(Vec3::new(0.0, 0.0, -5.0), 1.0);
        let ray = Ray::new(Vec3::zeros(), -Vec3::z()).unwrap();
        let bad = TraceSettings { max_events: 1, ..Default::default() };
        assert_eq!(
            trace_refraction_path(&ray, &s, Medium::GLASS, &no_background(), &bad).unwrap_err(),
            OpticsError::MaxEvents(1)
        );
        // Entering a diamond cube steeply: refraction, TIR off the side face, then out of budget.
        let cube = Aabb::from_points([Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0)]);
        let bvh = Bvh::build(cube.to_mesh(MeshTag::Object).unwrap()).unwrap();
        let t = 80f64.to_radians();
        let d = Vec3::new(t.sin(), 0.0, -t.cos());
        let ray = Ray::new(Vec3::new(0.5, 0.0, 1.0) - d * 3.0, d).unwrap();
        let tight = TraceSettings { max_events: 2, epsilon: 1e-9 };
        let p = trace_refraction_path(&ray, &bvh, Medium::DIAMOND, &no_background(), &tight).unwrap();
        assert_eq!(p.events, vec![PathEvent::Refraction, PathEvent::TotalInternalReflection]);
        assert_eq!(p.terminal, Terminal::Absorbed);
        let p = trace_refraction_path(&ray, &bvh, Medium::DIAMOND, &no_background(), &TraceSettings::default()).unwrap();
        assert_eq!(p.events.len(), 3);
        assert!(matches!(p.terminal, Terminal::Escaped { .. }));
    }

    #[test]
    fn head_on_reflection_returns_to_camera() {
        let s = Sphere::new(Vec3::new(0.0, 0.0, -5.0), 1.0);
        let ray = Ray::new(Vec3::zeros(), -Vec3::z()).unwrap();
        let p = trace_reflection_path(&ray, &s, &TraceSettings::default()).unwrap();
        assert_eq!(p.terminal, Terminal::Escaped { direction: Vec3::z() });
        let miss = Ray::new(Vec3::new(5.0, 0.0, 0.0), -Vec3::z()).unwrap();
        let p = trace_reflection_path(&miss, &s, &TraceSettings::default()).unwrap();
        assert_eq!(p.terminal, Terminal::Escaped { direction: -Vec3::z() });
        assert!(p.events.is_empty());
    }

    #[test]
    fn forty_five_degree_normal_reflects_ninety() {
        let s = Sphere::new(Vec3::new(0.0, 0.0, -5.0), 1.0);
        let b = std::f64::consts::FRAC_1_SQRT_2;
        let ray = Ray::new(Vec3::new(0.0, b, 0.0), -Vec3::z()).unwrap();
        let p = trace_reflection_path(&ray, &s, &TraceSettings::default()).unwrap();
        let Terminal::Escaped { direction } = p.terminal else { panic!() };
        assert!(direction.dot(&ray.direction).abs() < 1e-12);
        assert!((direction - Vec3::y()).norm() < 1e-12);
    }
}
