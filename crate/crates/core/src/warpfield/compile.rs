use rayon::prelude::*;

use crate::geometry::{
    Aabb, Group, Hit, MeshTag, PanoCamera, PerspectiveCamera, Ray, Shape, Vec3, SELF_INTERSECTION_FRACTION,
};
use crate::optics::{
    fresnel_reflectance, reflect_direction, trace_refraction_path, LightPath, Medium, Terminal, TraceSettings,
};

use super::{BoundingSurround, FresnelWeightMap, SourceSpace, WarpError, WarpField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpSettings {
    pub max_events: usize,
    /// Clear π⁻¹ outside the object silhouette.
    pub restrict_refraction_to_object: bool,
    /// Relative depth slack of the perspective visibility test.
    pub occlusion_tolerance: f64,
    pub bbox_inflation: f64,
}

impl Default for WarpSettings {
    fn default() -> Self {
        Self {
            max_events: crate::optics::DEFAULT_MAX_EVENTS,
            restrict_refraction_to_object: false,
            occlusion_tolerance: 1e-3,
            bbox_inflation: BoundingSurround::DEFAULT_INFLATION,
        }
    }
}

/// Read-only scene shared by all warp compilations.
pub struct WarpScene {
    pub camera: PerspectiveCamera,
    pub pano: PanoCamera,
    pub object: Box<dyn Shape>,
    pub medium: Medium,
    pub background: Box<dyn Shape>,
    pub surround: BoundingSurround,
    pub settings: WarpSettings,
    trace: TraceSettings,
}

impl WarpScene {
    pub fn new(
        camera: PerspectiveCamera,
        pano: PanoCamera,
        object: Box<dyn Shape>,
        medium: Medium,
        background: Box<dyn Shape>,
        settings: WarpSettings,
    ) -> Self {
        // The box also encloses the object so camera rays always meet the object first.
        let extent: Aabb = object.bounds().union(&background.bounds());
        let surround = BoundingSurround::around(&extent, settings.bbox_inflation);
        let diagonal = if extent.is_empty() { 1.0 } else { extent.diagonal().norm() };
        let trace = TraceSettings {
            max_events: settings.max_events,
            epsilon: SELF_INTERSECTION_FRACTION * diagonal,
        };
        Self { camera, pano, object, medium, background, surround, settings, trace }
    }

    pub fn epsilon(&self) -> f64 {
        self.trace.epsilon
    }

    pub fn trace_settings(&self) -> TraceSettings {
        self.trace
    }

    fn background_with_bbox(&self) -> Group<'_> {
        Group(vec![&*self.background, &self.surround])
    }

    /// First object hit of a camera ray unless background geometry is nearer.
    pub fn primary_object_hit(&self, ray: &Ray) -> Option<Hit> {
        let hit = self.object.intersect(ray, self.trace.epsilon, f64::INFINITY)?;
        match self.background.intersect(ray, self.trace.epsilon, hit.distance) {
            Some(_) => None,
            None => Some(hit),
        }
    }

    fn refraction_path(&self, ray: &Ray, background: &dyn Shape) -> Result<LightPath, WarpError> {
        Ok(trace_refraction_path(ray, &*self.object, self.medium, background, &self.trace)?)
    }

    fn perspective_pixel(&self, p: &Vec3) -> Option<[f64; 2]> {
        let proj = self.camera.project_point(p)?;
        self.camera.contains(proj.pixel).then_some(proj.pixel)
    }

    /// Perspective pixel of `p` if the perspective camera sees it unobstructed.
    fn visible_pixel(&self, p: &Vec3) -> Option<[f64; 2]> {
        let proj = self.camera.project_point(p)?;
        if !self.camera.contains(proj.pixel) {
            return None;
        }
        let to = p - self.camera.center();
        let dist = to.norm();
        let ray = Ray::new(self.camera.center(), to).ok()?;
        let slack = self.settings.occlusion_tolerance * proj.depth;
        if self.background.intersect(&ray, self.trace.epsilon, dist - slack).is_some() {
            return None;
        }
        if self.object.intersect(&ray, self.trace.epsilon, dist).is_some() {
            return None;
        }
        Some(proj.pixel)
    }

    fn visible_direction(&self, d: &Vec3) -> Option<[f64; 2]> {
        let proj = self.camera.project_direction(d)?;
        if !self.camera.contains(proj.pixel) {
            return None;
        }
        let ray = Ray::new(self.camera.center(), *d).ok()?;
        if self.background.intersect(&ray, self.trace.epsilon, f64::INFINITY).is_some()
            || self.object.intersect(&ray, self.trace.epsilon, f64::INFINITY).is_some()
        {
            return None;
        }
        Some(proj.pixel)
    }

    fn fresnel(&self, d: &Vec3, n: &Vec3) -> Result<f64, WarpError> {
        Ok(fresnel_reflectance(d, n, 1.0, self.medium.index())?.average().clamp(0.0, 1.0))
    }
}

fn center(x: usize, y: usize) -> [f64; 2] {
    [x as f64 + 0.5, y as f64 + 0.5]
}

fn assemble(
    target: (usize, usize),
    source: (usize, usize),
    space: SourceSpace,
    values: Vec<Option<[f64; 2]>>,
) -> WarpField {
    let mask = values.iter().map(Option::is_some).collect();
    let coords = values
        .iter()
        .map(|v| v.map_or([0.0, 0.0], |c| [c[0] as f32, c[1] as f32]))
        .collect();
    WarpField::new(target, source, space, coords, mask).expect("one value per target pixel")
}

/// Evaluates `f` at every pixel of a `w x h` grid in parallel, row-major.
fn per_pixel<T, F>(w: usize, h: usize, f: F) -> Result<Vec<T>, WarpError>
where
    T: Send,
    F: Fn(usize, usize) -> Result<T, WarpError> + Sync,
{
    let rows: Vec<Vec<T>> = (0..h)
        .into_par_iter()
        .map(|y| (0..w).map(|x| f(x, y)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn persp_dims(scene: &WarpScene) -> (usize, usize) {
    (scene.camera.width, scene.camera.height)
}

fn pano_dims(scene: &WarpScene) -> (usize, usize) {
    (scene.pano.width, scene.pano.height)
}

/// π^R: object pixels read the background location their refracted ray hits.
pub fn compute_self_warp(scene: &WarpScene) -> Result<WarpField, WarpError> {
    let (w, h) = persp_dims(scene);
    let values = per_pixel(w, h, |x, y| {
        let ray = scene.camera.pixel_center_ray(x, y);
        let path = scene.refraction_path(&ray, &*scene.background)?;
        Ok(self_warp_value(scene, &path, x, y))
    })?;
    Ok(assemble((w, h), (w, h), SourceSpace::Perspective, values))
}

fn self_warp_value(scene: &WarpScene, path: &LightPath, x: usize, y: usize) -> Option<[f64; 2]> {
    if !path.touched_object() {
        return Some(center(x, y));
    }
    match path.terminal {
        Terminal::HitBackground { point, tag: MeshTag::Background, .. } => scene.perspective_pixel(&point),
        _ => None,
    }
}

/// π⁻¹: refracted rays read the panorama along the direction, seen from the
/// panorama center, of whatever they hit in background ∪ bounding box.
pub fn compute_pano_to_persp_refraction(scene: &WarpScene) -> Result<WarpField, WarpError> {
    let (w, h) = persp_dims(scene);
    let surround = scene.background_with_bbox();
    let values = per_pixel(w, h, |x, y| {
        let ray = scene.camera.pixel_center_ray(x, y);
        let path = scene.refraction_path(&ray, &surround)?;
        Ok(refraction_value(scene, &path))
    })?;
    Ok(assemble((w, h), pano_dims(scene), SourceSpace::Panorama, values))
}

fn refraction_value(scene: &WarpScene, path: &LightPath) -> Option<[f64; 2]> {
    if scene.settings.restrict_refraction_to_object && !path.touched_object() {
        return None;
    }
    match path.terminal {
        Terminal::HitBackground { point, .. } => Some(scene.pano.project_point(&point)),
        Terminal::Escaped { direction } => Some(scene.pano.project(&direction)),
        Terminal::Absorbed => None,
    }
}

/// π^{-R}: object pixels read the panorama along the mirrored camera ray.
pub fn compute_pano_to_persp_reflection(scene: &WarpScene) -> Result<WarpField, WarpError> {
    let (w, h) = persp_dims(scene);
    let values = per_pixel(w, h, |x, y| {
        let ray = scene.camera.pixel_center_ray(x, y);
        match scene.primary_object_hit(&ray) {
            Some(hit) => {
                let r = reflect_direction(&ray.direction, &hit.normal)?;
                Ok(Some(scene.pano.project(&r)))
            }
            None => Ok(None),
        }
    })?;
    Ok(assemble((w, h), pano_dims(scene), SourceSpace::Panorama, values))
}

/// π: panorama pixels read the perspective view where it sees the same
/// background point.
pub fn compute_persp_to_pano(scene: &WarpScene) -> Result<WarpField, WarpError> {
    let (w, h) = pano_dims(scene);
    let values = per_pixel(w, h, |x, y| Ok(persp_to_pano_value(scene, x, y)))?;
    Ok(assemble((w, h), persp_dims(scene), SourceSpace::Perspective, values))
}

fn persp_to_pano_value(scene: &WarpScene, x: usize, y: usize) -> Option<[f64; 2]> {
    let d = scene.pano.pixel_center_direction(x, y);
    let ray = Ray::new(scene.pano.center, d).ok()?;
    match scene.background.intersect(&ray, scene.trace.epsilon, f64::INFINITY) {
        Some(hit) => scene.visible_pixel(&hit.point),
        None => scene.visible_direction(&d),
    }
}

/// Unpolarized reflectance at each pixel's entry point into the object.
pub fn compute_fresnel_weights(scene: &WarpScene) -> Result<FresnelWeightMap, WarpError> {
    let (w, h) = persp_dims(scene);
    let weights = per_pixel(w, h, |x, y| {
        let ray = scene.camera.pixel_center_ray(x, y);
        match scene.primary_object_hit(&ray) {
            Some(hit) => scene.fresnel(&ray.direction, &hit.normal),
            None => Ok(0.0),
        }
    })?;
    FresnelWeightMap::new(w, h, weights)
}

/// All warps of a scene; π^I is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpBundle {
    pub self_warp: WarpField,
    pub pano_to_persp_refraction: WarpField,
    pub pano_to_persp_reflection: WarpField,
    pub persp_to_pano: WarpField,
    pub fresnel: FresnelWeightMap,
    /// Pixels whose camera ray reaches the object first.
    pub object_mask: Vec<bool>,
}

impl WarpBundle {
    pub fn perspective_dims(&self) -> (usize, usize) {
        (self.self_warp.target_width(), self.self_warp.target_height())
    }

    pub fn panorama_dims(&self) -> (usize, usize) {
        (self.persp_to_pano.target_width(), self.persp_to_pano.target_height())
    }
}

struct PixelWarps {
    self_warp: Option<[f64; 2]>,
    refraction: Option<[f64; 2]>,
    reflection: Option<[f64; 2]>,
    weight: f64,
    on_object: bool,
}

/// Compiles every field with a single refraction trace per perspective pixel.
pub fn compile_bundle(scene: &WarpScene) -> Result<WarpBundle, WarpError> {
    let (w, h) = persp_dims(scene);
    let surround = scene.background_with_bbox();
    let pixels = per_pixel(w, h, |x, y| {
        let ray = scene.camera.pixel_center_ray(x, y);
        let path = scene.refraction_path(&ray, &surround)?;
        if !path.touched_object() {
            return Ok(PixelWarps {
                self_warp: Some(center(x, y)),
                refraction: refraction_value(scene, &path),
                reflection: None,
                weight: 0.0,
                on_object: false,
            });
        }
        // The bounding box lies beyond all background geometry, so hitting it
        // means the background-only trace would have escaped.
        let n = path.normals[0];
        let reflected = reflect_direction(&ray.direction, &n)?;
        Ok(PixelWarps {
            self_warp: self_warp_value(scene, &path, x, y),
            refraction: refraction_value(scene, &path),
            reflection: Some(scene.pano.project(&reflected)),
            weight: scene.fresnel(&ray.direction, &n)?,
            on_object: true,
        })
    })?;
    let pano = compute_persp_to_pano(scene)?;
    let take = |f: fn(&PixelWarps) -> Option<[f64; 2]>| pixels.iter().map(f).collect::<Vec<_>>();
    let weights = pixels.iter().map(|p| p.weight).collect();
    Ok(WarpBundle {
        self_warp: assemble((w, h), (w, h), SourceSpace::Perspective, take(|p| p.self_warp)),
        pano_to_persp_refraction: assemble((w, h), pano_dims(scene), SourceSpace::Panorama, take(|p| p.refraction)),
        pano_to_persp_reflection: assemble((w, h), pano_dims(scene), SourceSpace::Panorama, take(|p| p.reflection)),
        persp_to_pano: pano,
        fresnel: FresnelWeightMap::new(w, h, weights)?,
        object_mask: pixels.iter().map(|p| p.on_object).collect(),
    })
}
