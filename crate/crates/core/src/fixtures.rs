//! Synthetic sphere-in-a-room scene for tests, benches and demos.
//!
//! The room is an axis-aligned box around the camera with smooth procedural
//! wall colors and a sky beyond it. Only what the camera sees of the room is
//! kept, as a mesh reconstructed from its depth map, so panorama rays that
//! leave the camera frustum see the sky.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Isometry3;
use rayon::prelude::*;

use crate::geometry::{
    depth_to_mesh, uv_sphere, Aabb, Bvh, DepthMap, GeometryError, PanoCamera, PerspectiveCamera, Ray, Shape,
    Sphere, TriMesh, Vec3, DEFAULT_DISCONTINUITY_RATIO,
};
use crate::imageops::{linear_to_srgb, write_pfm_gray, write_png, ColorSpace, ImageError, ImagePlane};
use crate::optics::{
    fresnel_reflectance, reflect_direction, trace_refraction_path, Medium, Terminal, TraceSettings,
};
use crate::sync::{synchronize_views, SyncError, SyncScene};
use crate::warpfield::{WarpScene, WarpSettings};

/// Interior of the room, in camera coordinates.
pub const ROOM: Aabb = Aabb { min: Vec3::new(-6.0, -1.0, -12.0), max: Vec3::new(6.0, 5.0, 6.0) };

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub width: usize,
    pub height: usize,
    pub pano_height: usize,
    pub vfov_deg: f64,
    pub sphere_center: Vec3,
    pub sphere_radius: f64,
    pub medium: Medium,
    /// Tessellate the sphere as `(slices, stacks)` instead of tracing it analytically.
    pub mesh: Option<(usize, usize)>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            pano_height: 128,
            vfov_deg: 50.0,
            sphere_center: Vec3::new(0.35, -0.1, -4.5),
            sphere_radius: 0.9,
            medium: Medium::GLASS,
            mesh: None,
        }
    }
}

/// Wall color at a world point.
pub fn room_color(p: &Vec3) -> [f64; 3] {
    [
        0.45 + 0.3 * (0.9 * p.x).sin() * (0.7 * p.z).cos(),
        0.4 + 0.25 * (0.6 * p.x + 0.5 * p.y + 0.8 * p.z).cos(),
        0.35 + 0.2 * (0.7 * p.y + 1.5).sin() + 0.1 * (0.5 * p.z).sin(),
    ]
}

/// Sky color along a unit direction.
pub fn sky_color(d: &Vec3) -> [f64; 3] {
    let az = d.x.atan2(-d.z);
    [0.3 + 0.15 * d.y + 0.05 * (3.0 * az).sin(), 0.45 + 0.2 * d.y, 0.7 + 0.15 * d.y + 0.05 * (2.0 * az).cos()]
}

/// Depth along the optical axis of the room wall behind each pixel.
pub fn room_depth(cam: &PerspectiveCamera) -> DepthMap {
    let samples = (0..cam.height)
        .flat_map(|y| (0..cam.width).map(move |x| (x, y)))
        .map(|(x, y)| {
            let ray = cam.pixel_center_ray(x, y);
            let inv = ray.direction.map(|c| 1.0 / c);
            let (_, exit) = ROOM.ray_interval(&ray.origin, &inv, 0.0, f64::INFINITY).expect("camera is inside");
            let p = ray.at(exit) - cam.center();
            p.dot(&cam.forward()) as f32
        })
        .collect();
    DepthMap::new(cam.width, cam.height, samples).expect("room depth is positive")
}

pub struct SphereFixture {
    pub spec: FixtureSpec,
    pub scene: WarpScene,
    pub depth: DepthMap,
    /// Room reconstructed from `depth`.
    pub background: TriMesh,
    pub sphere: Sphere,
    /// Tessellated sphere when `spec.mesh` is set.
    pub sphere_mesh: Option<TriMesh>,
    /// Room without the object, linear.
    pub clean: ImagePlane,
    /// Room and sky seen from the sphere center, linear.
    pub panorama: ImagePlane,
    /// Physically traced view with the sphere inserted, linear.
    pub composite: ImagePlane,
}

fn color_along(background: &dyn Shape, ray: &Ray, eps: f64) -> [f64; 3] {
    match background.intersect(ray, eps, f64::INFINITY) {
        Some(hit) => room_color(&hit.point),
        None => sky_color(&ray.direction),
    }
}

fn par_image(w: usize, h: usize, f: impl Fn(usize, usize) -> [f64; 3] + Sync) -> ImagePlane {
    let data: Vec<f64> = (0..h).into_par_iter().flat_map_iter(|y| (0..w).flat_map(|x| f(x, y)).collect::<Vec<_>>()).collect();
    ImagePlane::new(w, h, ColorSpace::Linear, data).expect("fixture colors are finite")
}

/// Builds the scene and renders its three reference images.
pub fn sphere_in_room(spec: &FixtureSpec) -> Result<SphereFixture, GeometryError> {
    let cam = PerspectiveCamera::from_vertical_fov(spec.width, spec.height, spec.vfov_deg, Isometry3::identity())?;
    let depth = room_depth(&cam);
    let background = depth_to_mesh(&depth, &cam, DEFAULT_DISCONTINUITY_RATIO)?;
    let sphere = Sphere::new(spec.sphere_center, spec.sphere_radius);
    let sphere_mesh = match spec.mesh {
        Some((slices, stacks)) => Some(uv_sphere(spec.sphere_center, spec.sphere_radius, slices, stacks, true)?),
        None => None,
    };
    let object: Box<dyn Shape> = match &sphere_mesh {
        Some(m) => Box::new(Bvh::build(m.clone())?),
        None => Box::new(sphere),
    };
    let pano = PanoCamera::new(spec.sphere_center, 2 * spec.pano_height, spec.pano_height)?;
    let scene = WarpScene::new(
        cam.clone(),
        pano.clone(),
        object,
        spec.medium,
        Box::new(Bvh::build(background.clone())?),
        WarpSettings::default(),
    );
    let eps = scene.epsilon();
    let bg = scene.background.as_ref();
    let clean = par_image(cam.width, cam.height, |x, y| color_along(bg, &cam.pixel_center_ray(x, y), eps));
    let panorama = par_image(pano.width, pano.height, |x, y| {
        let ray = Ray::from_unit(pano.center, pano.pixel_center_direction(x, y)).expect("unit direction");
        color_along(bg, &ray, eps)
    });
    let settings = TraceSettings { epsilon: eps, ..TraceSettings::default() };
    let composite = par_image(cam.width, cam.height, |x, y| {
        let ray = cam.pixel_center_ray(x, y);
        let path = trace_refraction_path(&ray, scene.object.as_ref(), spec.medium, bg, &settings)
            .expect("valid trace settings");
        if !path.touched_object() {
            return color_along(bg, &ray, eps);
        }
        let refracted = match &path.terminal {
            Terminal::HitBackground { point, .. } => room_color(point),
            Terminal::Escaped { direction } => sky_color(direction),
            Terminal::Absorbed => [0.0; 3],
        };
        let n = path.normals[0];
        let w = fresnel_reflectance(&ray.direction, &n, Medium::AIR.index(), spec.medium.index())
            .expect("unit vectors")
            .average();
        let d = reflect_direction(&ray.direction, &n).expect("unit vectors");
        let reflected = color_along(bg, &Ray::from_unit(path.vertices[1], d).expect("unit direction"), eps);
        std::array::from_fn(|c| refracted[c] + w * (reflected[c] - refracted[c]))
    });
    Ok(SphereFixture {
        spec: spec.clone(),
        scene,
        depth,
        background,
        sphere,
        sphere_mesh,
        clean,
        panorama,
        composite,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistentViews {
    pub perspective: ImagePlane,
    pub panorama: ImagePlane,
    pub iterations: usize,
    /// Largest sample change made by the last iteration.
    pub change: f64,
}

/// Iterates `synchronize_views` from a starting pair until the largest
/// update falls below `tolerance` or `max_iterations` is reached. The result
/// is a pair the synchronization leaves (nearly) unchanged.
pub fn consistent_views(
    scene: &SyncScene,
    perspective: ImagePlane,
    panorama: ImagePlane,
    lambda: f64,
    levels: usize,
    tolerance: f64,
    max_iterations: usize,
) -> Result<ConsistentViews, SyncError> {
    let (mut p, mut q) = (perspective, panorama);
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iterations && change > tolerance {
        let s = synchronize_views(&p, &q, scene, lambda, levels)?;
        change = s.perspective.max_abs_diff(&p).max(s.panorama.max_abs_diff(&q));
        p = s.perspective;
        q = s.panorama;
        iterations += 1;
    }
    Ok(ConsistentViews { perspective: p, panorama: q, iterations, change })
}

/// Wavefront OBJ text with per-vertex normals when the mesh has them.
pub fn obj_text(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    let normals = mesh.normals();
    for n in normals.unwrap_or_default() {
        let _ = writeln!(s, "vn {} {} {}", n.x, n.y, n.z);
    }
    for t in mesh.triangles() {
        let [a, b, c] = t.map(|i| i + 1);
        if normals.is_some() {
            let _ = writeln!(s, "f {a}//{a} {b}//{b} {c}//{c}");
        } else {
            let _ = writeln!(s, "f {a} {b} {c}");
        }
    }
    s
}

/// Files written by `write_scene_files`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFiles {
    pub config: PathBuf,
    pub object: PathBuf,
    pub depth: PathBuf,
    pub image: PathBuf,
    pub environment: PathBuf,
}

/// Writes a loadable scene: a unit sphere OBJ, the room depth as PFM, the
/// clean view and the environment panorama as PNG, and `scene.toml`.
pub fn write_scene_files(dir: &Path, spec: &FixtureSpec) -> Result<SceneFiles, ImageError> {
    let io = |p: &Path, e: std::io::Error| ImageError::File { path: p.display().to_string(), message: e.to_string() };
    let geo = |e: GeometryError| ImageError::Invalid(e.to_string());
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let fixture = sphere_in_room(spec).map_err(geo)?;
    let files = SceneFiles {
        config: dir.join("scene.toml"),
        object: dir.join("sphere.obj"),
        depth: dir.join("depth.pfm"),
        image: dir.join("clean.png"),
        environment: dir.join("environment.png"),
    };
    let (slices, stacks) = spec.mesh.unwrap_or((32, 16));
    let unit = uv_sphere(Vec3::zeros(), 1.0, slices, stacks, true).map_err(geo)?;
    fs::write(&files.object, obj_text(&unit)).map_err(|e| io(&files.object, e))?;
    write_pfm_gray(&files.depth, spec.width, spec.height, fixture.depth.samples())?;
    write_png(&linear_to_srgb(&fixture.clean)?, &files.image)?;
    write_png(&linear_to_srgb(&fixture.panorama)?, &files.environment)?;
    let toml = format!(
        "object = \"sphere.obj\"\n\
         depth = \"depth.pfm\"\n\
         image = \"clean.png\"\n\
         environment = \"environment.png\"\n\
         medium = {}\n\n\
         [camera]\nvfov_deg = {}\n\n\
         [panorama]\nwidth = {}\nheight = {}\n\n\
         [placement]\nphysical_size = {}\n\n\
         [sync]\nsteps = 4\npyramid_levels = 3\n",
        spec.medium.index(),
        spec.vfov_deg,
        2 * spec.pano_height,
        spec.pano_height,
        2.0 * spec.sphere_radius,
    );
    fs::write(&files.config, toml).map_err(|e| io(&files.config, e))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::parse_obj;
    use crate::geometry::MeshTag;

    fn small() -> FixtureSpec {
        FixtureSpec { width: 32, height: 32, pano_height: 16, ..Default::default() }
    }

    #[test]
    fn depth_matches_room_walls() {
        let f = sphere_in_room(&small()).unwrap();
        assert_eq!(f.depth.valid_count(), 32 * 32);
        // The center ray meets the far wall.
        let d = f.depth.get(16, 16).unwrap();
        assert!((d - 12.0).abs() < 0.5, "{d}");
    }

    #[test]
    fn composite_differs_only_on_the_sphere() {
        let f = sphere_in_room(&small()).unwrap();
        let mut inside = 0;
        for y in 0..32 {
            for x in 0..32 {
                let on = f.scene.primary_object_hit(&f.scene.camera.pixel_center_ray(x, y)).is_some();
                let same = f.composite.get(x, y) == f.clean.get(x, y);
                assert!(on || same, "({x}, {y})");
                inside += usize::from(on);
            }
        }
        assert!(inside > 20, "{inside}");
    }

    #[test]
    fn obj_round_trip() {
        let m = uv_sphere(Vec3::zeros(), 1.0, 8, 4, true).unwrap();
        let back = parse_obj(&obj_text(&m), MeshTag::Object).unwrap();
        assert_eq!(back.triangles(), m.triangles());
        assert!((back.vertices()[5] - m.vertices()[5]).norm() < 1e-12);
    }
}
