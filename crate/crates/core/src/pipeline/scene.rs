use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};

use super::{PipelineError, SceneConfig};
use crate::geometry::{
    depth_to_mesh, place_object, read_obj, Bvh, DepthMap, MeshTag, PanoCamera, PerspectiveCamera, Placement, TriMesh,
};
use crate::imageops::{
    fresnel_composite, pyramid_warp, read_image, read_pfm_raw, write_pfm_gray, ColorSpace, ImagePlane,
};
use crate::warpfield::{read_warp_file, write_warp_file, FresnelWeightMap, WarpBundle, WarpScene};

/// File names written by `write_bundle`, in order: perspective self-warp,
/// panorama-to-perspective refraction and reflection, perspective-to-panorama,
/// Fresnel weights and object mask.
pub const BUNDLE_FILES: [&str; 6] = [
    "self_warp.snwf",
    "pano_to_persp_refraction.snwf",
    "pano_to_persp_reflection.snwf",
    "persp_to_pano.snwf",
    "fresnel.pfm",
    "object_mask.png",
];

pub struct LoadedScene {
    pub config: SceneConfig,
    /// Clean background, linear.
    pub clean: ImagePlane,
    /// Environment panorama, linear, when the scene names one.
    pub environment: Option<ImagePlane>,
    pub depth: DepthMap,
    pub placement: Placement,
    /// Object mesh in world space.
    pub object: TriMesh,
    pub warp_scene: WarpScene,
}

fn input_err(path: &Path, e: impl ToString) -> PipelineError {
    PipelineError::Input { path: path.to_path_buf(), message: e.to_string() }
}

fn output_err(path: &Path, e: impl ToString) -> PipelineError {
    PipelineError::Output { path: path.to_path_buf(), message: e.to_string() }
}

/// Reads a depth map from a single-channel PFM (first channel of a color
/// PFM) or a grayscale PNG, multiplying samples by `scale`.
pub fn load_depth(path: &Path, scale: f64, dims: (usize, usize)) -> Result<DepthMap, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Missing(path.to_path_buf()));
    }
    let is_pfm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    let (w, h, samples) = if is_pfm {
        let pfm = read_pfm_raw(path).map_err(|e| input_err(path, e))?;
        let s = pfm.data.iter().step_by(pfm.channels).map(|d| (*d as f64 * scale) as f32).collect();
        (pfm.width, pfm.height, s)
    } else {
        let img = image::open(path).map_err(|e| input_err(path, e))?.into_luma16();
        let s = img.pixels().map(|p| (p.0[0] as f64 * scale) as f32).collect();
        (img.width() as usize, img.height() as usize, s)
    };
    if (w, h) != dims {
        return Err(input_err(path, format!("depth is {w}x{h}, image is {}x{}", dims.0, dims.1)));
    }
    DepthMap::new(w, h, samples).map_err(|e| input_err(path, e))
}

fn build_camera(config: &SceneConfig, width: usize, height: usize) -> Result<PerspectiveCamera, PipelineError> {
    let c = &config.camera;
    let pose = nalgebra::Isometry3::identity();
    let cam = match (c.fx, c.fy) {
        (Some(fx), fy) => PerspectiveCamera::new(
            width,
            height,
            fx,
            fy.unwrap_or(fx),
            c.cx.unwrap_or(width as f64 / 2.0),
            c.cy.unwrap_or(height as f64 / 2.0),
            pose,
        ),
        (None, Some(_)) => return Err(PipelineError::Config("camera.fy given without camera.fx".into())),
        (None, None) => PerspectiveCamera::from_vertical_fov(width, height, c.vfov_deg, pose),
    };
    cam.map_err(|e| PipelineError::Config(e.to_string()))
}

/// Loads inputs, reconstructs the background, places the object and builds
/// the tracing scene. The panorama is centered on the placed object.
pub fn load_scene(config: &SceneConfig) -> Result<LoadedScene, PipelineError> {
    let clean = read_image(&config.image).map_err(|e| input_err(&config.image, e))?;
    let (w, h) = clean.dims();
    let camera = build_camera(config, w, h)?;
    let depth = load_depth(&config.depth, config.depth_scale, (w, h))?;
    let background = depth_to_mesh(&depth, &camera, config.warp.discontinuity_ratio)?;
    let object = read_obj(&config.object, MeshTag::Object).map_err(|e| input_err(&config.object, e))?;
    let placement = place_object(&object, &background, &camera, &config.placement).map_err(PipelineError::Placement)?;
    let object = object.transformed(&placement.transform);
    let pano = PanoCamera::new(object.bounds().center(), config.panorama.width, config.panorama.height)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let environment = match &config.environment {
        Some(path) => {
            let env = read_image(path).map_err(|e| input_err(path, e))?;
            if env.dims() != (pano.width, pano.height) {
                return Err(input_err(
                    path,
                    format!("environment is {}x{}, panorama is {}x{}", env.width(), env.height(), pano.width, pano.height),
                ));
            }
            Some(env)
        }
        None => None,
    };
    let warp_scene = WarpScene::new(
        camera,
        pano,
        Box::new(Bvh::build(object.clone())?),
        config.medium.resolve()?,
        Box::new(Bvh::build(background)?),
        config.warp.settings(),
    );
    Ok(LoadedScene { config: config.clone(), clean, environment, depth, placement, object, warp_scene })
}

/// Largest level count not above `levels` that fits every image size given.
pub fn fit_levels(levels: usize, dims: &[(usize, usize)]) -> usize {
    let smallest = dims.iter().map(|(w, h)| (*w).min(*h)).min().unwrap_or(1).max(1);
    levels.min(smallest.ilog2() as usize + 1).max(1)
}

fn refracted_background(bundle: &WarpBundle, clean: &ImagePlane, levels: usize) -> Result<ImagePlane, PipelineError> {
    let warped = pyramid_warp(clean, &bundle.self_warp, levels)?;
    let mut img = warped.image;
    // Object pixels without a background path receive no transmitted light.
    for (i, (&on, &valid)) in bundle.object_mask.iter().zip(&warped.mask).enumerate() {
        if on && !valid {
            img.set(i % img.width(), i / img.width(), [0.0; 3]);
        }
    }
    Ok(img)
}

/// Refracted background plus a constant-color reflection.
pub fn preview_refraction(
    bundle: &WarpBundle,
    clean: &ImagePlane,
    environment: [f64; 3],
    levels: usize,
) -> Result<ImagePlane, PipelineError> {
    let levels = fit_levels(levels, &[clean.dims()]);
    let refr = refracted_background(bundle, clean, levels)?;
    let refl = ImagePlane::constant(clean.width(), clean.height(), ColorSpace::Linear, environment);
    Ok(fresnel_composite(&refr, &refl, &bundle.fresnel)?)
}

/// Refracted background plus the environment panorama seen in reflection.
pub fn render_refraction(
    bundle: &WarpBundle,
    clean: &ImagePlane,
    environment: &ImagePlane,
    levels: usize,
) -> Result<ImagePlane, PipelineError> {
    let levels = fit_levels(levels, &[clean.dims(), environment.dims()]);
    let refr = refracted_background(bundle, clean, levels)?;
    let refl = pyramid_warp(environment, &bundle.pano_to_persp_reflection, levels)?;
    Ok(fresnel_composite(&refr, &refl.image, &bundle.fresnel)?)
}

/// Writes the bundle as `BUNDLE_FILES` inside `dir`.
pub fn write_bundle(bundle: &WarpBundle, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
    let paths: Vec<PathBuf> = BUNDLE_FILES.iter().map(|f| dir.join(f)).collect();
    let warps = [
        &bundle.self_warp,
        &bundle.pano_to_persp_refraction,
        &bundle.pano_to_persp_reflection,
        &bundle.persp_to_pano,
    ];
    for (warp, path) in warps.into_iter().zip(&paths) {
        write_warp_file(warp, path).map_err(|e| output_err(path, e))?;
    }
    let (w, h) = bundle.perspective_dims();
    let weights: Vec<f32> = bundle.fresnel.weights().iter().map(|v| *v as f32).collect();
    write_pfm_gray(&paths[4], w, h, &weights).map_err(|e| output_err(&paths[4], e))?;
    let mask = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([if bundle.object_mask[y as usize * w + x as usize] { 255 } else { 0 }])
    });
    mask.save(&paths[5]).map_err(|e| output_err(&paths[5], e))?;
    Ok(paths)
}

/// Reads a bundle written by `write_bundle`.
pub fn read_bundle(dir: &Path) -> Result<WarpBundle, PipelineError> {
    let paths: Vec<PathBuf> = BUNDLE_FILES.iter().map(|f| dir.join(f)).collect();
    if let Some(p) = paths.iter().find(|p| !p.exists()) {
        return Err(PipelineError::Missing(p.clone()));
    }
    let warp = |i: usize| read_warp_file(&paths[i]).map_err(|e| input_err(&paths[i], e));
    let pfm = read_pfm_raw(&paths[4]).map_err(|e| input_err(&paths[4], e))?;
    let fresnel = FresnelWeightMap::new(pfm.width, pfm.height, pfm.data.iter().map(|v| *v as f64).collect())
        .map_err(|e| input_err(&paths[4], e))?;
    let mask = image::open(&paths[5]).map_err(|e| input_err(&paths[5], e))?.into_luma8();
    let bundle = WarpBundle {
        self_warp: warp(0)?,
        pano_to_persp_refraction: warp(1)?,
        pano_to_persp_reflection: warp(2)?,
        persp_to_pano: warp(3)?,
        fresnel,
        object_mask: mask.pixels().map(|p| p.0[0] > 127).collect(),
    };
    if bundle.object_mask.len() != pfm.width * pfm.height {
        return Err(input_err(&paths[5], "object mask does not match the Fresnel map"));
    }
    Ok(bundle)
}
