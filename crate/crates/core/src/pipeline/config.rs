use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::geometry::{PlacementConfig, DEFAULT_DISCONTINUITY_RATIO};
use crate::optics::Medium;
use crate::sync::SyncConfig;
use crate::warpfield::WarpSettings;

/// Refractive index given directly or by material name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MediumSpec {
    Index(f64),
    Name(String),
}

impl MediumSpec {
    pub fn resolve(&self) -> Result<Medium, PipelineError> {
        match self {
            Self::Index(n) => Medium::new(*n).map_err(|e| PipelineError::Config(e.to_string())),
            Self::Name(name) => {
                Medium::named(name).ok_or_else(|| PipelineError::Config(format!("unknown material {name:?}")))
            }
        }
    }
}

/// Pinhole intrinsics. Explicit focal lengths win over the field of view;
/// the principal point defaults to the image center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub vfov_deg: f64,
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub cx: Option<f64>,
    pub cy: Option<f64>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self { vfov_deg: 60.0, fx: None, fy: None, cx: None, cy: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanoramaConfig {
    pub width: usize,
    pub height: usize,
}

impl Default for PanoramaConfig {
    fn default() -> Self {
        Self { width: 512, height: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarpConfig {
    pub max_events: usize,
    pub restrict_refraction_to_object: bool,
    pub occlusion_tolerance: f64,
    pub bbox_inflation: f64,
    pub discontinuity_ratio: f64,
}

impl Default for WarpConfig {
    fn default() -> Self {
        let w = WarpSettings::default();
        Self {
            max_events: w.max_events,
            restrict_refraction_to_object: w.restrict_refraction_to_object,
            occlusion_tolerance: w.occlusion_tolerance,
            bbox_inflation: w.bbox_inflation,
            discontinuity_ratio: DEFAULT_DISCONTINUITY_RATIO,
        }
    }
}

impl WarpConfig {
    pub fn settings(&self) -> WarpSettings {
        WarpSettings {
            max_events: self.max_events,
            restrict_refraction_to_object: self.restrict_refraction_to_object,
            occlusion_tolerance: self.occlusion_tolerance,
            bbox_inflation: self.bbox_inflation,
        }
    }
}

fn default_depth_scale() -> f64 {
    1.0
}

fn default_medium() -> MediumSpec {
    MediumSpec::Name("glass".into())
}

/// Scene description loaded from TOML. Relative paths resolve against the
/// directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Watertight object mesh (OBJ).
    pub object: PathBuf,
    /// Metric depth, PFM or 16-bit grayscale PNG.
    pub depth: PathBuf,
    /// Multiplier applied to stored depth samples.
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
    /// Clean background image.
    pub image: PathBuf,
    /// Optional environment panorama used by `render_refraction`.
    #[serde(default)]
    pub environment: Option<PathBuf>,
    #[serde(default = "default_medium")]
    pub medium: MediumSpec,
    #[serde(default)]
    pub camera: CameraConfig,
    #[serde(default)]
    pub panorama: PanoramaConfig,
    #[serde(default)]
    pub placement: PlacementConfig,
    #[serde(default)]
    pub warp: WarpConfig,
    #[serde(default)]
    pub sync: SyncConfig,
}

impl SceneConfig {
    /// Parses a scene file, resolves its paths and checks they exist.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        if !path.exists() {
            return Err(PipelineError::Missing(path.to_path_buf()));
        }
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Input { path: path.to_path_buf(), message: e.to_string() })?;
        let mut config: SceneConfig = toml::from_str(&text)
            .map_err(|e| PipelineError::Input { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.object);
        fix(&mut self.depth);
        fix(&mut self.image);
        if let Some(p) = self.environment.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        for p in [&self.object, &self.depth, &self.image].into_iter().chain(self.environment.as_ref()) {
            if !p.exists() {
                return Err(PipelineError::Missing(p.clone()));
            }
        }
        self.medium.resolve()?;
        if !(self.depth_scale > 0.0 && self.depth_scale.is_finite()) {
            return Err(PipelineError::Config(format!("depth_scale {} must be positive", self.depth_scale)));
        }
        if !(self.placement.physical_size > 0.0) {
            return Err(PipelineError::Config("placement.physical_size must be positive".into()));
        }
        if self.panorama.width != 2 * self.panorama.height || self.panorama.height == 0 {
            return Err(PipelineError::Config(format!(
                "panorama must be 2:1, got {}x{}",
                self.panorama.width, self.panorama.height
            )));
        }
        if self.warp.max_events < 2 {
            return Err(PipelineError::Config("warp.max_events must be at least 2".into()));
        }
        self.sync.validate()?;
        Ok(())
    }
}
