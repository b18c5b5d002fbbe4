//! Scene files, artifact orchestration and evaluation metrics.

mod config;
mod metrics;
mod scene;

pub use config::{CameraConfig, MediumSpec, PanoramaConfig, SceneConfig, WarpConfig};
pub use metrics::{histogram_match, luma, masked_mae, masked_psnr, score, MetricReport, PSNR_CAP_DB};
pub use scene::{
    fit_levels, load_depth, load_scene, preview_refraction, read_bundle, render_refraction, write_bundle, LoadedScene,
    BUNDLE_FILES,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::imageops::ImageError;
use crate::sync::SyncError;
use crate::warpfield::WarpError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}: file not found")]
    Missing(PathBuf),
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("placement failed: {0}")]
    Placement(GeometryError),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("warp: {0}")]
    Warp(#[from] WarpError),
    #[error("image: {0}")]
    Image(#[from] ImageError),
    #[error("sampling: {0}")]
    Sync(#[from] SyncError),
    #[error("metric: {0}")]
    Metric(String),
    #[error("{path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl PipelineError {
    /// Process exit status: 2 bad input, 3 physics or placement, 4 denoiser
    /// protocol, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Missing(_) | Self::Input { .. } | Self::Config(_) | Self::Image(_) | Self::Metric(_) => 2,
            Self::Placement(_) | Self::Geometry(_) => 3,
            Self::Warp(WarpError::Io(_)) | Self::Output { .. } => 1,
            Self::Warp(WarpError::Format(_)) => 2,
            Self::Warp(_) => 3,
            Self::Sync(SyncError::Protocol { .. } | SyncError::Denoiser { .. }) => 4,
            Self::Sync(SyncError::Image(_) | SyncError::Config(_)) => 2,
            Self::Sync(_) => 1,
        }
    }
}
