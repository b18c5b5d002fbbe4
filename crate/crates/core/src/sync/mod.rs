//! Flow-matching sampling and the two-view synchronized generation loop.

mod codec;
mod config;
mod denoiser;
mod generate;
mod plugin;
mod sampler;
mod schedule;

pub use codec::{IdentityCodec, LatentCodec};
pub use config::{SamplerMode, SyncConfig};
pub use denoiser::{Conditioning, ConstantDenoiser, Denoiser, OracleDenoiser, TimeStep};
pub use generate::{
    run_generation, synchronize_views, Branch, Generation, StepTrace, SyncScene, SyncedViews,
};
pub use plugin::{serve_denoiser, ProcessDenoiser, PLUGIN_MAGIC};
pub use sampler::{cfg_velocity, euler_estimate, guided_step, ode_step, renoise, sde_step};
pub use schedule::NoiseSchedule;

use thiserror::Error;

use crate::imageops::ImageError;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape(Vec<usize>, Vec<usize>),
    #[error("invalid noise schedule: {0}")]
    Schedule(String),
    #[error("already clean (sigma = 0)")]
    AlreadyClean,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("denoiser failed at step {step}: {message}")]
    Denoiser { step: usize, message: String },
    #[error("plug-in protocol violation at step {step}: {message}")]
    Protocol { step: usize, message: String },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Dense tensor with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Latent {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, SyncError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(SyncError::Shape(shape, vec![data.len()]));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Latent) -> Result<(), SyncError> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(SyncError::Shape(self.shape.clone(), other.shape.clone()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Latent {
        Latent { shape: self.shape.clone(), data: self.data.iter().map(|v| f(*v)).collect() }
    }

    pub fn zip_map(&self, other: &Latent, f: impl Fn(f64, f64) -> f64) -> Result<Latent, SyncError> {
        self.same_shape(other)?;
        Ok(Latent {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    /// Root-mean-square difference.
    pub fn rms_diff(&self, other: &Latent) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).powi(2)).sum();
        (s / self.data.len() as f64).sqrt()
    }
}
