use super::{Latent, SyncError};

/// Position in the sampling loop passed to a denoiser.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStep {
    /// Zero-based step counter, counting time-travel re-executions.
    pub index: usize,
    /// Timestep `t` in `1..=T`.
    pub t: usize,
    pub sigma: f64,
}

/// Prompt token for a velocity request. Its bytes are opaque to the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning<'a> {
    Conditional(&'a [u8]),
    Unconditional,
}

/// Velocity predictor. Must return a latent of the input's shape and be
/// deterministic for fixed inputs.
pub trait Denoiser: Send + Sync {
    fn velocity(&self, z: &Latent, time: TimeStep, condition: Conditioning<'_>) -> Result<Latent, SyncError>;
}

/// Predicts the velocity that carries `z` straight to a fixed target:
/// `v = (z − target)/σ`, so the Euler estimate is the target itself.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    pub target: Latent,
}

impl Denoiser for OracleDenoiser {
    fn velocity(&self, z: &Latent, time: TimeStep, _: Conditioning<'_>) -> Result<Latent, SyncError> {
        if time.sigma == 0.0 {
            return Ok(Latent::zeros(z.shape().to_vec()));
        }
        z.zip_map(&self.target, |z, x| (z - x) / time.sigma)
    }
}

/// Returns the same velocity for every input; the unconditional branch may differ.
#[derive(Debug, Clone)]
pub struct ConstantDenoiser {
    pub conditional: Latent,
    pub unconditional: Latent,
}

impl Denoiser for ConstantDenoiser {
    fn velocity(&self, z: &Latent, _: TimeStep, condition: Conditioning<'_>) -> Result<Latent, SyncError> {
        let v = match condition {
            Conditioning::Conditional(_) => &self.conditional,
            Conditioning::Unconditional => &self.unconditional,
        };
        z.same_shape(v)?;
        Ok(v.clone())
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn velocity(&self, z: &Latent, time: TimeStep, condition: Conditioning<'_>) -> Result<Latent, SyncError> {
        (**self).velocity(z, time, condition)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn velocity(&self, z: &Latent, time: TimeStep, condition: Conditioning<'_>) -> Result<Latent, SyncError> {
        (**self).velocity(z, time, condition)
    }
}
