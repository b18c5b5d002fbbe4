use rand::Rng;
use rand_distr::StandardNormal;

use super::{Latent, SyncError};

/// Clean-sample estimate `z − σv`.
pub fn euler_estimate(z: &Latent, v: &Latent, sigma: f64) -> Result<Latent, SyncError> {
    z.zip_map(v, |z, v| z - sigma * v)
}

/// Classifier-free guidance `(1 + ω)v_c − ωv_u`.
pub fn cfg_velocity(cond: &Latent, uncond: &Latent, omega: f64) -> Result<Latent, SyncError> {
    if omega == 0.0 {
        cond.same_shape(uncond)?;
        return Ok(cond.clone());
    }
    cond.zip_map(uncond, |c, u| (1.0 + omega) * c - omega * u)
}

fn check_descending(sigma: f64, sigma_next: f64) -> Result<(), SyncError> {
    if !(sigma_next <= sigma) || sigma_next < 0.0 {
        return Err(SyncError::Schedule(format!("step from {sigma} to {sigma_next} is not descending")));
    }
    Ok(())
}

/// Forward Euler step `z + (σ' − σ)v`.
pub fn ode_step(z: &Latent, v: &Latent, sigma: f64, sigma_next: f64) -> Result<Latent, SyncError> {
    check_descending(sigma, sigma_next)?;
    let d = sigma_next - sigma;
    z.zip_map(v, |z, v| z + d * v)
}

/// Euler step plus `|σ − σ'|·ε` Gaussian noise.
pub fn sde_step<R: Rng + ?Sized>(
    z: &Latent,
    v: &Latent,
    sigma: f64,
    sigma_next: f64,
    rng: &mut R,
) -> Result<Latent, SyncError> {
    let mut out = ode_step(z, v, sigma, sigma_next)?;
    let scale = (sigma - sigma_next).abs();
    add_noise(&mut out, scale, rng);
    Ok(out)
}

pub(crate) fn add_noise<R: Rng + ?Sized>(z: &mut Latent, scale: f64, rng: &mut R) {
    if scale == 0.0 {
        return;
    }
    for v in &mut z.data {
        let e: f64 = rng.sample(StandardNormal);
        *v += scale * e;
    }
}

/// Step toward a corrected estimate: `z + ((σ' − σ)/σ)(z − ẑ)`.
///
/// Returns `ẑ` verbatim when `σ' = 0`.
pub fn guided_step(z: &Latent, estimate: &Latent, sigma: f64, sigma_next: f64) -> Result<Latent, SyncError> {
    if sigma == 0.0 {
        return Err(SyncError::AlreadyClean);
    }
    check_descending(sigma, sigma_next)?;
    z.same_shape(estimate)?;
    if sigma_next == 0.0 {
        return Ok(estimate.clone());
    }
    let r = (sigma_next - sigma) / sigma;
    z.zip_map(estimate, |z, e| z + r * (z - e))
}

/// Moves `z` from noise level `σ` up to `σ'` under the linear interpolant
/// `z_σ = (1 − σ)z₀ + σε`, preserving the marginal law.
pub fn renoise<R: Rng + ?Sized>(z: &Latent, sigma: f64, sigma_up: f64, rng: &mut R) -> Result<Latent, SyncError> {
    if !(sigma_up >= sigma) || sigma < 0.0 || sigma_up > 1.0 {
        return Err(SyncError::Schedule(format!("cannot renoise from {sigma} to {sigma_up}")));
    }
    if sigma_up == sigma {
        return Ok(z.clone());
    }
    if sigma >= 1.0 {
        return Err(SyncError::Schedule("cannot renoise pure noise".into()));
    }
    let a = (1.0 - sigma_up) / (1.0 - sigma);
    let s = (sigma_up * sigma_up - a * a * sigma * sigma).max(0.0).sqrt();
    let mut out = z.map(|v| a * v);
    add_noise(&mut out, s, rng);
    Ok(out)
}
