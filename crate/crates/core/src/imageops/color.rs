//! sRGB transfer function (IEC 61966-2-1).

use super::{ColorSpace, ImageError, ImagePlane};

const A: f64 = 0.055;
const LINEAR_SLOPE: f64 = 12.92;
const ENCODED_KNEE: f64 = 0.04045;
const LINEAR_KNEE: f64 = 0.0031308;
const GAMMA: f64 = 2.4;

/// Encodes a linear value. Odd-symmetric for negative inputs.
pub fn srgb_encode(v: f64) -> f64 {
    let a = v.abs();
    let e = if a <= LINEAR_KNEE {
        a * LINEAR_SLOPE
    } else {
        (1.0 + A) * a.powf(1.0 / GAMMA) - A
    };
    e.copysign(v)
}

pub fn srgb_decode(v: f64) -> f64 {
    let a = v.abs();
    let l = if a <= ENCODED_KNEE {
        a / LINEAR_SLOPE
    } else {
        ((a + A) / (1.0 + A)).powf(GAMMA)
    };
    l.copysign(v)
}

pub fn srgb_to_linear(img: &ImagePlane) -> Result<ImagePlane, ImageError> {
    img.require_space(ColorSpace::Srgb)?;
    Ok(img.map(srgb_decode)?.with_space(ColorSpace::Linear))
}

pub fn linear_to_srgb(img: &ImagePlane) -> Result<ImagePlane, ImageError> {
    img.require_space(ColorSpace::Linear)?;
    Ok(img.map(srgb_encode)?.with_space(ColorSpace::Srgb))
}
