use super::{pyramid_warp, ColorSpace, ImageError, ImagePlane, WarpedImage};
use crate::warpfield::{FresnelWeightMap, WarpField};

#[derive(Debug, Clone, PartialEq)]
pub struct PhiOutput {
    pub image: ImagePlane,
    /// Pixels no source covered; they carry the first image unwarped.
    pub passthrough_pixels: usize,
}

/// Occlusion-masked blend of warped sources.
///
/// Per pixel and channel, with `W_i` the warped sources and `M_i` their
/// masks: `(1 − λ)·ΣMW/ΣM + λ·ΣM|W|W/ΣM|W|`. The value-weighted term falls
/// back to the plain mean when all contributing values are zero.
pub fn blend_phi(sources: &[(&ImagePlane, &WarpField)], lambda: f64, levels: usize) -> Result<PhiOutput, ImageError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(ImageError::Invalid(format!("blend weight {lambda} outside [0, 1]")));
    }
    let Some(&(first, first_warp)) = sources.first() else {
        return Err(ImageError::Invalid("no sources to blend".into()));
    };
    let dims = (first_warp.target_width(), first_warp.target_height());
    first.require_dims(dims, "first source")?;
    let mut warped: Vec<WarpedImage> = Vec::with_capacity(sources.len());
    for &(img, warp) in sources {
        img.require_space(ColorSpace::Linear)?;
        if (warp.target_width(), warp.target_height()) != dims {
            return Err(ImageError::Dimensions("warps disagree on target size".into()));
        }
        warped.push(pyramid_warp(img, warp, levels)?);
    }
    Ok(combine(first, &warped, lambda))
}

pub(crate) fn combine(first: &ImagePlane, warped: &[WarpedImage], lambda: f64) -> PhiOutput {
    let (w, h) = first.dims();
    let mut out = first.data().to_vec();
    let mut passthrough = 0;
    for p in 0..w * h {
        let contributing: Vec<&[f64]> = warped
            .iter()
            .filter(|s| s.mask[p])
            .map(|s| &s.image.data()[3 * p..3 * p + 3])
            .collect();
        if contributing.is_empty() {
            passthrough += 1;
            continue;
        }
        let count = contributing.len() as f64;
        for c in 0..3 {
            let mean = contributing.iter().map(|v| v[c]).sum::<f64>() / count;
            let den: f64 = contributing.iter().map(|v| v[c].abs()).sum();
            let weighted = if den > 0.0 {
                contributing.iter().map(|v| v[c].abs() * v[c]).sum::<f64>() / den
            } else {
                mean
            };
            out[3 * p + c] = (1.0 - lambda) * mean + lambda * weighted;
        }
    }
    PhiOutput {
        image: ImagePlane::new(w, h, ColorSpace::Linear, out).expect("blend of finite values"),
        passthrough_pixels: passthrough,
    }
}

/// `c' = c_refr + w·(c_refl − c_refr)`; exact at `w = 0` and `w = 1`.
pub fn fresnel_composite(
    refracted: &ImagePlane,
    reflected: &ImagePlane,
    weights: &FresnelWeightMap,
) -> Result<ImagePlane, ImageError> {
    refracted.require_space(ColorSpace::Linear)?;
    reflected.require_space(ColorSpace::Linear)?;
    reflected.require_dims(refracted.dims(), "reflected image")?;
    if (weights.width(), weights.height()) != refracted.dims() {
        return Err(ImageError::Dimensions("Fresnel weights do not match the image".into()));
    }
    let mut out = refracted.data().to_vec();
    for (p, &wt) in weights.weights().iter().enumerate() {
        for c in 0..3 {
            let i = 3 * p + c;
            out[i] = if wt == 0.0 {
                refracted.data()[i]
            } else if wt == 1.0 {
                reflected.data()[i]
            } else {
                refracted.data()[i] + wt * (reflected.data()[i] - refracted.data()[i])
            };
        }
    }
    ImagePlane::new(refracted.width(), refracted.height(), ColorSpace::Linear, out)
}
