use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::imageops::{ColorSpace, ImagePlane};

pub const PSNR_CAP_DB: f64 = 99.0;
const BINS: usize = 256;

/// Masked comparison against a reference render. The optional fields are
/// left for external tools to fill in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub masked_psnr: f64,
    pub masked_mae: f64,
    pub valid_pixel_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lpips: Option<f64>,
}

/// Rec. 709 luma of a linear image.
pub fn luma(img: &ImagePlane) -> Vec<f64> {
    img.data().chunks_exact(3).map(|p| 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2]).collect()
}

/// Piecewise-linear CDF over `BINS` uniform bins spanning the sample range.
struct Cdf {
    lo: f64,
    hi: f64,
    knots: Vec<f64>,
}

impl Cdf {
    fn new(values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = vec![0usize; BINS];
        if hi > lo {
            for v in values {
                counts[Self::bin(*v, lo, hi)] += 1;
            }
        }
        let n = values.len() as f64;
        let mut knots = Vec::with_capacity(BINS + 1);
        knots.push(0.0);
        let mut acc = 0usize;
        for c in counts {
            acc += c;
            knots.push(acc as f64 / n);
        }
        Self { lo, hi, knots }
    }

    fn bin(v: f64, lo: f64, hi: f64) -> usize {
        (((v - lo) / (hi - lo) * BINS as f64).floor().max(0.0) as usize).min(BINS - 1)
    }

    fn eval(&self, v: f64) -> f64 {
        if self.hi <= self.lo {
            return 0.5;
        }
        let pos = ((v - self.lo) / (self.hi - self.lo) * BINS as f64).clamp(0.0, BINS as f64);
        let k = (pos.floor() as usize).min(BINS - 1);
        let f = pos - k as f64;
        self.knots[k] + f * (self.knots[k + 1] - self.knots[k])
    }

    fn inverse(&self, c: f64) -> f64 {
        if self.hi <= self.lo {
            return self.lo;
        }
        let k = self.knots[1..].partition_point(|x| *x < c).min(BINS - 1);
        let seg = self.knots[k + 1] - self.knots[k];
        let f = if seg > 0.0 { ((c - self.knots[k]) / seg).clamp(0.0, 1.0) } else { 0.0 };
        self.lo + (k as f64 + f) / BINS as f64 * (self.hi - self.lo)
    }
}

/// Remaps `values` so their distribution follows `reference`.
pub fn histogram_match(values: &[f64], reference: &[f64]) -> Vec<f64> {
    if values.is_empty() || reference.is_empty() {
        return values.to_vec();
    }
    let (src, dst) = (Cdf::new(values), Cdf::new(reference));
    values.iter().map(|v| dst.inverse(src.eval(*v))).collect()
}

fn check(result: &ImagePlane, reference: &ImagePlane, mask: &[bool]) -> Result<usize, PipelineError> {
    result.require_space(ColorSpace::Linear)?;
    reference.require_space(ColorSpace::Linear)?;
    reference.require_dims(result.dims(), "reference")?;
    if mask.len() != result.width() * result.height() {
        return Err(PipelineError::Metric(format!(
            "mask has {} entries for a {}x{} image",
            mask.len(),
            result.width(),
            result.height()
        )));
    }
    match mask.iter().filter(|m| **m).count() {
        0 => Err(PipelineError::Metric("mask is empty".into())),
        n => Ok(n),
    }
}

fn masked(values: Vec<f64>, mask: &[bool]) -> Vec<f64> {
    values.into_iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| v).collect()
}

/// PSNR in dB (peak 1) between the grayscale images over `mask`, after
/// histogram-matching the result to the reference inside the mask.
pub fn masked_psnr(result: &ImagePlane, reference: &ImagePlane, mask: &[bool]) -> Result<f64, PipelineError> {
    let n = check(result, reference, mask)?;
    let r = masked(luma(result), mask);
    let f = masked(luma(reference), mask);
    let matched = histogram_match(&r, &f);
    let mse = matched.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
    if mse <= 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP_DB))
}

/// Mean absolute RGB difference over `mask`.
pub fn masked_mae(result: &ImagePlane, reference: &ImagePlane, mask: &[bool]) -> Result<f64, PipelineError> {
    let n = check(result, reference, mask)?;
    let sum: f64 = result
        .data()
        .chunks_exact(3)
        .zip(reference.data().chunks_exact(3))
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|((a, b), _)| (0..3).map(|c| (a[c] - b[c]).abs()).sum::<f64>())
        .sum();
    Ok(sum / (3 * n) as f64)
}

pub fn score(result: &ImagePlane, reference: &ImagePlane, mask: &[bool]) -> Result<MetricReport, PipelineError> {
    Ok(MetricReport {
        masked_psnr: masked_psnr(result, reference, mask)?,
        masked_mae: masked_mae(result, reference, mask)?,
        valid_pixel_count: check(result, reference, mask)?,
        clip_score: None,
        image_reward: None,
        lpips: None,
    })
}
