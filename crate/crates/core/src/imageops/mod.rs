//! Float RGB images and the per-pixel kernels applied to them.
//!
//! Array coordinates (`bilinear_sample`) put pixel `(i, j)` at `(i, j)`;
//! warp fields use pixel-edge coordinates, offset by half a pixel.

mod blend;
mod color;
mod io;
mod pyramid;

pub use blend::{blend_phi, fresnel_composite, PhiOutput};
pub use color::{linear_to_srgb, srgb_decode, srgb_encode, srgb_to_linear};
pub use io::{read_image, read_pfm, read_png, write_pfm, write_pfm_gray, write_png, write_png16, Pfm};
pub(crate) use io::read_pfm_raw;
pub use pyramid::{build_pyramid, build_pyramid_periodic, collapse_pyramid, pyramid_warp, warp_bilinear, LaplacianPyramid, WarpedImage};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("expected {expected} samples for {width}x{height}, got {got}")]
    SampleCount { width: usize, height: usize, expected: usize, got: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("image is {space:?}, expected {expected:?}")]
    Space { space: ColorSpace, expected: ColorSpace },
    #[error("image {width}x{height} is too small for {levels} pyramid levels")]
    TooSmall { width: usize, height: usize, levels: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Linear,
    Srgb,
}

/// Three-channel float raster, row-major, channels interleaved.
///
/// Samples must be finite. Negative values are allowed: they arise from
/// noisy latents and pyramid band arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    space: ColorSpace,
    data: Vec<f64>,
}

impl ImagePlane {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, space: ColorSpace, data: Vec<f64>) -> Result<Self, ImageError> {
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(ImageError::SampleCount { width, height, expected, got: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite(i));
        }
        Ok(Self { width, height, space, data })
    }

    pub fn constant(width: usize, height: usize, space: ColorSpace, rgb: [f64; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self { width, height, space, data }
    }

    pub fn zeros(width: usize, height: usize, space: ColorSpace) -> Self {
        Self::constant(width, height, space, [0.0; 3])
    }

    /// Panics if `f` returns a non-finite value.
    pub fn from_fn(width: usize, height: usize, space: ColorSpace, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, space, data).expect("from_fn produced a non-finite sample")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        assert!(rgb.iter().all(|v| v.is_finite()), "non-finite sample");
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Retags without converting.
    pub fn with_space(mut self, space: ColorSpace) -> Self {
        self.space = space;
        self
    }

    pub fn require_space(&self, expected: ColorSpace) -> Result<(), ImageError> {
        if self.space == expected {
            Ok(())
        } else {
            Err(ImageError::Space { space: self.space, expected })
        }
    }

    pub fn require_dims(&self, dims: (usize, usize), what: &str) -> Result<(), ImageError> {
        if self.dims() == dims {
            Ok(())
        } else {
            Err(ImageError::Dimensions(format!(
                "{what} is {}x{}, expected {}x{}",
                self.width, self.height, dims.0, dims.1
            )))
        }
    }

    /// Elementwise combination of two equally sized images.
    pub fn zip_map(&self, other: &ImagePlane, f: impl Fn(f64, f64) -> f64) -> Result<ImagePlane, ImageError> {
        other.require_dims(self.dims(), "second image")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        ImagePlane::new(self.width, self.height, self.space, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ImagePlane, ImageError> {
        ImagePlane::new(self.width, self.height, self.space, self.data.iter().map(|v| f(*v)).collect())
    }

    pub fn max_abs_diff(&self, other: &ImagePlane) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

/// Bilinear interpolation at array coordinate `coord`.
///
/// The flag is false when a corner with nonzero weight falls outside the
/// image; the value is then computed with clamped indices.
pub fn bilinear_sample(img: &ImagePlane, coord: [f64; 2]) -> ([f64; 3], bool) {
    let (w, h) = (img.width as isize, img.height as isize);
    let (x, y) = (coord[0], coord[1]);
    if !(x.is_finite() && y.is_finite()) || w == 0 || h == 0 {
        return ([0.0; 3], false);
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let mut valid = true;
    let mut out = [0.0; 3];
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let weight = wx * wy;
            let (cx, cy) = (x0 + dx, y0 + dy);
            let inside = cx >= 0 && cx < w && cy >= 0 && cy < h;
            if weight == 0.0 {
                continue;
            }
            valid &= inside;
            let p = img.get(cx.clamp(0, w - 1) as usize, cy.clamp(0, h - 1) as usize);
            for c in 0..3 {
                out[c] += weight * p[c];
            }
        }
    }
    (out, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            ImagePlane::new(1, 1, ColorSpace::Linear, vec![0.0, f64::NAN, 0.0]),
            Err(ImageError::NonFinite(1))
        ));
        assert!(ImagePlane::new(2, 1, ColorSpace::Linear, vec![0.0; 3]).is_err());
    }

    #[test]
    fn bilinear_exact_at_integers_and_midpoints() {
        let img = ImagePlane::from_fn(2, 1, ColorSpace::Linear, |x, _| [x as f64, 2.0 * x as f64, 0.0]);
        assert_eq!(bilinear_sample(&img, [1.0, 0.0]), ([1.0, 2.0, 0.0], true));
        assert_eq!(bilinear_sample(&img, [0.5, 0.0]), ([0.5, 1.0, 0.0], true));
        assert!(!bilinear_sample(&img, [1.5, 0.0]).1);
        assert!(!bilinear_sample(&img, [-0.1, 0.0]).1);
    }

    #[test]
    fn bilinear_matches_weighted_corner_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = ImagePlane::from_fn(7, 5, ColorSpace::Linear, |_, _| [rng.random(), rng.random(), rng.random()]);
        for _ in 0..200 {
            let x: f64 = rng.random_range(0.0..6.0);
            let y: f64 = rng.random_range(0.0..4.0);
            let (i, j) = (x as usize, y as usize);
            let (a, b) = (x - i as f64, y - j as f64);
            let (v, ok) = bilinear_sample(&img, [x, y]);
            assert!(ok);
            for c in 0..3 {
                let r = (1.0 - a) * (1.0 - b) * img.get(i, j)[c]
                    + a * (1.0 - b) * img.get(i + 1, j)[c]
                    + (1.0 - a) * b * img.get(i, j + 1)[c]
                    + a * b * img.get(i + 1, j + 1)[c];
                assert!((v[c] - r).abs() < 1e-12);
            }
        }
    }
}
