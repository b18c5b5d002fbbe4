//! Dense warp fields compiled by ray tracing a scene with one transparent
//! object, plus per-pixel Fresnel weights.
//!
//! Coordinates use the pixel-edge convention: a `W x H` image spans
//! `[0, W] x [0, H]` and pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`.

mod compile;
mod io;
mod surround;

pub use compile::{
    compile_bundle, compute_fresnel_weights, compute_pano_to_persp_reflection, compute_pano_to_persp_refraction,
    compute_persp_to_pano, compute_self_warp, WarpBundle, WarpScene, WarpSettings,
};
pub use io::{read_warp, read_warp_file, write_warp, write_warp_file, SNWF_MAGIC, SNWF_VERSION};
pub use surround::BoundingSurround;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WarpError {
    #[error("warp field dimensions {0}x{1} do not match {2} coordinates")]
    Shape(usize, usize, usize),
    #[error("not a warp field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("geometry: {0}")]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("optics: {0}")]
    Optics(#[from] crate::optics::OpticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceSpace {
    Perspective,
    Panorama,
}

impl SourceSpace {
    pub(crate) fn to_byte(self) -> u8 {
        match self {
            SourceSpace::Perspective => 0,
            SourceSpace::Panorama => 1,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(SourceSpace::Perspective),
            1 => Some(SourceSpace::Panorama),
            _ => None,
        }
    }
}

/// Per-target-pixel source coordinates and validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpField {
    target_width: usize,
    target_height: usize,
    source_width: usize,
    source_height: usize,
    source_space: SourceSpace,
    coords: Vec<[f32; 2]>,
    mask: Vec<bool>,
}

impl WarpField {
    pub fn new(
        target: (usize, usize),
        source: (usize, usize),
        source_space: SourceSpace,
        coords: Vec<[f32; 2]>,
        mask: Vec<bool>,
    ) -> Result<Self, WarpError> {
        let n = target.0 * target.1;
        if coords.len() != n || mask.len() != n {
            return Err(WarpError::Shape(target.0, target.1, coords.len().min(mask.len())));
        }
        Ok(Self {
            target_width: target.0,
            target_height: target.1,
            source_width: source.0,
            source_height: source.1,
            source_space,
            coords,
            mask,
        })
    }

    /// Every pixel reads its own center.
    pub fn identity(width: usize, height: usize, space: SourceSpace) -> Self {
        let coords = (0..height)
            .flat_map(|y| (0..width).map(move |x| [x as f32 + 0.5, y as f32 + 0.5]))
            .collect();
        Self::new((width, height), (width, height), space, coords, vec![true; width * height])
            .expect("sizes agree by construction")
    }

    /// Integer-free translation: target `p` reads source `p - offset`.
    pub fn translation(width: usize, height: usize, offset: [f64; 2]) -> Self {
        let mut coords = Vec::with_capacity(width * height);
        let mut mask = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let c = [x as f64 + 0.5 - offset[0], y as f64 + 0.5 - offset[1]];
                mask.push(c[0] >= 0.0 && c[0] <= width as f64 && c[1] >= 0.0 && c[1] <= height as f64);
                coords.push([c[0] as f32, c[1] as f32]);
            }
        }
        Self::new((width, height), (width, height), SourceSpace::Perspective, coords, mask).expect("sizes agree")
    }

    pub fn target_width(&self) -> usize {
        self.target_width
    }

    pub fn target_height(&self) -> usize {
        self.target_height
    }

    pub fn source_width(&self) -> usize {
        self.source_width
    }

    pub fn source_height(&self) -> usize {
        self.source_height
    }

    pub fn source_space(&self) -> SourceSpace {
        self.source_space
    }

    pub fn coords(&self) -> &[[f32; 2]] {
        &self.coords
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn coord(&self, x: usize, y: usize) -> [f32; 2] {
        self.coords[y * self.target_width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.target_width + x]
    }

    /// Source coordinate where the mask is set.
    pub fn get(&self, x: usize, y: usize) -> Option<[f32; 2]> {
        self.is_valid(x, y).then(|| self.coord(x, y))
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Clears the mask wherever `keep` is false.
    pub fn restrict(&mut self, keep: &[bool]) {
        for (m, k) in self.mask.iter_mut().zip(keep) {
            *m &= *k;
        }
    }

    /// Whether a continuous coordinate lies inside the source image domain.
    pub fn in_source_domain(&self, c: [f32; 2]) -> bool {
        let (w, h) = (self.source_width as f32, self.source_height as f32);
        c[0] >= 0.0 && c[0] <= w && c[1] >= 0.0 && c[1] <= h
    }
}

/// Unpolarized Fresnel reflectance at the first object hit of each pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FresnelWeightMap {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl FresnelWeightMap {
    pub fn new(width: usize, height: usize, weights: Vec<f64>) -> Result<Self, WarpError> {
        if weights.len() != width * height {
            return Err(WarpError::Shape(width, height, weights.len()));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(WarpError::Format(format!("Fresnel weight {w} outside [0, 1]")));
        }
        Ok(Self { width, height, weights })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, weights: vec![0.0; width * height] }
    }

    pub fn constant(width: usize, height: usize, w: f64) -> Result<Self, WarpError> {
        Self::new(width, height, vec![w; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.width + x]
    }
}
