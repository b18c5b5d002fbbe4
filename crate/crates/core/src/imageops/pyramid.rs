use rayon::prelude::*;

use super::{bilinear_sample, ImageError, ImagePlane};
use crate::warpfield::{SourceSpace, WarpField};

/// 5-tap binomial kernel.
const KERNEL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Reflect-101 index into `0..n` (`-1 -> 1`, `n -> n - 2`).
fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let i = i.rem_euclid(period);
    (if i >= n as isize { period - i } else { i }) as usize
}

fn half(n: usize) -> usize {
    n.div_ceil(2)
}

/// Blur then keep even rows and columns.
fn reduce(img: &ImagePlane, wrap: bool) -> ImagePlane {
    let (w, h) = img.dims();
    let (w2, h2) = (half(w), half(h));
    let src = img.data();
    let mut tmp = vec![0.0; w2 * h * 3];
    for y in 0..h {
        for x2 in 0..w2 {
            let o = 3 * (y * w2 + x2);
            for (k, wgt) in KERNEL.iter().enumerate() {
                let i = 2 * x2 as isize + k as isize - 2;
                let sx = if wrap { i.rem_euclid(w as isize) as usize } else { reflect101(i, w) };
                let s = 3 * (y * w + sx);
                for c in 0..3 {
                    tmp[o + c] += wgt * src[s + c];
                }
            }
        }
    }
    let mut out = vec![0.0; w2 * h2 * 3];
    for y2 in 0..h2 {
        for (k, wgt) in KERNEL.iter().enumerate() {
            let sy = reflect101(2 * y2 as isize + k as isize - 2, h);
            let row = &tmp[3 * sy * w2..3 * (sy + 1) * w2];
            let dst = &mut out[3 * y2 * w2..3 * (y2 + 1) * w2];
            for (d, s) in dst.iter_mut().zip(row) {
                *d += wgt * s;
            }
        }
    }
    ImagePlane::new(w2, h2, img.space(), out).expect("reduce keeps samples finite")
}

/// For each output index, the coarse taps and weights of linear
/// interpolation at half the index, clamped (or wrapped) at the far edge.
fn expand_taps(n_out: usize, wrap: bool) -> Vec<Vec<(usize, f64)>> {
    let m = half(n_out);
    (0..n_out)
        .map(|i| {
            let j = i / 2;
            if i % 2 == 0 || (j + 1 >= m && !wrap) {
                vec![(j.min(m - 1), 1.0)]
            } else if j + 1 >= m {
                vec![(j, 0.5), (0, 0.5)]
            } else {
                vec![(j, 0.5), (j + 1, 0.5)]
            }
        })
        .collect()
}

/// Upsamples `img` to `w x h`, the inverse of one `reduce` step.
fn expand(img: &ImagePlane, w: usize, h: usize, wrap: bool) -> ImagePlane {
    let (ws, hs) = img.dims();
    debug_assert_eq!((half(w), half(h)), (ws, hs));
    let src = img.data();
    let xt = expand_taps(w, wrap);
    let yt = expand_taps(h, false);
    let mut tmp = vec![0.0; w * hs * 3];
    for y in 0..hs {
        for (x, taps) in xt.iter().enumerate() {
            let o = 3 * (y * w + x);
            for &(sx, wgt) in taps {
                let s = 3 * (y * ws + sx);
                for c in 0..3 {
                    tmp[o + c] += wgt * src[s + c];
                }
            }
        }
    }
    let mut out = vec![0.0; w * h * 3];
    for (y, taps) in yt.iter().enumerate() {
        let dst = &mut out[3 * y * w..3 * (y + 1) * w];
        for &(sy, wgt) in taps {
            let row = &tmp[3 * sy * w..3 * (sy + 1) * w];
            for (d, s) in dst.iter_mut().zip(row) {
                *d += wgt * s;
            }
        }
    }
    ImagePlane::new(w, h, img.space(), out).expect("expand keeps samples finite")
}

/// Band-pass levels, finest first, plus the low-pass residual.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPyramid {
    pub bands: Vec<ImagePlane>,
    pub base: ImagePlane,
    /// Built with horizontal wrap-around.
    pub periodic: bool,
}

impl LaplacianPyramid {
    pub fn levels(&self) -> usize {
        self.bands.len() + 1
    }
}

fn check_levels(w: usize, h: usize, levels: usize) -> Result<(), ImageError> {
    if levels == 0 || levels > 30 || w < 1 << (levels - 1) || h < 1 << (levels - 1) {
        return Err(ImageError::TooSmall { width: w, height: h, levels });
    }
    Ok(())
}

pub fn build_pyramid(img: &ImagePlane, levels: usize) -> Result<LaplacianPyramid, ImageError> {
    build(img, levels, false)
}

/// Pyramid of a panorama, periodic in `x`.
pub fn build_pyramid_periodic(img: &ImagePlane, levels: usize) -> Result<LaplacianPyramid, ImageError> {
    build(img, levels, true)
}

fn build(img: &ImagePlane, levels: usize, wrap: bool) -> Result<LaplacianPyramid, ImageError> {
    check_levels(img.width(), img.height(), levels)?;
    let mut bands = Vec::with_capacity(levels - 1);
    let mut current = img.clone();
    for _ in 1..levels {
        let coarse = reduce(&current, wrap);
        let up = expand(&coarse, current.width(), current.height(), wrap);
        bands.push(current.zip_map(&up, |a, b| a - b)?);
        current = coarse;
    }
    Ok(LaplacianPyramid { bands, base: current, periodic: wrap })
}

pub fn collapse_pyramid(pyr: &LaplacianPyramid) -> ImagePlane {
    pyr.bands.iter().rev().fold(pyr.base.clone(), |acc, band| {
        let up = expand(&acc, band.width(), band.height(), pyr.periodic);
        band.zip_map(&up, |a, b| a + b).expect("band sizes follow the pyramid")
    })
}

/// Warped image and the warp's validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedImage {
    pub image: ImagePlane,
    pub mask: Vec<bool>,
}

/// Local minification of the warp: the larger of the per-axis source steps,
/// each taken from the smoother one-sided difference.
fn footprint(warp: &WarpField, period: Option<f64>) -> Vec<f64> {
    let (w, h) = (warp.target_width(), warp.target_height());
    let mask = warp.mask();
    let coords: Vec<[f64; 2]> = warp.coords().iter().map(|c| [c[0] as f64, c[1] as f64]).collect();
    let step = |a: [f64; 2], b: [f64; 2]| {
        let mut dx = b[0] - a[0];
        if let Some(p) = period {
            dx -= p * (dx / p).round();
        }
        (dx * dx + (b[1] - a[1]).powi(2)).sqrt()
    };
    let mut out = vec![1.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let c = coords[i];
            let sx = [
                (x > 0 && mask[i - 1]).then(|| step(coords[i - 1], c)),
                (x + 1 < w && mask[i + 1]).then(|| step(c, coords[i + 1])),
            ];
            let sy = [
                (y > 0 && mask[i - w]).then(|| step(coords[i - w], c)),
                (y + 1 < h && mask[i + w]).then(|| step(c, coords[i + w])),
            ];
            let smooth = |s: [Option<f64>; 2]| s.into_iter().flatten().fold(f64::INFINITY, f64::min);
            let s = smooth(sx).max(smooth(sy));
            out[i] = if s.is_finite() { s } else { 1.0 };
        }
    }
    out
}

/// Fraction of band `k` kept when the warp minifies by `s`.
fn band_weight(s: f64, k: usize) -> f64 {
    if s <= 1.0 {
        1.0
    } else {
        (k as f64 + 1.0 - s.log2()).clamp(0.0, 1.0)
    }
}

/// Bilinear lookup at array coordinate `a`, clamped to the image or wrapped
/// horizontally.
fn sample(src: &ImagePlane, a: [f64; 2], wrap: bool) -> [f64; 3] {
    let (w, h) = src.dims();
    let y = a[1].clamp(0.0, (h - 1) as f64);
    if !wrap {
        let x = a[0].clamp(0.0, (w - 1) as f64);
        return bilinear_sample(src, [x, y]).0;
    }
    let x = a[0].rem_euclid(w as f64);
    let x0 = x.floor();
    let fx = x - x0;
    let i0 = (x0 as usize).min(w - 1);
    let i1 = (i0 + 1) % w;
    let y0 = y.floor();
    let fy = y - y0;
    let j0 = y0 as usize;
    let j1 = (j0 + 1).min(h - 1);
    let mut out = [0.0; 3];
    for (j, wy) in [(j0, 1.0 - fy), (j1, fy)] {
        for (i, wx) in [(i0, 1.0 - fx), (i1, fx)] {
            let wgt = wx * wy;
            if wgt != 0.0 {
                let p = src.get(i, j);
                for c in 0..3 {
                    out[c] += wgt * p[c];
                }
            }
        }
    }
    out
}

/// Warps every Laplacian band at its own resolution and sums them per
/// target pixel, fading the bands the warp would alias.
///
/// Each target pixel reads band `k` at its warp coordinate scaled by `2^-k`.
/// With the linear-interpolation expand this reproduces the collapse, so
/// warps without minification (identity, integer shifts) are exact.
pub fn pyramid_warp(img: &ImagePlane, warp: &WarpField, levels: usize) -> Result<WarpedImage, ImageError> {
    if (warp.source_width(), warp.source_height()) != img.dims() {
        return Err(ImageError::Dimensions(format!(
            "warp expects a {}x{} source, image is {}x{}",
            warp.source_width(),
            warp.source_height(),
            img.width(),
            img.height()
        )));
    }
    let (tw, th) = (warp.target_width(), warp.target_height());
    let wrap = warp.source_space() == SourceSpace::Panorama;
    let pyr = build(img, levels, wrap)?;
    let scale = (levels > 1).then(|| footprint(warp, wrap.then_some(img.width() as f64)));
    let mask = warp.mask();
    let (sw, sh) = (img.width() as f64, img.height() as f64);
    let mut data = vec![0.0; tw * th * 3];
    data.par_chunks_mut(3 * tw).enumerate().for_each(|(y, row)| {
        for x in 0..tw {
            let i = y * tw + x;
            if !mask[i] {
                continue;
            }
            let c = warp.coords()[i];
            // Clamp (or wrap) once so every band reads the same source point.
            let cx = c[0] as f64 - 0.5;
            let ax = if wrap { cx.rem_euclid(sw) } else { cx.clamp(0.0, sw - 1.0) };
            let a = [ax, (c[1] as f64 - 0.5).clamp(0.0, sh - 1.0)];
            let inv = 1.0 / (1u64 << (levels - 1)) as f64;
            let mut v = sample(&pyr.base, [a[0] * inv, a[1] * inv], wrap);
            for (k, band) in pyr.bands.iter().enumerate() {
                let g = scale.as_ref().map_or(1.0, |s| band_weight(s[i], k));
                if g == 0.0 {
                    continue;
                }
                let inv = 1.0 / (1u64 << k) as f64;
                let b = sample(band, [a[0] * inv, a[1] * inv], wrap);
                for ch in 0..3 {
                    v[ch] += g * b[ch];
                }
            }
            row[3 * x..3 * x + 3].copy_from_slice(&v);
        }
    });
    Ok(WarpedImage { image: ImagePlane::new(tw, th, img.space(), data)?, mask: mask.to_vec() })
}

/// Single-level bilinear warp.
pub fn warp_bilinear(img: &ImagePlane, warp: &WarpField) -> Result<WarpedImage, ImageError> {
    pyramid_warp(img, warp, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageops::ColorSpace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, seed: u64) -> ImagePlane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImagePlane::from_fn(w, h, ColorSpace::Linear, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect101(-1, 5), 1);
        assert_eq!(reflect101(-2, 5), 2);
        assert_eq!(reflect101(5, 5), 3);
        assert_eq!(reflect101(6, 5), 2);
        assert_eq!(reflect101(3, 1), 0);
        assert_eq!(reflect101(-1, 2), 1);
        assert_eq!(reflect101(2, 2), 0);
    }

    #[test]
    fn constant_image_has_zero_bands() {
        let img = ImagePlane::constant(37, 21, ColorSpace::Linear, [0.375, 0.5, 0.25]);
        let p = build_pyramid(&img, 5).unwrap();
        for band in &p.bands {
            assert!(band.data().iter().all(|v| *v == 0.0));
        }
        assert_eq!(p.base.dims(), (3, 2));
    }

    #[test]
    fn collapse_inverts_build() {
        for (w, h, levels) in [(33, 17, 5), (64, 64, 4), (5, 9, 3), (1, 1, 1)] {
            let img = noise(w, h, (w * h) as u64);
            let back = collapse_pyramid(&build_pyramid(&img, levels).unwrap());
            assert!(back.max_abs_diff(&img) < 1e-12);
        }
    }

    #[test]
    fn too_small_for_levels() {
        let img = noise(8, 7, 1);
        assert!(matches!(build_pyramid(&img, 4), Err(ImageError::TooSmall { .. })));
        assert!(build_pyramid(&img, 0).is_err());
    }

    #[test]
    fn identity_warp_is_exact() {
        let img = noise(40, 24, 2);
        let id = WarpField::identity(40, 24, SourceSpace::Perspective);
        let out = pyramid_warp(&img, &id, 5).unwrap();
        assert!(out.image.max_abs_diff(&img) < 1e-12);
        assert!(out.mask.iter().all(|m| *m));
    }

    #[test]
    fn integer_translation_commutes_on_interior() {
        let img = noise(64, 32, 4);
        let warp = WarpField::translation(64, 32, [3.0, -2.0]);
        let out = pyramid_warp(&img, &warp, 5).unwrap();
        for y in 0..30 {
            for x in 3..64 {
                let a = out.image.get(x, y);
                let b = img.get(x - 3, y + 2);
                for c in 0..3 {
                    assert!((a[c] - b[c]).abs() < 1e-12, "({x},{y})");
                }
            }
        }
        let single = warp_bilinear(&img, &WarpField::translation(64, 32, [3.0, 0.0])).unwrap();
        assert_eq!(single.image.get(10, 5), img.get(7, 5));
        assert!(!single.mask[2]);
    }

    #[test]
    fn expand_is_linear_interpolation() {
        let img = ImagePlane::from_fn(3, 1, ColorSpace::Linear, |x, _| [x as f64 * 2.0, 1.0, 0.0]);
        let up = expand(&img, 6, 1, false);
        assert_eq!(expand(&img, 6, 1, true).get(5, 0)[0], 2.0);
        let r: Vec<f64> = (0..6).map(|x| up.get(x, 0)[0]).collect();
        assert_eq!(r, vec![0.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn bands_do_not_bleed_across_warp_discontinuities() {
        // Left half reads a dark region, right half a bright one, far apart in the source.
        let src = ImagePlane::from_fn(64, 64, ColorSpace::Linear, |x, _| [if x < 32 { 0.0 } else { 1.0 }; 3]);
        let coords = (0..64 * 64)
            .map(|i| {
                let (x, y) = (i % 64, i / 64);
                if x < 32 { [8.5, y as f32 + 0.5] } else { [56.5, y as f32 + 0.5] }
            })
            .collect();
        let warp = WarpField::new((64, 64), (64, 64), SourceSpace::Perspective, coords, vec![true; 64 * 64]).unwrap();
        let out = pyramid_warp(&src, &warp, 5).unwrap();
        assert!(out.image.get(31, 10)[0].abs() < 1e-9);
        assert!((out.image.get(32, 10)[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_mask_gives_empty_output() {
        let img = noise(8, 8, 5);
        let mut warp = WarpField::identity(8, 8, SourceSpace::Perspective);
        warp.restrict(&[false; 64]);
        let out = pyramid_warp(&img, &warp, 2).unwrap();
        assert!(out.mask.iter().all(|m| !m));
    }

    #[test]
    fn panorama_sampling_wraps() {
        let img = ImagePlane::from_fn(8, 4, ColorSpace::Linear, |x, _| [x as f64, 0.0, 0.0]);
        // Halfway between the last and first columns.
        assert!((sample(&img, [7.5, 1.0], true)[0] - 3.5).abs() < 1e-12);
        assert!((sample(&img, [-0.25, 1.0], true)[0] - 1.75).abs() < 1e-12);
        assert_eq!(sample(&img, [7.5, 1.0], false)[0], 7.0);
    }

    #[test]
    fn band_weights() {
        assert_eq!(band_weight(1.0, 0), 1.0);
        assert_eq!(band_weight(4.0, 0), 0.0);
        assert_eq!(band_weight(4.0, 1), 0.0);
        assert_eq!(band_weight(4.0, 2), 1.0);
        assert!((band_weight(2.0f64.powf(1.5), 1) - 0.5).abs() < 1e-12);
    }
}
