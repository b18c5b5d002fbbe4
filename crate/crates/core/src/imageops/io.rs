//! PNG (sRGB, 8/16-bit) and PFM (linear float) files.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageReader, Rgb};

use super::{ColorSpace, ImageError, ImagePlane};

fn file_err(path: &Path, message: impl ToString) -> ImageError {
    ImageError::File { path: path.display().to_string(), message: message.to_string() }
}

/// Reads an 8- or 16-bit PNG as an sRGB-tagged image in `[0, 1]`.
pub fn read_png(path: &Path) -> Result<ImagePlane, ImageError> {
    let img = ImageReader::open(path)
        .map_err(|e| file_err(path, e))?
        .with_guessed_format()
        .map_err(|e| file_err(path, e))?
        .decode()
        .map_err(|e| file_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let sixteen = img.color().bytes_per_pixel() / img.color().channel_count() > 1;
    let data = if sixteen {
        img.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
    } else {
        img.to_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()
    };
    ImagePlane::new(w, h, ColorSpace::Srgb, data)
}

fn quantize(img: &ImagePlane, max: f64) -> Result<Vec<f64>, ImageError> {
    img.require_space(ColorSpace::Srgb)?;
    Ok(img.data().iter().map(|v| (v.clamp(0.0, 1.0) * max).round()).collect())
}

/// Writes an sRGB-tagged image as 8-bit RGB, clamping to `[0, 1]`.
pub fn write_png(img: &ImagePlane, path: &Path) -> Result<(), ImageError> {
    let raw: Vec<u8> = quantize(img, 255.0)?.into_iter().map(|v| v as u8).collect();
    let buf: ImageBuffer<Rgb<u8>, _> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer matches dimensions");
    buf.save(path).map_err(|e| file_err(path, e))
}

pub fn write_png16(img: &ImagePlane, path: &Path) -> Result<(), ImageError> {
    let raw: Vec<u16> = quantize(img, 65535.0)?.into_iter().map(|v| v as u16).collect();
    let buf: ImageBuffer<Rgb<u16>, _> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer matches dimensions");
    DynamicImage::ImageRgb16(buf).save(path).map_err(|e| file_err(path, e))
}

/// Raw PFM contents, rows top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok().filter(|s| !s.is_empty())
}

pub(crate) fn read_pfm_raw(path: &Path) -> Result<Pfm, ImageError> {
    let bytes = fs::read(path).map_err(|e| file_err(path, e))?;
    let mut pos = 0;
    let bad = |m: &str| file_err(path, format!("malformed PFM: {m}"));
    let channels = match next_token(&bytes, &mut pos) {
        Some("PF") => 3,
        Some("Pf") => 1,
        _ => return Err(bad("magic")),
    };
    let mut num = |what: &str| -> Result<String, ImageError> {
        next_token(&bytes, &mut pos).map(str::to_owned).ok_or_else(|| bad(what))
    };
    let width: usize = num("width")?.parse().map_err(|_| bad("width"))?;
    let height: usize = num("height")?.parse().map_err(|_| bad("height"))?;
    let scale: f64 = num("scale")?.parse().map_err(|_| bad("scale"))?;
    // Exactly one whitespace byte separates the header from the samples.
    pos += 1;
    let n = width * height * channels;
    let body = bytes.get(pos..pos + 4 * n).ok_or_else(|| bad("truncated samples"))?;
    let little = scale < 0.0;
    let samples: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| {
            let b = [c[0], c[1], c[2], c[3]];
            if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    let row = width * channels;
    let mut data = Vec::with_capacity(n);
    for y in (0..height).rev() {
        data.extend_from_slice(&samples[y * row..(y + 1) * row]);
    }
    Ok(Pfm { width, height, channels, data })
}

/// Reads a PFM as a linear image; grayscale files are replicated to RGB.
pub fn read_pfm(path: &Path) -> Result<ImagePlane, ImageError> {
    let pfm = read_pfm_raw(path)?;
    let data: Vec<f64> = if pfm.channels == 3 {
        pfm.data.iter().map(|v| *v as f64).collect()
    } else {
        pfm.data.iter().flat_map(|v| [*v as f64; 3]).collect()
    };
    ImagePlane::new(pfm.width, pfm.height, ColorSpace::Linear, data).map_err(|e| file_err(path, e))
}

fn write_pfm_samples(path: &Path, width: usize, height: usize, channels: usize, data: &[f32]) -> Result<(), ImageError> {
    let magic = if channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{width} {height}\n-1.0\n").into_bytes();
    let row = width * channels;
    for y in (0..height).rev() {
        for v in &data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| file_err(path, e))?;
    f.write_all(&out).map_err(|e| file_err(path, e))
}

/// Writes a linear image as little-endian float PFM.
pub fn write_pfm(img: &ImagePlane, path: &Path) -> Result<(), ImageError> {
    img.require_space(ColorSpace::Linear)?;
    let data: Vec<f32> = img.data().iter().map(|v| *v as f32).collect();
    write_pfm_samples(path, img.width(), img.height(), 3, &data)
}

pub fn write_pfm_gray(path: &Path, width: usize, height: usize, data: &[f32]) -> Result<(), ImageError> {
    if data.len() != width * height {
        return Err(ImageError::SampleCount { width, height, expected: width * height, got: data.len() });
    }
    write_pfm_samples(path, width, height, 1, data)
}

/// PNG files load as sRGB, PFM as linear; both are returned linear.
pub fn read_image(path: &Path) -> Result<ImagePlane, ImageError> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pfm") => read_pfm(path),
        _ => super::srgb_to_linear(&read_png(path)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ImagePlane {
        ImagePlane::from_fn(5, 3, ColorSpace::Srgb, |x, y| [x as f64 / 4.0, y as f64 / 2.0, 0.5])
    }

    #[test]
    fn png_round_trips_at_8_and_16_bits() {
        let dir = tempfile::tempdir().unwrap();
        let img = sample();
        let p8 = dir.path().join("a.png");
        write_png(&img, &p8).unwrap();
        assert!(read_png(&p8).unwrap().max_abs_diff(&img) <= 0.5 / 255.0 + 1e-12);
        let p16 = dir.path().join("b.png");
        write_png16(&img, &p16).unwrap();
        assert!(read_png(&p16).unwrap().max_abs_diff(&img) <= 0.5 / 65535.0 + 1e-12);
        assert!(write_png(&img.clone().with_space(ColorSpace::Linear), &p8).is_err());
    }

    #[test]
    fn pfm_round_trip_keeps_row_order() {
        let dir = tempfile::tempdir().unwrap();
        let img = sample().with_space(ColorSpace::Linear).map(|v| v * 3.0 - 1.0).unwrap();
        let p = dir.path().join("a.pfm");
        write_pfm(&img, &p).unwrap();
        let back = read_pfm(&p).unwrap();
        assert!(back.max_abs_diff(&img) < 1e-6);
        let g = dir.path().join("g.pfm");
        write_pfm_gray(&g, 2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let raw = read_pfm_raw(&g).unwrap();
        assert_eq!(raw.data, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(read_pfm(&g).unwrap().get(1, 1), [4.0; 3]);
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_png(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.png"));
    }
}
