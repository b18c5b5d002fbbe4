//! SNWF binary warp-field format. See `docs/formats.md`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{SourceSpace, WarpError, WarpField};

pub const SNWF_MAGIC: &[u8; 4] = b"SNWF";
pub const SNWF_VERSION: u16 = 1;

pub fn write_warp<W: Write>(warp: &WarpField, mut out: W) -> Result<(), WarpError> {
    out.write_all(SNWF_MAGIC)?;
    out.write_all(&SNWF_VERSION.to_le_bytes())?;
    for dim in [warp.target_width, warp.target_height, warp.source_width, warp.source_height] {
        out.write_all(&(dim as u32).to_le_bytes())?;
    }
    out.write_all(&[warp.source_space.to_byte()])?;
    let mut buf = Vec::with_capacity(warp.coords.len() * 8);
    for c in &warp.coords {
        buf.extend_from_slice(&c[0].to_le_bytes());
        buf.extend_from_slice(&c[1].to_le_bytes());
    }
    out.write_all(&buf)?;
    let mut bits = vec![0u8; warp.mask.len().div_ceil(8)];
    for (i, _) in warp.mask.iter().enumerate().filter(|(_, m)| **m) {
        bits[i / 8] |= 1 << (i % 8);
    }
    out.write_all(&bits)?;
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize, WarpError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub fn read_warp<R: Read>(mut input: R) -> Result<WarpField, WarpError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != SNWF_MAGIC {
        return Err(WarpError::Format(format!("bad magic {magic:?}")));
    }
    let mut v = [0u8; 2];
    input.read_exact(&mut v)?;
    let version = u16::from_le_bytes(v);
    if version != SNWF_VERSION {
        return Err(WarpError::Format(format!("unsupported version {version}")));
    }
    let tw = read_u32(&mut input)?;
    let th = read_u32(&mut input)?;
    let sw = read_u32(&mut input)?;
    let sh = read_u32(&mut input)?;
    let mut space = [0u8; 1];
    input.read_exact(&mut space)?;
    let space = SourceSpace::from_byte(space[0])
        .ok_or_else(|| WarpError::Format(format!("unknown source space {}", space[0])))?;
    let n = tw
        .checked_mul(th)
        .filter(|n| *n <= 1 << 30)
        .ok_or_else(|| WarpError::Format(format!("implausible size {tw}x{th}")))?;
    let mut raw = vec![0u8; n * 8];
    input.read_exact(&mut raw)?;
    let coords = raw
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            ]
        })
        .collect();
    let mut bits = vec![0u8; n.div_ceil(8)];
    input.read_exact(&mut bits)?;
    let mask = (0..n).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
    WarpField::new((tw, th), (sw, sh), space, coords, mask)
}

pub fn write_warp_file(warp: &WarpField, path: &Path) -> Result<(), WarpError> {
    write_warp(warp, BufWriter::new(File::create(path)?))
}

pub fn read_warp_file(path: &Path) -> Result<WarpField, WarpError> {
    read_warp(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_everything() {
        let mut w = WarpField::translation(5, 3, [1.25, -0.5]);
        w.restrict(&[true, false, true, true, false, true, true, true, true, false, true, true, true, true, true]);
        let mut buf = Vec::new();
        write_warp(&w, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 2 + 16 + 1 + 15 * 8 + 2);
        assert_eq!(&buf[..4], b"SNWF");
        assert_eq!(read_warp(buf.as_slice()).unwrap(), w);
    }

    #[test]
    fn header_layout_is_little_endian() {
        let w = WarpField::identity(2, 1, SourceSpace::Panorama);
        let mut buf = Vec::new();
        write_warp(&w, &mut buf).unwrap();
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..10], &[2, 0, 0, 0]);
        assert_eq!(buf[22], 1);
        assert_eq!(&buf[23..27], &0.5f32.to_le_bytes());
        assert_eq!(*buf.last().unwrap(), 0b11);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_warp(&b"NOPE\x01\x00"[..]), Err(WarpError::Format(_))));
        assert!(read_warp(&b"SNWF\x01\x00\x02"[..]).is_err());
    }
}
