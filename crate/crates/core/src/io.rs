//! Binary grid and PNG writers shared by the sensors.
//!
//! Raw grids are little-endian: a `u32` width, a `u32` height, then
//! `width * height * channels` `f32` values in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

use crate::error::{config, Result};
use crate::num::Real;

pub fn encode_raw_grid<T: Real>(width: usize, height: usize, data: &[T]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * data.len());
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    for v in data {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

/// Decodes a raw grid, returning `(width, height, values)`.
pub fn decode_raw_grid(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let mut r = bytes;
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let w = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let h = u32::from_le_bytes(word) as usize;
    if !r.len().is_multiple_of(4) || w * h == 0 || !(r.len() / 4).is_multiple_of(w * h) {
        return Err(config("raw grid payload does not match its header"));
    }
    let values = r.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((w, h, values))
}

pub fn write_raw_grid<T: Real>(path: &Path, width: usize, height: usize, data: &[T]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_raw_grid(width, height, data))?;
    Ok(())
}

pub fn write_gray16(path: &Path, width: usize, height: usize, data: &[u16]) -> Result<()> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(width as u32, height as u32, data.to_vec())
        .ok_or_else(|| config("16-bit plane size mismatch"))?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn write_gray8(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(width as u32, height as u32, data.to_vec())
        .ok_or_else(|| config("8-bit plane size mismatch"))?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn write_rgb8(path: &Path, width: usize, height: usize, data: &[[u8; 3]]) -> Result<()> {
    let flat: Vec<u8> = data.iter().flatten().copied().collect();
    let img: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(width as u32, height as u32, flat)
        .ok_or_else(|| config("RGB image size mismatch"))?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn write_rgb16(path: &Path, width: usize, height: usize, data: &[[u16; 3]]) -> Result<()> {
    let flat: Vec<u16> = data.iter().flatten().copied().collect();
    let img: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_raw(width as u32, height as u32, flat)
        .ok_or_else(|| config("RGB16 image size mismatch"))?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Linear map of `[0, white]` onto `0..=255`, clamping outside.
pub fn to_u8<T: Real>(v: T, white: T) -> u8 {
    let x = (v / white).as_f64().clamp(0.0, 1.0);
    (x * 255.0).round() as u8
}

pub fn to_u16_ids(ids: &[u32]) -> Vec<u16> {
    ids.iter().map(|&i| i.min(u16::MAX as u32) as u16).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_grid_layout() {
        let bytes = encode_raw_grid(2, 1, &[1.5f64, f64::INFINITY]);
        assert_eq!(&bytes[..8], &[2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &1.5f32.to_le_bytes());
        let (w, h, v) = decode_raw_grid(&bytes).unwrap();
        assert_eq!((w, h), (2, 1));
        assert_eq!(v[0], 1.5);
        assert!(v[1].is_infinite());
        assert!(decode_raw_grid(&bytes[..10]).is_err());
    }

    #[test]
    fn png_roundtrip_16bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ids.png");
        write_gray16(&p, 3, 1, &[0, 1, 65535]).unwrap();
        let img = image::open(&p).unwrap().into_luma16();
        assert_eq!(img.into_raw(), vec![0, 1, 65535]);
    }
}
