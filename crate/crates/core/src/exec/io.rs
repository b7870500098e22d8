//! Image files: 8-bit PGM/PPM scaled to `[0, 1]`, and raw `.f64` dumps.
//!
//! The `.f64` layout is little-endian: `u32` dimension count, one `u32`
//! extent per dimension, then the values with `x` varying fastest.

use super::Buffer;
use crate::ir::Extent;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: String, source: image::ImageError },
}

fn ext(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn format_err(path: &Path, message: impl Into<String>) -> ImageError {
    ImageError::Format { path: path.display().to_string(), message: message.into() }
}

pub fn read_image(path: &Path) -> Result<Buffer, ImageError> {
    let shown = path.display().to_string();
    if ext(path) == "f64" {
        let bytes = std::fs::read(path).map_err(|source| ImageError::Io { path: shown.clone(), source })?;
        return decode_raw(&bytes).ok_or_else(|| format_err(path, "malformed .f64 file"));
    }
    let img = image::open(path).map_err(|source| ImageError::Image { path: shown, source })?;
    let (w, h) = (i64::from(img.width()), i64::from(img.height()));
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        Ok(Buffer::from_fn(&Extent(vec![w, h, 3]), |x, y, c| {
            f64::from(rgb.get_pixel(x as u32, y as u32)[c as usize]) / 255.0
        }))
    } else {
        let g = img.to_luma8();
        Ok(Buffer::from_fn(&Extent(vec![w, h]), |x, y, _| f64::from(g.get_pixel(x as u32, y as u32)[0]) / 255.0))
    }
}

pub fn write_image(path: &Path, buf: &Buffer) -> Result<(), ImageError> {
    let shown = path.display().to_string();
    let kind = ext(path);
    if kind == "f64" {
        return std::fs::write(path, encode_raw(buf)).map_err(|source| ImageError::Io { path: shown, source });
    }
    let [w, h, ch] = buf.extent;
    let mut bytes = Vec::with_capacity((w * h * ch) as usize);
    let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let at = [buf.origin[0] + x, buf.origin[1] + y, buf.origin[2] + c];
                bytes.push(to_u8(buf.get(at).expect("inside")));
            }
        }
    }
    let (w, h) = (w as u32, h as u32);
    let result = match (kind.as_str(), ch) {
        ("pgm", 1) => image::GrayImage::from_raw(w, h, bytes).expect("sized").save(path),
        ("ppm", 3) => image::RgbImage::from_raw(w, h, bytes).expect("sized").save(path),
        ("pgm", _) | ("ppm", _) => return Err(format_err(path, format!("{ch} channels do not fit a .{kind} file"))),
        _ => return Err(format_err(path, "unsupported extension (use .pgm, .ppm or .f64)")),
    };
    result.map_err(|source| ImageError::Image { path: shown, source })
}

pub fn encode_raw(buf: &Buffer) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * buf.dims + 8 * buf.data.len());
    out.extend_from_slice(&(buf.dims as u32).to_le_bytes());
    for d in 0..buf.dims {
        out.extend_from_slice(&(buf.extent[d] as u32).to_le_bytes());
    }
    for v in &buf.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Option<Buffer> {
    let word = |i: usize| bytes.get(4 * i..4 * i + 4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")));
    let dims = word(0)? as usize;
    if !(1..=3).contains(&dims) {
        return None;
    }
    let sizes: Vec<i64> = (1..=dims).map(|i| word(i).map(i64::from)).collect::<Option<_>>()?;
    let mut buf = Buffer::from_extent(&Extent(sizes));
    let body = &bytes[4 * (dims + 1)..];
    if body.len() != 8 * buf.data.len() {
        return None;
    }
    for (v, chunk) in buf.data.iter_mut().zip(body.chunks_exact(8)) {
        *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    Some(buf)
}
