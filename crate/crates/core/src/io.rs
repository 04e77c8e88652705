//! PNG and raw sidecar I/O. Every writer goes through [`write_atomic`].

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb as ImgRgb};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Grid, RasterImage, ScalarField};
use crate::superpixel::LabelMap;

const FIELD_MAGIC: &[u8; 4] = b"RXF1";
const LABEL_MAGIC: &[u8; 4] = b"RXL1";

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_png(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match image::guess_format(&bytes) {
        Ok(ImageFormat::Png) => {}
        Ok(other) => {
            return Err(Error::Unsupported {
                path: path.into(),
                message: format!("{other:?} is not PNG"),
            })
        }
        Err(e) => {
            return Err(Error::Decode {
                path: path.into(),
                message: e.to_string(),
            })
        }
    }
    image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| Error::Decode {
        path: path.into(),
        message: e.to_string(),
    })
}

fn encode_png(img: &DynamicImage) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::invalid(format!("png encode: {e}")))?;
    Ok(out.into_inner())
}

/// Loads an 8-bit RGB PNG.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    match read_png(path)? {
        DynamicImage::ImageRgb8(buf) => {
            let (w, h) = buf.dimensions();
            let pixels = buf.pixels().map(|p| p.0).collect();
            Grid::from_vec(w as usize, h as usize, pixels)
        }
        other => Err(Error::Unsupported {
            path: path.into(),
            message: format!("expected 8-bit RGB, found {:?}", other.color()),
        }),
    }
}

pub fn image_to_png(image: &RasterImage) -> Result<Vec<u8>> {
    let (w, h) = image.dims();
    let raw: Vec<u8> = image.as_slice().iter().flatten().copied().collect();
    let buf: ImageBuffer<ImgRgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer size matches dims");
    encode_png(&DynamicImage::ImageRgb8(buf))
}

pub fn save_image(path: impl AsRef<Path>, image: &RasterImage) -> Result<()> {
    write_atomic(path.as_ref(), &image_to_png(image)?)
}

/// Loads an 8-bit grayscale mask; any nonzero value is set.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    match read_png(path)? {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            let bits = buf.pixels().map(|p| p.0[0] != 0).collect();
            Grid::from_vec(w as usize, h as usize, bits)
        }
        other => Err(Error::Unsupported {
            path: path.into(),
            message: format!("expected 8-bit grayscale mask, found {:?}", other.color()),
        }),
    }
}

pub fn mask_to_png(mask: &BinaryMask) -> Result<Vec<u8>> {
    let (w, h) = mask.dims();
    let raw: Vec<u8> = mask.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer size matches dims");
    encode_png(&DynamicImage::ImageLuma8(buf))
}

pub fn save_mask(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    write_atomic(path.as_ref(), &mask_to_png(mask)?)
}

/// 16-bit grayscale PNG of `value * scale`, clamped to `[0, 65535]`.
pub fn field_to_png16(field: &ScalarField, scale: f64) -> Result<Vec<u8>> {
    let (w, h) = field.dims();
    let raw: Vec<u16> = field
        .as_slice()
        .iter()
        .map(|&v| (v * scale).round().clamp(0.0, 65535.0) as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer size matches dims");
    encode_png(&DynamicImage::ImageLuma16(buf))
}

/// Saves a likelihood field in `[0, 1]` as `value * 65535`.
pub fn save_likelihood_png(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    write_atomic(path.as_ref(), &field_to_png16(field, 65535.0)?)
}

/// Saves a nonnegative field normalized by its maximum.
pub fn save_normalized_png(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let max = field.max_value();
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    write_atomic(path.as_ref(), &field_to_png16(field, scale)?)
}

/// Raw little-endian sidecar: `RXF1`, u32 width, u32 height, f32 values.
pub fn field_to_raw(field: &ScalarField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + field.len() * 4);
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&(field.width() as u32).to_le_bytes());
    out.extend_from_slice(&(field.height() as u32).to_le_bytes());
    for &v in field.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn field_from_raw(bytes: &[u8]) -> Result<ScalarField> {
    let (w, h, body) = parse_header(bytes, FIELD_MAGIC)?;
    let values = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Grid::from_vec(w, h, values)
}

/// Raw little-endian label sidecar: `RXL1`, u32 width, u32 height, u32 labels.
pub fn labels_to_raw(labels: &LabelMap) -> Vec<u8> {
    let grid = labels.grid();
    let mut out = Vec::with_capacity(12 + grid.len() * 4);
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    for &v in grid.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn labels_from_raw(bytes: &[u8]) -> Result<LabelMap> {
    let (w, h, body) = parse_header(bytes, LABEL_MAGIC)?;
    let labels = body
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    LabelMap::from_grid(Grid::from_vec(w, h, labels)?)
}

fn parse_header<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<(usize, usize, &'a [u8])> {
    if bytes.len() < 12 || &bytes[..4] != magic {
        return Err(Error::invalid("raw sidecar: bad header"));
    }
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != w * h * 4 {
        return Err(Error::invalid(format!(
            "raw sidecar: expected {} payload bytes, got {}",
            w * h * 4,
            body.len()
        )));
    }
    Ok((w, h, body))
}

/// Source image with superpixel boundaries painted in `color`.
pub fn boundary_overlay(image: &RasterImage, labels: &LabelMap, color: [u8; 3]) -> RasterImage {
    let grid = labels.grid();
    let (w, h) = image.dims();
    Grid::from_fn(w, h, |r, c| {
        let l = *grid.get(r, c);
        let edge = (c + 1 < w && *grid.get(r, c + 1) != l) || (r + 1 < h && *grid.get(r + 1, c) != l);
        if edge {
            color
        } else {
            *image.get(r, c)
        }
    })
}

/// Source image with mask pixels painted in `color`.
pub fn mask_overlay(image: &RasterImage, mask: &BinaryMask, color: [u8; 3]) -> RasterImage {
    Grid::from_fn(image.width(), image.height(), |r, c| {
        if *mask.get(r, c) {
            color
        } else {
            *image.get(r, c)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_black_pixel_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.png");
        let img = RasterImage::from_vec(1, 1, vec![[0, 0, 0]]).unwrap();
        save_image(&p, &img).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }

    #[test]
    fn image_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.png");
        let img = RasterImage::from_fn(7, 5, |r, c| [(r * 31) as u8, (c * 17) as u8, (r * c) as u8]);
        save_image(&p, &img).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }

    #[test]
    fn truncated_png_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        let img = RasterImage::from_fn(16, 16, |r, c| [r as u8, c as u8, 0]);
        let bytes = image_to_png(&img).unwrap();
        fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_image(&p).is_err());
        assert!(load_image(dir.path().join("missing.png")).is_err());
    }

    #[test]
    fn mask_is_not_an_rgb_image() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let m = BinaryMask::from_pixels(4, 3, &[(1, 2)]);
        save_mask(&p, &m).unwrap();
        assert_eq!(load_mask(&p).unwrap(), m);
        assert!(matches!(load_image(&p), Err(Error::Unsupported { .. })));
    }

    #[test]
    fn raw_field_roundtrip() {
        let f = ScalarField::from_fn(3, 2, |r, c| (r * 3 + c) as f64 * 0.25);
        assert_eq!(field_from_raw(&field_to_raw(&f)).unwrap(), f);
        assert!(field_from_raw(&field_to_raw(&f)[..10]).is_err());
    }
}
