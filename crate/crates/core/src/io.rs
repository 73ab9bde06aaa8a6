//! Raster files and map export.
//!
//! An image on disk is a pair of files sharing a stem: `<stem>.json` holds
//! the header and `<stem>.bin` holds little-endian `f32` samples, band
//! after band, each band row-major. Samples are stored as `f32`, so a write
//! followed by a read is bit-exact for images whose values are `f32`
//! representable and rounds to nearest otherwise.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::MultiBandImage;

const DTYPE: &str = "f32";
const LAYOUT: &str = "band-sequential";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageHeader {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub dtype: String,
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_centers: Option<Vec<f64>>,
}

/// Header and payload paths for any of `<stem>`, `<stem>.json` or `<stem>.bin`.
pub fn image_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(".");
        s.push(ext);
        PathBuf::from(s)
    };
    (with("json"), with("bin"))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<MultiBandImage> {
    let (header_path, payload_path) = image_paths(path.as_ref());
    if !header_path.is_file() {
        return Err(Error::MissingHeader(header_path));
    }
    if !payload_path.is_file() {
        return Err(Error::MissingPayload(payload_path));
    }
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: ImageHeader = serde_json::from_str(&text).map_err(|e| Error::Header {
        path: header_path.clone(),
        message: e.to_string(),
    })?;
    if header.dtype != DTYPE {
        return Err(Error::UnknownDtype(header.dtype));
    }
    if header.layout != LAYOUT {
        return Err(Error::UnknownLayout(header.layout));
    }
    if header.width == 0 || header.height == 0 || header.bands == 0 {
        return Err(Error::InvalidImage(format!(
            "header declares {}x{} pixels and {} bands",
            header.width, header.height, header.bands
        )));
    }
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let n = header.width * header.height;
    let expected = 4 * header.bands * n;
    if bytes.len() != expected {
        return Err(Error::PayloadLength {
            expected,
            found: bytes.len(),
        });
    }
    let samples: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let data = DMatrix::from_row_slice(header.bands, n, &samples);
    let image = MultiBandImage::new(header.width, header.height, data)?;
    match header.band_centers {
        Some(c) => image.with_band_centers(c),
        None => Ok(image),
    }
}

pub fn write_image(image: &MultiBandImage, path: impl AsRef<Path>) -> Result<()> {
    let (header_path, payload_path) = image_paths(path.as_ref());
    let header = ImageHeader {
        width: image.width(),
        height: image.height(),
        bands: image.band_count(),
        dtype: DTYPE.into(),
        layout: LAYOUT.into(),
        band_centers: image.band_centers().map(<[f64]>::to_vec),
    };
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    let m = image.matrix();
    let mut bytes = Vec::with_capacity(4 * m.len());
    for b in 0..m.nrows() {
        for v in m.row(b).iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    fs::write(&header_path, text + "\n").map_err(|e| Error::io(&header_path, e))?;
    fs::write(&payload_path, bytes).map_err(|e| Error::io(&payload_path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterFormat {
    Pgm,
    Png,
}

impl RasterFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RasterFormat::Pgm => "pgm",
            RasterFormat::Png => "png",
        }
    }
}

/// 0/255 rendering of a binary map.
pub fn map_to_gray(map: &[bool]) -> Vec<u8> {
    map.iter().map(|&m| if m { 255 } else { 0 }).collect()
}

/// Min-max scaling to 0..=255; a constant image renders as all zeros.
pub fn energy_to_gray(energy: &[f64]) -> Vec<u8> {
    let lo = energy.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    energy
        .iter()
        .map(|&e| {
            if range > 0.0 {
                ((e - lo) / range * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect()
}

/// Writes an 8-bit grayscale raster.
pub fn write_gray(
    pixels: &[u8],
    width: usize,
    height: usize,
    path: impl AsRef<Path>,
    format: RasterFormat,
) -> Result<()> {
    let path = path.as_ref();
    if width == 0 || height == 0 || pixels.len() != width * height {
        return Err(Error::ShapeMismatch(format!(
            "{} pixels for a {width}x{height} raster",
            pixels.len()
        )));
    }
    match format {
        RasterFormat::Pgm => {
            let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
            bytes.extend_from_slice(pixels);
            fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
        RasterFormat::Png => {
            let buffer = image::GrayImage::from_raw(width as u32, height as u32, pixels.to_vec())
                .expect("length checked");
            buffer
                .save_with_format(path, image::ImageFormat::Png)
                .map_err(|e| match e {
                    image::ImageError::IoError(source) => Error::io(path, source),
                    other => Error::Encode(other.to_string()),
                })
        }
    }
}

pub fn export_map(
    map: &[bool],
    width: usize,
    height: usize,
    path: impl AsRef<Path>,
    format: RasterFormat,
) -> Result<()> {
    write_gray(&map_to_gray(map), width, height, path, format)
}

pub fn export_energy(
    energy: &[f64],
    width: usize,
    height: usize,
    path: impl AsRef<Path>,
    format: RasterFormat,
) -> Result<()> {
    write_gray(&energy_to_gray(energy), width, height, path, format)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MultiBandImage {
        let data = DMatrix::from_fn(2, 12, |b, p| (b as f64 - 0.5) * (p as f64 + 0.25) / 8.0);
        MultiBandImage::new(3, 4, data).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img");
        let img = sample().with_band_centers(vec![450.0, 550.0]).unwrap();
        write_image(&img, &path).unwrap();
        let back = read_image(dir.path().join("img.bin")).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img");
        write_image(&sample(), &path).unwrap();
        let bin = dir.path().join("img.bin");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            read_image(&path),
            Err(Error::PayloadLength {
                expected: 96,
                found: 93
            })
        ));
    }

    #[test]
    fn header_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img");
        assert!(matches!(read_image(&path), Err(Error::MissingHeader(_))));
        write_image(&sample(), &path).unwrap();
        let json = dir.path().join("img.json");
        let text = fs::read_to_string(&json).unwrap();
        fs::write(&json, text.replace("\"f32\"", "\"f64\"")).unwrap();
        assert!(matches!(read_image(&path), Err(Error::UnknownDtype(_))));
        fs::write(&json, text.replace("\"bands\": 2", "\"bands\": 0")).unwrap();
        assert!(matches!(read_image(&path), Err(Error::InvalidImage(_))));
        fs::remove_file(dir.path().join("img.bin")).unwrap();
        assert!(matches!(read_image(&path), Err(Error::MissingPayload(_))));
    }

    #[test]
    fn gray_renderings() {
        assert_eq!(map_to_gray(&[true; 4]), vec![255; 4]);
        assert_eq!(energy_to_gray(&[3.0; 4]), vec![0; 4]);
        assert_eq!(
            map_to_gray(&[true, false, false, true]),
            vec![255, 0, 0, 255]
        );
        assert_eq!(energy_to_gray(&[1.0, 2.0, 3.0]), vec![0, 128, 255]);
    }

    #[test]
    fn pgm_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        export_map(&[true, false, false, true], 2, 2, &path, RasterFormat::Pgm).unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"P5\n2 2\n255\n\xff\x00\x00\xff");
    }

    #[test]
    fn png_decodes_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let map = [true, false, false, true, true, false];
        export_map(&map, 3, 2, &path, RasterFormat::Png).unwrap();
        let decoded = image::open(&path).unwrap().to_luma8();
        assert_eq!(decoded.into_raw(), map_to_gray(&map));
    }
}
