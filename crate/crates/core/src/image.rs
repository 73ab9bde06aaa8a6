//! Band-major raster container.
//!
//! Every image in the pipeline (observations, latent images, change images,
//! corrected and predicted images) is a `bands × pixels` real matrix. Pixels
//! are indexed row-major over `(row, col)`, so pixel `p` sits at
//! `(p / width, p % width)`. Column `p` of the matrix is the spectral vector
//! of that pixel.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid dimensions of an image, without the pixel data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
}

impl Geometry {
    pub fn new(width: usize, height: usize, bands: usize) -> Self {
        Self {
            width,
            height,
            bands,
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiBandImage {
    width: usize,
    height: usize,
    data: DMatrix<f64>,
    band_centers: Option<Vec<f64>>,
}

impl MultiBandImage {
    /// Wraps a `bands × (width·height)` matrix, validating shape and finiteness.
    pub fn new(width: usize, height: usize, data: DMatrix<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "width and height must be positive, got {width}x{height}"
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::InvalidImage("band count must be positive".into()));
        }
        if data.ncols() != width * height {
            return Err(Error::InvalidImage(format!(
                "data has {} pixel columns, expected {}",
                data.ncols(),
                width * height
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite sample {v}")));
        }
        Ok(Self {
            width,
            height,
            data,
            band_centers: None,
        })
    }

    /// Builds an image from per-band row-major rasters.
    pub fn from_bands(width: usize, height: usize, bands: &[Vec<f64>]) -> Result<Self> {
        let n = width * height;
        if let Some(b) = bands.iter().position(|b| b.len() != n) {
            return Err(Error::InvalidImage(format!(
                "band {b} has {} samples, expected {n}",
                bands[b].len()
            )));
        }
        let data = DMatrix::from_fn(bands.len(), n, |b, p| bands[b][p]);
        Self::new(width, height, data)
    }

    pub fn zeros(geometry: Geometry) -> Self {
        Self::from_matrix(
            geometry.width,
            geometry.height,
            DMatrix::zeros(geometry.bands, geometry.pixels()),
        )
    }

    pub fn filled(geometry: Geometry, value: f64) -> Self {
        Self::from_matrix(
            geometry.width,
            geometry.height,
            DMatrix::from_element(geometry.bands, geometry.pixels(), value),
        )
    }

    /// Unchecked constructor for results computed from already valid images.
    pub(crate) fn from_matrix(width: usize, height: usize, data: DMatrix<f64>) -> Self {
        debug_assert_eq!(data.ncols(), width * height);
        Self {
            width,
            height,
            data,
            band_centers: None,
        }
    }

    pub fn with_band_centers(mut self, centers: Vec<f64>) -> Result<Self> {
        if centers.len() != self.band_count() {
            return Err(Error::InvalidImage(format!(
                "{} band centers for {} bands",
                centers.len(),
                self.band_count()
            )));
        }
        self.band_centers = Some(centers);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn band_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width, self.height, self.band_count())
    }

    pub fn band_centers(&self) -> Option<&[f64]> {
        self.band_centers.as_deref()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Row-major copy of one band.
    pub fn band(&self, b: usize) -> Vec<f64> {
        self.data.row(b).iter().copied().collect()
    }

    pub(crate) fn set_band(&mut self, b: usize, values: &[f64]) {
        for (p, v) in values.iter().enumerate() {
            self.data[(b, p)] = *v;
        }
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> f64 {
        self.data[(band, row * self.width + col)]
    }

    /// Same data on a new band set; used when an operator changes the band count.
    pub(crate) fn same_grid(&self, data: DMatrix<f64>) -> Self {
        Self::from_matrix(self.width, self.height, data)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.geometry() == other.geometry()
    }

    pub(crate) fn ensure_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.geometry(),
                other.geometry()
            )))
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.norm_squared()
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        self.data.dot(&other.data)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.same_grid(&self.data * factor)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Euclidean norm of every pixel's spectral vector.
    pub fn column_norms(&self) -> Vec<f64> {
        self.data.column_iter().map(|c| c.norm()).collect()
    }

    /// Returns `self - other`, or an error when the shapes differ.
    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other, "subtraction")?;
        Ok(self.same_grid(&self.data - &other.data))
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other, "addition")?;
        Ok(self.same_grid(&self.data + &other.data))
    }
}

impl std::ops::Sub for &MultiBandImage {
    type Output = MultiBandImage;

    /// Panics on shape mismatch; use [`MultiBandImage::checked_sub`] for untrusted input.
    fn sub(self, rhs: &MultiBandImage) -> MultiBandImage {
        assert!(self.same_shape(rhs), "image shape mismatch in subtraction");
        self.same_grid(&self.data - &rhs.data)
    }
}

impl std::ops::Add for &MultiBandImage {
    type Output = MultiBandImage;

    fn add(self, rhs: &MultiBandImage) -> MultiBandImage {
        assert!(self.same_shape(rhs), "image shape mismatch in addition");
        self.same_grid(&self.data + &rhs.data)
    }
}
