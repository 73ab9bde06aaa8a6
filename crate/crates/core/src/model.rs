//! Observation model `Y = L X R + N` with `R = B S`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fft::SpatialOperator;
use crate::image::{Geometry, MultiBandImage};

const SUM_TOL: f64 = 1e-12;

/// Band-mixing matrix `L` (out_bands × in_bands).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResponse {
    matrix: DMatrix<f64>,
    normalized: bool,
}

impl SpectralResponse {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let (out, inp) = matrix.shape();
        if out == 0 || inp == 0 {
            return Err(Error::InvalidParameter("empty spectral response".into()));
        }
        if out > inp {
            return Err(Error::InvalidParameter(format!(
                "spectral response cannot add bands ({inp} -> {out})"
            )));
        }
        if matrix.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "spectral response entries must be finite and non-negative".into(),
            ));
        }
        if let Some(r) = (0..out).find(|&r| matrix.row(r).iter().all(|v| *v == 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "spectral response row {r} is all zero"
            )));
        }
        let normalized = matrix
            .row_iter()
            .all(|row| (row.sum() - 1.0).abs() <= SUM_TOL);
        Ok(Self { matrix, normalized })
    }

    pub fn identity(bands: usize) -> Self {
        Self {
            matrix: DMatrix::identity(bands, bands),
            normalized: true,
        }
    }

    /// Uniform averaging of the latent bands listed in each group.
    pub fn band_average(groups: &[Vec<usize>], in_bands: usize) -> Result<Self> {
        let mut matrix = DMatrix::zeros(groups.len(), in_bands);
        for (r, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::InvalidParameter(format!("band group {r} is empty")));
            }
            let w = 1.0 / group.len() as f64;
            for &b in group {
                if b >= in_bands {
                    return Err(Error::InvalidParameter(format!(
                        "band group {r} references band {b} of {in_bands}"
                    )));
                }
                matrix[(r, b)] += w;
            }
        }
        Self::new(matrix)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn out_bands(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn in_bands(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_identity(&self) -> bool {
        self.matrix.is_square()
            && self.matrix == DMatrix::identity(self.out_bands(), self.in_bands())
    }
}

/// Centrosymmetric blur kernel with odd sides, applied with cyclic boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    taps: DMatrix<f64>,
}

impl BlurKernel {
    pub fn new(taps: DMatrix<f64>) -> Result<Self> {
        let (r, c) = taps.shape();
        if r % 2 == 0 || c % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "kernel sides must be odd, got {r}x{c}"
            )));
        }
        if taps.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("kernel taps must be finite".into()));
        }
        let sum = taps.sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "kernel must sum to 1, sums to {sum}"
            )));
        }
        for i in 0..r {
            for j in 0..c {
                if (taps[(i, j)] - taps[(r - 1 - i, c - 1 - j)]).abs() > SUM_TOL {
                    return Err(Error::InvalidParameter(
                        "kernel must be centrosymmetric".into(),
                    ));
                }
            }
        }
        Ok(Self { taps })
    }

    pub fn delta() -> Self {
        Self {
            taps: DMatrix::from_element(1, 1, 1.0),
        }
    }

    /// Sampled isotropic Gaussian of odd `side`, renormalized to unit sum.
    pub fn gaussian(sigma: f64, side: usize) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
        if side == 0 || side % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "gaussian side must be odd and positive, got {side}"
            )));
        }
        let c = (side / 2) as f64;
        let mut taps = DMatrix::from_fn(side, side, |i, j| {
            let (di, dj) = (i as f64 - c, j as f64 - c);
            (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp()
        });
        // Symmetrize explicitly so rounding in exp never breaks centrosymmetry.
        let flipped = DMatrix::from_fn(side, side, |i, j| taps[(side - 1 - i, side - 1 - j)]);
        taps = (&taps + flipped) * 0.5;
        let sum = taps.sum();
        taps /= sum;
        Ok(Self { taps })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.taps.shape()
    }

    pub fn tap(&self, i: usize, j: usize) -> f64 {
        self.taps[(i, j)]
    }

    pub fn taps(&self) -> &DMatrix<f64> {
        &self.taps
    }
}

/// Default Gaussian kernel for a decimation factor: `sigma = 0.5·max(dr, dc)`.
pub fn default_blur_for(decimation: Decimation) -> BlurKernel {
    let d = decimation.row_factor().max(decimation.col_factor());
    if d == 1 {
        return BlurKernel::delta();
    }
    let sigma = 0.5 * d as f64;
    let side = 2 * (2.0 * sigma).ceil() as usize + 1;
    BlurKernel::gaussian(sigma, side).expect("valid default kernel")
}

pub fn build_gaussian_blur(sigma: f64, side: usize) -> Result<BlurKernel> {
    BlurKernel::gaussian(sigma, side)
}

/// Uniform downsampling keeping the top-left pixel of each `dr × dc` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decimation {
    row_factor: usize,
    col_factor: usize,
}

impl Decimation {
    pub fn new(row_factor: usize, col_factor: usize) -> Result<Self> {
        if row_factor == 0 || col_factor == 0 {
            return Err(Error::InvalidParameter(
                "decimation factors must be at least 1".into(),
            ));
        }
        Ok(Self {
            row_factor,
            col_factor,
        })
    }

    pub fn uniform(factor: usize) -> Result<Self> {
        Self::new(factor, factor)
    }

    pub fn row_factor(&self) -> usize {
        self.row_factor
    }

    pub fn col_factor(&self) -> usize {
        self.col_factor
    }

    pub fn factor(&self) -> usize {
        self.row_factor * self.col_factor
    }

    pub(crate) fn check_divides(&self, rows: usize, cols: usize) -> Result<()> {
        if rows % self.row_factor != 0 || cols % self.col_factor != 0 {
            return Err(Error::NotDivisible {
                rows,
                cols,
                row_factor: self.row_factor,
                col_factor: self.col_factor,
            });
        }
        Ok(())
    }

    pub(crate) fn decimate_band(&self, band: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let (hc, wc) = (rows / self.row_factor, cols / self.col_factor);
        let mut out = Vec::with_capacity(hc * wc);
        for i in 0..hc {
            for j in 0..wc {
                out.push(band[i * self.row_factor * cols + j * self.col_factor]);
            }
        }
        out
    }

    pub(crate) fn upsample_band(&self, coarse: &[f64], hc: usize, wc: usize) -> Vec<f64> {
        let cols = wc * self.col_factor;
        let mut out = vec![0.0; hc * self.row_factor * cols];
        for i in 0..hc {
            for j in 0..wc {
                out[i * self.row_factor * cols + j * self.col_factor] = coarse[i * wc + j];
            }
        }
        out
    }
}

/// Blur followed by decimation; the two only exist together.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDegradation {
    pub blur: BlurKernel,
    pub decimation: Decimation,
}

impl SpatialDegradation {
    pub fn new(blur: BlurKernel, decimation: Decimation) -> Self {
        Self { blur, decimation }
    }

    /// Gaussian blur with the default width for the given factor.
    pub fn with_default_blur(decimation: Decimation) -> Self {
        Self::new(default_blur_for(decimation), decimation)
    }

    pub fn bind(&self, rows: usize, cols: usize) -> Result<SpatialOperator> {
        SpatialOperator::new(&self.blur, self.decimation, rows, cols)
    }
}

/// Per-sensor degradation: optional `L`, optional `R = B S`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DegradationModel {
    pub spectral: Option<SpectralResponse>,
    pub spatial: Option<SpatialDegradation>,
}

impl DegradationModel {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn spectral(response: SpectralResponse) -> Self {
        Self {
            spectral: Some(response),
            spatial: None,
        }
    }

    pub fn spatial(spatial: SpatialDegradation) -> Self {
        Self {
            spectral: None,
            spatial: Some(spatial),
        }
    }

    pub fn full(response: SpectralResponse, spatial: SpatialDegradation) -> Self {
        Self {
            spectral: Some(response),
            spatial: Some(spatial),
        }
    }

    pub fn has_spectral(&self) -> bool {
        self.spectral.is_some()
    }

    pub fn has_spatial(&self) -> bool {
        self.spatial.is_some()
    }

    pub fn decimation(&self) -> Option<Decimation> {
        self.spatial.as_ref().map(|s| s.decimation)
    }

    /// Geometry of the observation produced from a latent image of `latent` geometry.
    pub fn observed_geometry(&self, latent: Geometry) -> Result<Geometry> {
        let bands = match &self.spectral {
            Some(l) if l.in_bands() != latent.bands => {
                return Err(Error::BandMismatch {
                    expected: l.in_bands(),
                    found: latent.bands,
                })
            }
            Some(l) => l.out_bands(),
            None => latent.bands,
        };
        let (height, width) = match &self.spatial {
            Some(s) => {
                s.decimation.check_divides(latent.height, latent.width)?;
                (
                    latent.height / s.decimation.row_factor(),
                    latent.width / s.decimation.col_factor(),
                )
            }
            None => (latent.height, latent.width),
        };
        Ok(Geometry::new(width, height, bands))
    }

    /// Binds the model to a latent grid for repeated application.
    pub fn bind(&self, latent: Geometry) -> Result<BoundModel> {
        let observed = self.observed_geometry(latent)?;
        let spatial = match &self.spatial {
            Some(s) => Some(s.bind(latent.height, latent.width)?),
            None => None,
        };
        Ok(BoundModel {
            spectral: self.spectral.as_ref().map(|l| l.matrix().clone()),
            spatial,
            latent,
            observed,
        })
    }
}

/// A degradation model bound to a latent grid, with forward and adjoint maps.
pub struct BoundModel {
    spectral: Option<DMatrix<f64>>,
    spatial: Option<SpatialOperator>,
    latent: Geometry,
    observed: Geometry,
}

impl BoundModel {
    pub fn latent(&self) -> Geometry {
        self.latent
    }

    pub fn observed(&self) -> Geometry {
        self.observed
    }

    pub fn spectral_matrix(&self) -> Option<&DMatrix<f64>> {
        self.spectral.as_ref()
    }

    pub fn spatial(&self) -> Option<&SpatialOperator> {
        self.spatial.as_ref()
    }

    /// `L Z`, leaving the grid untouched.
    pub fn spectral_forward(&self, z: &MultiBandImage) -> MultiBandImage {
        match &self.spectral {
            Some(l) => z.same_grid(l * z.matrix()),
            None => z.clone(),
        }
    }

    /// `L^T Z`.
    pub fn spectral_adjoint(&self, z: &MultiBandImage) -> MultiBandImage {
        match &self.spectral {
            Some(l) => z.same_grid(l.transpose() * z.matrix()),
            None => z.clone(),
        }
    }

    /// `Z R`, band by band.
    pub fn spatial_forward(&self, z: &MultiBandImage) -> MultiBandImage {
        match &self.spatial {
            Some(op) => map_bands(z, self.observed.width, self.observed.height, |b| {
                op.forward(b)
            }),
            None => z.clone(),
        }
    }

    /// `Z R^T`, band by band.
    pub fn spatial_adjoint(&self, z: &MultiBandImage) -> MultiBandImage {
        match &self.spatial {
            Some(op) => map_bands(z, self.latent.width, self.latent.height, |b| op.adjoint(b)),
            None => z.clone(),
        }
    }

    /// `L X R`.
    pub fn forward(&self, x: &MultiBandImage) -> MultiBandImage {
        self.spatial_forward(&self.spectral_forward(x))
    }

    /// `L^T Y R^T`.
    pub fn adjoint(&self, y: &MultiBandImage) -> MultiBandImage {
        self.spectral_adjoint(&self.spatial_adjoint(y))
    }
}

pub(crate) fn map_bands(
    z: &MultiBandImage,
    width: usize,
    height: usize,
    f: impl Fn(&[f64]) -> Vec<f64>,
) -> MultiBandImage {
    let mut out = DMatrix::zeros(z.band_count(), width * height);
    for b in 0..z.band_count() {
        let band = f(&z.band(b));
        for (p, v) in band.into_iter().enumerate() {
            out[(b, p)] = v;
        }
    }
    MultiBandImage::from_matrix(width, height, out)
}

/// Diagonal band covariance `Λ`; pixel covariance is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    band_variances: Vec<f64>,
}

impl NoiseModel {
    pub fn new(band_variances: Vec<f64>) -> Result<Self> {
        if band_variances.is_empty() {
            return Err(Error::InvalidParameter(
                "noise model needs at least one band".into(),
            ));
        }
        if let Some(v) = band_variances.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "band variances must be finite and >= 0, got {v}"
            )));
        }
        Ok(Self { band_variances })
    }

    pub fn isotropic(bands: usize, variance: f64) -> Result<Self> {
        Self::new(vec![variance; bands])
    }

    pub fn band_variances(&self) -> &[f64] {
        &self.band_variances
    }

    pub fn band_count(&self) -> usize {
        self.band_variances.len()
    }

    pub fn is_isotropic(&self) -> bool {
        let first = self.band_variances[0];
        self.band_variances.iter().all(|v| *v == first)
    }

    pub(crate) fn check_bands(&self, bands: usize) -> Result<()> {
        if self.band_count() != bands {
            return Err(Error::BandMismatch {
                expected: bands,
                found: self.band_count(),
            });
        }
        Ok(())
    }

    /// Diagonal of `Λ^{-1}`; errors on a zero variance.
    pub fn precisions(&self) -> Result<Vec<f64>> {
        self.band_variances
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    Ok(1.0 / v)
                } else {
                    Err(Error::Singular(
                        "a data-fit term needs strictly positive band variances".into(),
                    ))
                }
            })
            .collect()
    }
}

pub fn apply_spectral(response: &SpectralResponse, x: &MultiBandImage) -> Result<MultiBandImage> {
    if response.in_bands() != x.band_count() {
        return Err(Error::BandMismatch {
            expected: response.in_bands(),
            found: x.band_count(),
        });
    }
    Ok(x.same_grid(response.matrix() * x.matrix()))
}

/// Band-wise cyclic convolution.
pub fn apply_blur(kernel: &BlurKernel, x: &MultiBandImage) -> Result<MultiBandImage> {
    let op = SpatialOperator::new(kernel, Decimation::new(1, 1)?, x.height(), x.width())?;
    Ok(map_bands(x, x.width(), x.height(), |b| op.blur(b)))
}

pub fn decimate(decimation: Decimation, x: &MultiBandImage) -> Result<MultiBandImage> {
    decimation.check_divides(x.height(), x.width())?;
    let (h, w) = (
        x.height() / decimation.row_factor(),
        x.width() / decimation.col_factor(),
    );
    Ok(map_bands(x, w, h, |b| {
        decimation.decimate_band(b, x.height(), x.width())
    }))
}

/// Zero-interpolation upsampling, the adjoint of [`decimate`].
pub fn upsample_adjoint(decimation: Decimation, z: &MultiBandImage) -> MultiBandImage {
    let (h, w) = (
        z.height() * decimation.row_factor(),
        z.width() * decimation.col_factor(),
    );
    map_bands(z, w, h, |b| {
        decimation.upsample_band(b, z.height(), z.width())
    })
}

/// Noiseless `L X R`; absent components act as identities.
pub fn apply_forward(model: &DegradationModel, x: &MultiBandImage) -> Result<MultiBandImage> {
    let mut y = match &model.spectral {
        Some(l) => apply_spectral(l, x)?,
        None => x.clone(),
    };
    if let Some(s) = &model.spatial {
        y = apply_blur(&s.blur, &y)?;
        y = decimate(s.decimation, &y)?;
    }
    Ok(y)
}

/// Draws `N ~ MN(0, Λ, I)` for the given geometry.
pub fn sample_noise(noise: &NoiseModel, geometry: Geometry, seed: u64) -> Result<MultiBandImage> {
    noise.check_bands(geometry.bands)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = geometry.pixels();
    let mut data = DMatrix::zeros(geometry.bands, n);
    for (b, &var) in noise.band_variances().iter().enumerate() {
        let sd = var.sqrt();
        for p in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            data[(b, p)] = sd * z;
        }
    }
    Ok(MultiBandImage::from_matrix(
        geometry.width,
        geometry.height,
        data,
    ))
}
