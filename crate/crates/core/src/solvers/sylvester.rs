use nalgebra::{DMatrix, SymmetricEigen};

use super::check_lambda;
use super::spectral::{weighted_back, weighted_gram};
use crate::error::{Error, Result};
use crate::fft::SpatialOperator;
use crate::image::MultiBandImage;
use crate::model::{BoundModel, DegradationModel, NoiseModel};

/// Solver for `A X + Ω X Q = C` with `A` symmetric positive semidefinite,
/// `Ω` diagonal positive and `Q = R Rᵀ` for a cyclic blur-and-decimate `R`.
///
/// With `Ω^{-1/2} A Ω^{-1/2} = V D Vᵀ`, the substitution
/// `X = Ω^{-1/2} V X̃` decouples the rows of `X̃` into independent shifted
/// super-resolution systems `(d_i I + Q) x̃_i = c̃_i`.
pub(crate) struct SylvesterSolver {
    basis: DMatrix<f64>,
    shifts: Vec<f64>,
    omega_isqrt: Vec<f64>,
}

impl SylvesterSolver {
    pub(crate) fn new(a: &DMatrix<f64>, omega: &[f64]) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || omega.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "sylvester: A is {}x{}, omega has {} entries",
                a.nrows(),
                a.ncols(),
                omega.len()
            )));
        }
        if omega.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParameter(
                "sylvester: omega must be positive".into(),
            ));
        }
        let omega_isqrt: Vec<f64> = omega.iter().map(|w| 1.0 / w.sqrt()).collect();
        let m = DMatrix::from_fn(n, n, |i, j| omega_isqrt[i] * a[(i, j)] * omega_isqrt[j]);
        let m = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(m);
        let scale = eig.eigenvalues.amax().max(1.0);
        let shifts = eig
            .eigenvalues
            .iter()
            .map(|d| {
                if d.abs() < 1e-14 * scale {
                    0.0
                } else {
                    d.max(0.0)
                }
            })
            .collect();
        Ok(Self {
            basis: eig.eigenvectors,
            shifts,
            omega_isqrt,
        })
    }

    pub(crate) fn solve(&self, op: &SpatialOperator, c: &MultiBandImage) -> Result<MultiBandImage> {
        let n = self.shifts.len();
        if c.band_count() != n {
            return Err(Error::BandMismatch {
                expected: n,
                found: c.band_count(),
            });
        }
        let mut scaled = c.matrix().clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= self.omega_isqrt[i];
        }
        let rotated = self.basis.transpose() * scaled;
        let mut solved = DMatrix::zeros(n, c.pixel_count());
        for i in 0..n {
            let row: Vec<f64> = rotated.row(i).iter().copied().collect();
            let x = op.solve_shifted(&row, self.shifts[i], 1.0)?;
            for (p, v) in x.into_iter().enumerate() {
                solved[(i, p)] = v;
            }
        }
        let mut x = &self.basis * solved;
        for (i, mut row) in x.row_iter_mut().enumerate() {
            row *= self.omega_isqrt[i];
        }
        Ok(c.same_grid(x))
    }
}

/// Exact minimizer of
/// `½‖Λ1^{-1/2}(Y1 − X R1)‖² + ½‖Λ2^{-1/2}(Ỹ2 − L2 X)‖² + λ‖X − X̄‖²`
/// for a spatial-only `model1` and a spectral-only `model2`.
#[allow(clippy::too_many_arguments)]
pub fn solve_sylvester_fusion(
    y1: &MultiBandImage,
    model1: &DegradationModel,
    ytilde2: &MultiBandImage,
    model2: &DegradationModel,
    xbar: &MultiBandImage,
    n1: &NoiseModel,
    n2: &NoiseModel,
    lambda: f64,
) -> Result<MultiBandImage> {
    check_lambda(lambda)?;
    if model1.has_spectral() || model2.has_spatial() {
        return Err(Error::InvalidParameter(
            "sylvester fusion needs a spatial-only first model and a spectral-only second model"
                .into(),
        ));
    }
    let latent = xbar.geometry();
    let b1 = model1.bind(latent)?;
    let b2 = model2.bind(latent)?;
    if b1.observed() != y1.geometry() {
        return Err(Error::ShapeMismatch(format!(
            "sylvester fusion: Y1 is {:?}, model predicts {:?}",
            y1.geometry(),
            b1.observed()
        )));
    }
    if b2.observed() != ytilde2.geometry() {
        return Err(Error::ShapeMismatch(format!(
            "sylvester fusion: Y2 is {:?}, model predicts {:?}",
            ytilde2.geometry(),
            b2.observed()
        )));
    }
    n1.check_bands(latent.bands)?;
    n2.check_bands(ytilde2.band_count())?;
    let p1 = n1.precisions()?;
    let p2 = n2.precisions()?;
    sylvester_fusion_bound(y1, &b1, ytilde2, &b2, xbar, &p1, &p2, lambda)
}

/// [`solve_sylvester_fusion`] on pre-bound models and precisions.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sylvester_fusion_bound(
    y1: &MultiBandImage,
    b1: &BoundModel,
    ytilde2: &MultiBandImage,
    b2: &BoundModel,
    xbar: &MultiBandImage,
    p1: &[f64],
    p2: &[f64],
    lambda: f64,
) -> Result<MultiBandImage> {
    let latent = xbar.geometry();
    let l2 = b2.spectral_matrix();

    let mut a = weighted_gram(l2, p2, latent.bands);
    for i in 0..latent.bands {
        a[(i, i)] += 2.0 * lambda;
    }
    let back1 = b1.spatial_adjoint(y1);
    let c = weighted_back(l2, p2, ytilde2.matrix())
        + weighted_back(None, p1, back1.matrix())
        + xbar.matrix() * (2.0 * lambda);
    let c = xbar.same_grid(c);
    let solver = SylvesterSolver::new(&a, p1)?;
    match b1.spatial() {
        Some(op) => solver.solve(op, &c),
        None => {
            // R1 = I: the system is pixelwise (A + Ω) x = c.
            for i in 0..latent.bands {
                a[(i, i)] += p1[i];
            }
            let system = super::SpectralSystem::new(a)?;
            Ok(xbar.same_grid(system.solve(c.matrix())))
        }
    }
}
