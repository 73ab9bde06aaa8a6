use nalgebra::{Cholesky, DMatrix, Dyn};

use super::check_lambda;
use crate::error::{Error, Result};
use crate::image::MultiBandImage;
use crate::model::{NoiseModel, SpectralResponse};

/// Factored symmetric positive definite band system, reused across pixels.
pub(crate) struct SpectralSystem {
    factor: Cholesky<f64, Dyn>,
}

impl SpectralSystem {
    pub(crate) fn new(normal: DMatrix<f64>) -> Result<Self> {
        let scale = normal.diagonal().amax();
        let factor = Cholesky::new(normal).ok_or_else(singular)?;
        let pivots = factor.l_dirty().diagonal();
        let smallest = pivots.iter().fold(f64::INFINITY, |m, v| m.min(v * v));
        if !(smallest > 1e-13 * scale) {
            return Err(singular());
        }
        Ok(Self { factor })
    }

    /// Solves for every pixel column of `rhs` at once.
    pub(crate) fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve(rhs)
    }
}

fn singular() -> Error {
    Error::Singular(
        "spectral normal equations are singular; use lambda > 0 or a full-rank response".into(),
    )
}

/// `Lᵀ W L` with `L = I` when absent.
pub(crate) fn weighted_gram(l: Option<&DMatrix<f64>>, w: &[f64], n: usize) -> DMatrix<f64> {
    match l {
        Some(l) => {
            let mut wl = l.clone();
            for (r, mut row) in wl.row_iter_mut().enumerate() {
                row *= w[r];
            }
            l.transpose() * wl
        }
        None => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&w[..n])),
    }
}

/// `Lᵀ W Y` with `L = I` when absent.
pub(crate) fn weighted_back(l: Option<&DMatrix<f64>>, w: &[f64], y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut wy = y.clone();
    for (r, mut row) in wy.row_iter_mut().enumerate() {
        row *= w[r];
    }
    match l {
        Some(l) => l.transpose() * wy,
        None => wy,
    }
}

/// Pixelwise minimizer of
/// `½‖Λ1^{-1/2}(Y1 − L1X)‖² + ½‖Λ2^{-1/2}(Ỹ2 − L2X)‖² + λ‖X − X̄‖²`,
/// with `L2 = I` when `l2` is `None`.
#[allow(clippy::too_many_arguments)]
pub fn solve_spectral_deblur(
    y1: &MultiBandImage,
    l1: &SpectralResponse,
    ytilde2: &MultiBandImage,
    l2: Option<&SpectralResponse>,
    xbar: &MultiBandImage,
    n1: &NoiseModel,
    n2: &NoiseModel,
    lambda: f64,
) -> Result<MultiBandImage> {
    check_lambda(lambda)?;
    let n = xbar.band_count();
    if l1.in_bands() != n {
        return Err(Error::BandMismatch {
            expected: n,
            found: l1.in_bands(),
        });
    }
    if l1.out_bands() != y1.band_count() {
        return Err(Error::BandMismatch {
            expected: l1.out_bands(),
            found: y1.band_count(),
        });
    }
    let m2 = l2.map_or(n, |l| l.out_bands());
    if let Some(l) = l2 {
        if l.in_bands() != n {
            return Err(Error::BandMismatch {
                expected: n,
                found: l.in_bands(),
            });
        }
    }
    if ytilde2.band_count() != m2 {
        return Err(Error::BandMismatch {
            expected: m2,
            found: ytilde2.band_count(),
        });
    }
    if y1.pixel_count() != xbar.pixel_count() || ytilde2.pixel_count() != xbar.pixel_count() {
        return Err(Error::ShapeMismatch(
            "spectral deblur: pixel grids differ".into(),
        ));
    }
    n1.check_bands(y1.band_count())?;
    n2.check_bands(m2)?;
    let p1 = n1.precisions()?;
    let p2 = n2.precisions()?;
    let l2m = l2.map(|l| l.matrix());

    let mut normal = weighted_gram(Some(l1.matrix()), &p1, n) + weighted_gram(l2m, &p2, n);
    for b in 0..n {
        normal[(b, b)] += 2.0 * lambda;
    }
    let rhs = weighted_back(Some(l1.matrix()), &p1, y1.matrix())
        + weighted_back(l2m, &p2, ytilde2.matrix())
        + xbar.matrix() * (2.0 * lambda);
    let system = SpectralSystem::new(normal)?;
    Ok(xbar.same_grid(system.solve(&rhs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::solve_ridge_denoise;

    #[test]
    fn identity_response_matches_ridge() {
        let y1 = MultiBandImage::from_bands(2, 1, &[vec![1.0, 2.0], vec![0.5, -1.0]]).unwrap();
        let y2 = MultiBandImage::from_bands(2, 1, &[vec![3.0, 1.0], vec![2.5, 4.0]]).unwrap();
        let xbar = MultiBandImage::from_bands(2, 1, &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let n1 = NoiseModel::new(vec![0.5, 1.5]).unwrap();
        let n2 = NoiseModel::new(vec![2.0, 0.25]).unwrap();
        let a = solve_spectral_deblur(
            &y1,
            &SpectralResponse::identity(2),
            &y2,
            None,
            &xbar,
            &n1,
            &n2,
            0.3,
        )
        .unwrap();
        let b = solve_ridge_denoise(&y1, &y2, &xbar, &n1, &n2, 0.3).unwrap();
        assert!((&a - &b).max_abs() < 1e-12);
    }

    #[test]
    fn singular_without_penalty_is_reported() {
        let l1 = SpectralResponse::band_average(&[vec![0, 1]], 2).unwrap();
        let l2 = SpectralResponse::band_average(&[vec![0, 1]], 2).unwrap();
        let y = MultiBandImage::from_bands(1, 1, &[vec![1.0]]).unwrap();
        let xbar = MultiBandImage::from_bands(1, 1, &[vec![0.0], vec![0.0]]).unwrap();
        let n = NoiseModel::isotropic(1, 1.0).unwrap();
        let err = solve_spectral_deblur(&y, &l1, &y, Some(&l2), &xbar, &n, &n, 0.0).unwrap_err();
        assert!(err.to_string().contains("lambda"));
    }
}
