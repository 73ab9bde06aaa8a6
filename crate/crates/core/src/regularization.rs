//! Penalties on the latent image and the change image, and the crude
//! estimate that anchors the Tikhonov term.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Geometry, MultiBandImage};
use crate::model::DegradationModel;

/// Weights of the Tikhonov (`lambda`) and group-sparsity (`gamma`) terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationParams {
    pub lambda: f64,
    pub gamma: f64,
}

impl RegularizationParams {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("gamma", gamma)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(Self { lambda, gamma })
    }
}

/// Sum of the Euclidean norms of the pixel columns.
pub fn l21_norm(d: &MultiBandImage) -> f64 {
    d.column_norms().iter().sum()
}

/// Proximal map of `kappa·‖·‖_{2,1}` under `½‖· − A‖²`.
pub fn group_soft_threshold(a: &MultiBandImage, kappa: f64) -> MultiBandImage {
    let mut out = a.matrix().clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        let shrink = if norm > kappa {
            1.0 - kappa / norm
        } else {
            0.0
        };
        col *= shrink;
    }
    a.same_grid(out)
}

/// `‖X − X̄‖²_F`.
pub fn tikhonov_penalty(x: &MultiBandImage, xbar: &MultiBandImage) -> Result<f64> {
    Ok(x.checked_sub(xbar)?.squared_norm())
}

/// Spectral back-projection through `Lᵀ(LLᵀ)⁺` followed by nearest-neighbour
/// replication onto the latent grid.
pub fn crude_estimate(
    y1: &MultiBandImage,
    model1: &DegradationModel,
    target: Geometry,
) -> Result<MultiBandImage> {
    let expected = model1.observed_geometry(target)?;
    if expected != y1.geometry() {
        return Err(Error::ShapeMismatch(format!(
            "crude estimate: observation is {:?} but the model maps {:?} to {:?}",
            y1.geometry(),
            target,
            expected
        )));
    }
    let spectral = match &model1.spectral {
        Some(l) => {
            let m = l.matrix();
            let gram = m * m.transpose();
            let inv = gram
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::Singular(e.to_string()))?;
            y1.same_grid(m.transpose() * inv * y1.matrix())
        }
        None => y1.clone(),
    };
    let Some(decimation) = model1.decimation() else {
        return Ok(spectral);
    };
    let (dr, dc) = (decimation.row_factor(), decimation.col_factor());
    let src = spectral.matrix();
    let data = DMatrix::from_fn(target.bands, target.pixels(), |b, p| {
        let (r, c) = (p / target.width, p % target.width);
        src[(b, (r / dr) * spectral.width() + c / dc)]
    });
    Ok(MultiBandImage::from_matrix(
        target.width,
        target.height,
        data,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Decimation, SpatialDegradation, SpectralResponse};

    fn column(values: &[f64]) -> MultiBandImage {
        MultiBandImage::from_bands(1, 1, &values.iter().map(|v| vec![*v]).collect::<Vec<_>>())
            .unwrap()
    }

    #[test]
    fn l21_examples() {
        assert_eq!(
            l21_norm(&MultiBandImage::zeros(Geometry::new(3, 2, 4))),
            0.0
        );
        assert_eq!(l21_norm(&column(&[3.0, 4.0])), 5.0);
        let two = MultiBandImage::from_bands(2, 1, &[vec![3.0, 0.0], vec![4.0, 0.0]]).unwrap();
        assert_eq!(l21_norm(&two), 5.0);
    }

    #[test]
    fn soft_threshold_examples() {
        let a = column(&[3.0, 4.0]);
        assert_eq!(group_soft_threshold(&a, 0.0), a);
        let half = group_soft_threshold(&a, 2.5);
        assert!((half.get(0, 0, 0) - 1.5).abs() < 1e-15);
        assert!((half.get(1, 0, 0) - 2.0).abs() < 1e-15);
        assert_eq!(group_soft_threshold(&a, 5.0).max_abs(), 0.0);
        let zero = column(&[0.0, 0.0]);
        assert_eq!(group_soft_threshold(&zero, 1.0), zero);
    }

    #[test]
    fn tikhonov_examples() {
        let g = Geometry::new(3, 1, 2);
        let x = MultiBandImage::filled(g, 2.0);
        let xbar = MultiBandImage::filled(g, 1.0);
        assert_eq!(tikhonov_penalty(&x, &x).unwrap(), 0.0);
        assert_eq!(tikhonov_penalty(&x, &xbar).unwrap(), 6.0);
        let x3 = MultiBandImage::filled(g, 4.0);
        assert_eq!(tikhonov_penalty(&x3, &xbar).unwrap(), 9.0 * 6.0);
        assert!(tikhonov_penalty(&x, &MultiBandImage::zeros(Geometry::new(2, 1, 2))).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(RegularizationParams::new(-1.0, 0.0).is_err());
        assert!(RegularizationParams::new(0.0, f64::NAN).is_err());
        assert!(RegularizationParams::new(0.0, 0.0).is_ok());
    }

    #[test]
    fn crude_estimate_identity() {
        let y = MultiBandImage::from_bands(2, 1, &[vec![1.0, 2.0]]).unwrap();
        let x = crude_estimate(&y, &DegradationModel::identity(), y.geometry()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn crude_estimate_averaging_row() {
        let l = SpectralResponse::band_average(&[vec![0, 1]], 2).unwrap();
        let y = column(&[3.0]);
        let x = crude_estimate(&y, &DegradationModel::spectral(l), Geometry::new(1, 1, 2)).unwrap();
        assert!((x.get(0, 0, 0) - 3.0).abs() < 1e-12);
        assert!((x.get(1, 0, 0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn crude_estimate_replicates() {
        let spatial = SpatialDegradation::with_default_blur(Decimation::uniform(2).unwrap());
        let y = column(&[7.0]);
        let x = crude_estimate(
            &y,
            &DegradationModel::spatial(spatial),
            Geometry::new(2, 2, 1),
        )
        .unwrap();
        assert_eq!(x.band(0), vec![7.0; 4]);
    }

    #[test]
    fn crude_estimate_rejects_inconsistent_target() {
        let y = column(&[7.0]);
        assert!(crude_estimate(&y, &DegradationModel::identity(), Geometry::new(2, 2, 1)).is_err());
    }
}
