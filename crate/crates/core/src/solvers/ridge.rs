use nalgebra::DMatrix;

use super::check_lambda;
use crate::error::Result;
use crate::image::MultiBandImage;
use crate::model::NoiseModel;

/// Pixelwise minimizer of
/// `½‖Λ1^{-1/2}(Y1 − X)‖² + ½‖Λ2^{-1/2}(Ỹ2 − X)‖² + λ‖X − X̄‖²`.
pub fn solve_ridge_denoise(
    y1: &MultiBandImage,
    ytilde2: &MultiBandImage,
    xbar: &MultiBandImage,
    n1: &NoiseModel,
    n2: &NoiseModel,
    lambda: f64,
) -> Result<MultiBandImage> {
    check_lambda(lambda)?;
    y1.ensure_same_shape(ytilde2, "ridge denoise")?;
    y1.ensure_same_shape(xbar, "ridge denoise")?;
    n1.check_bands(y1.band_count())?;
    n2.check_bands(y1.band_count())?;
    let p1 = n1.precisions()?;
    let p2 = n2.precisions()?;
    let two_lambda = 2.0 * lambda;
    let data = DMatrix::from_fn(y1.band_count(), y1.pixel_count(), |b, p| {
        (p1[b] * y1.matrix()[(b, p)]
            + p2[b] * ytilde2.matrix()[(b, p)]
            + two_lambda * xbar.matrix()[(b, p)])
            / (p1[b] + p2[b] + two_lambda)
    });
    Ok(y1.same_grid(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Geometry;

    fn img(values: &[f64]) -> MultiBandImage {
        MultiBandImage::from_bands(
            values.len() / 2,
            1,
            &[
                values[..values.len() / 2].to_vec(),
                values[values.len() / 2..].to_vec(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn equal_noise_no_penalty_is_mean() {
        let y1 = img(&[1.0, 2.0, 3.0, 4.0]);
        let y2 = img(&[3.0, 0.0, 1.0, 8.0]);
        let n = NoiseModel::isotropic(2, 1.0).unwrap();
        let x = solve_ridge_denoise(&y1, &y2, &y1, &n, &n, 0.0).unwrap();
        assert_eq!(
            x.matrix().as_slice(),
            img(&[2.0, 1.0, 2.0, 6.0]).matrix().as_slice()
        );
    }

    #[test]
    fn large_penalty_returns_prior() {
        let y1 = img(&[1.0, 2.0, 3.0, 4.0]);
        let y2 = img(&[3.0, 0.0, 1.0, 8.0]);
        let xbar = img(&[-1.0, 5.0, 2.0, 0.5]);
        let n = NoiseModel::new(vec![0.5, 2.0]).unwrap();
        let x = solve_ridge_denoise(&y1, &y2, &xbar, &n, &n, 1e12).unwrap();
        assert!((&x - &xbar).frobenius_norm() <= 1e-6 * xbar.frobenius_norm());
    }

    #[test]
    fn zero_variance_is_rejected() {
        let g = Geometry::new(2, 1, 2);
        let y = MultiBandImage::zeros(g);
        let n = NoiseModel::new(vec![0.0, 1.0]).unwrap();
        assert!(solve_ridge_denoise(&y, &y, &y, &n, &n, 0.0).is_err());
    }
}
