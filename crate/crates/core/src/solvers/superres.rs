use crate::error::{Error, Result};
use crate::fft::SpatialOperator;
use crate::image::MultiBandImage;
use crate::model::DegradationModel;

/// Band `b` minimizes `w_b‖y_b − x_b R‖² + mu_b‖x_b − z_b‖²` on the grid of `z`.
pub(crate) fn superres_bands(
    op: &SpatialOperator,
    y: &MultiBandImage,
    z: &MultiBandImage,
    weights: &[f64],
    mus: &[f64],
) -> Result<MultiBandImage> {
    let mut out = MultiBandImage::zeros(z.geometry());
    for b in 0..z.band_count() {
        let (w, mu) = (weights[b], mus[b]);
        let back = op.adjoint(&y.band(b));
        let zb = z.band(b);
        let rhs: Vec<f64> = back.iter().zip(&zb).map(|(a, c)| w * a + mu * c).collect();
        out.set_band(b, &op.solve_shifted(&rhs, mu, w)?);
    }
    Ok(out)
}

/// Per-band minimizer of `weight·‖Y − X B S‖² + mu·‖X − Z‖²`.
pub fn solve_band_superres(
    y: &MultiBandImage,
    model: &DegradationModel,
    z: &MultiBandImage,
    weight: f64,
    mu: f64,
) -> Result<MultiBandImage> {
    if model.has_spectral() {
        return Err(Error::InvalidParameter(
            "band super-resolution takes a spatial-only model".into(),
        ));
    }
    if !(weight >= 0.0) || !(mu >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "weight and mu must be >= 0, got weight={weight}, mu={mu}"
        )));
    }
    let bound = model.bind(z.geometry())?;
    if bound.observed() != y.geometry() {
        return Err(Error::ShapeMismatch(format!(
            "super-resolution: observation is {:?}, model predicts {:?}",
            y.geometry(),
            bound.observed()
        )));
    }
    match bound.spatial() {
        Some(op) => {
            let n = z.band_count();
            superres_bands(op, y, z, &vec![weight; n], &vec![mu; n])
        }
        None => {
            if weight + mu == 0.0 {
                return Err(Error::Singular("weight and mu are both zero".into()));
            }
            y.ensure_same_shape(z, "super-resolution")?;
            Ok(y.same_grid((y.matrix() * weight + z.matrix() * mu) / (weight + mu)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Geometry;
    use crate::model::{BlurKernel, Decimation, SpatialDegradation};

    fn ramp(w: usize, h: usize, offset: f64) -> MultiBandImage {
        MultiBandImage::from_bands(
            w,
            h,
            &[(0..w * h).map(|p| offset + (p as f64).sin()).collect()],
        )
        .unwrap()
    }

    #[test]
    fn trivial_degradation_averages() {
        let model = DegradationModel::spatial(SpatialDegradation::new(
            BlurKernel::delta(),
            Decimation::uniform(1).unwrap(),
        ));
        let y = ramp(3, 2, 0.0);
        let z = ramp(3, 2, 1.0);
        let x = solve_band_superres(&y, &model, &z, 1.0, 1.0).unwrap();
        let mean = (y.matrix() + z.matrix()) * 0.5;
        assert!((x.matrix() - mean).amax() < 1e-12);
    }

    #[test]
    fn penalty_dominance() {
        let model = DegradationModel::spatial(SpatialDegradation::new(
            BlurKernel::gaussian(1.0, 3).unwrap(),
            Decimation::uniform(2).unwrap(),
        ));
        let y = ramp(2, 2, 0.0);
        let z = ramp(4, 4, 2.0);
        let x = solve_band_superres(&y, &model, &z, 1.0, 1e12).unwrap();
        assert!((&x - &z).frobenius_norm() <= 1e-5 * z.frobenius_norm());
    }

    #[test]
    fn zero_mu_with_decimation_is_underdetermined() {
        let model = DegradationModel::spatial(SpatialDegradation::new(
            BlurKernel::delta(),
            Decimation::uniform(2).unwrap(),
        ));
        let y = MultiBandImage::zeros(Geometry::new(2, 2, 1));
        let z = MultiBandImage::zeros(Geometry::new(4, 4, 1));
        assert!(matches!(
            solve_band_superres(&y, &model, &z, 1.0, 0.0),
            Err(Error::Singular(_))
        ));
    }
}
