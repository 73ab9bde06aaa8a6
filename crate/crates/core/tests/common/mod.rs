#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rfcd_core::dense;
use rfcd_core::{
    BlurKernel, Decimation, DegradationModel, MultiBandImage, NoiseModel, SpatialDegradation,
    SpectralResponse,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(
    rng: &mut ChaCha8Rng,
    width: usize,
    height: usize,
    bands: usize,
) -> MultiBandImage {
    let data = DMatrix::from_fn(bands, width * height, |_, _| rng.random_range(-1.0..1.0));
    MultiBandImage::new(width, height, data).unwrap()
}

/// Non-negative rows summing to one.
pub fn random_response(rng: &mut ChaCha8Rng, out: usize, inp: usize) -> SpectralResponse {
    let mut m = DMatrix::from_fn(out, inp, |_, _| rng.random_range(0.05..1.0));
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    SpectralResponse::new(m).unwrap()
}

/// Centrosymmetric unit-sum kernel with random positive taps.
pub fn random_kernel(rng: &mut ChaCha8Rng, side: usize) -> BlurKernel {
    let raw = DMatrix::from_fn(side, side, |_, _| rng.random_range(0.1..1.0));
    let mut taps = DMatrix::from_fn(side, side, |i, j| {
        raw[(i, j)] + raw[(side - 1 - i, side - 1 - j)]
    });
    let s = taps.sum();
    taps /= s;
    BlurKernel::new(taps).unwrap()
}

pub fn random_spatial(rng: &mut ChaCha8Rng, factor: usize) -> SpatialDegradation {
    SpatialDegradation::new(random_kernel(rng, 3), Decimation::uniform(factor).unwrap())
}

pub fn random_noise(rng: &mut ChaCha8Rng, bands: usize) -> NoiseModel {
    NoiseModel::new((0..bands).map(|_| rng.random_range(0.5..2.0)).collect()).unwrap()
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Owned pieces of a dense least-squares term for a model on a latent grid.
pub struct Term {
    pub a: DMatrix<f64>,
    pub w: DVector<f64>,
    pub y: DVector<f64>,
}

impl Term {
    pub fn new(
        model: &DegradationModel,
        bands: usize,
        rows: usize,
        cols: usize,
        y: &MultiBandImage,
        weights: &[f64],
    ) -> Self {
        let (l, r) = dense::model_matrices(model, bands, rows, cols);
        let a = dense::vec_operator(&l, &r);
        let w = dense::precision_diagonal(weights, y.pixel_count()).diagonal();
        Self {
            a,
            w,
            y: dense::vectorize(y.matrix()),
        }
    }

    pub fn view(&self) -> dense::DenseTerm<'_> {
        dense::DenseTerm {
            operator: &self.a,
            weights: &self.w,
            data: &self.y,
        }
    }
}

use rfcd_core::{
    generate_latent_scene, noise_for_snr, plant_changes, simulate_observation, ChangeSpec,
    Geometry, ScenarioId, ScenarioPlan, SceneSpec,
};

/// Canonical model pair of a scenario on `bands` latent bands, with side 1
/// decimated by `2d` when both sides are.
pub fn scenario_models(
    id: ScenarioId,
    bands: usize,
    d: usize,
) -> (DegradationModel, DegradationModel) {
    assert!(bands >= 4);
    let coarse: Vec<Vec<usize>> = vec![(0..bands / 2).collect(), (bands / 2..bands).collect()];
    let mut fine: Vec<Vec<usize>> = vec![vec![0, 1]];
    fine.extend((2..bands).map(|b| vec![b]));
    let la = SpectralResponse::band_average(&coarse, bands).unwrap();
    let lb = SpectralResponse::band_average(&fine, bands).unwrap();
    let sp = |f: usize| SpatialDegradation::with_default_blur(Decimation::uniform(f).unwrap());
    let spec = DegradationModel::spectral;
    let id_model = DegradationModel::identity;
    use ScenarioId::*;
    match id {
        S1 => (id_model(), id_model()),
        S2 => (spec(la), id_model()),
        S3 => (DegradationModel::spatial(sp(d)), id_model()),
        S4 => (DegradationModel::spatial(sp(d)), spec(la)),
        S5 => (DegradationModel::full(la, sp(d)), id_model()),
        S6 => (
            DegradationModel::spatial(sp(2 * d)),
            DegradationModel::spatial(sp(d)),
        ),
        S7 => (
            DegradationModel::full(la, sp(2 * d)),
            DegradationModel::spatial(sp(d)),
        ),
        S8 => (spec(la), spec(lb)),
        S9 => (DegradationModel::full(la, sp(d)), spec(lb)),
        S10 => (
            DegradationModel::full(la, sp(2 * d)),
            DegradationModel::full(lb, sp(d)),
        ),
    }
}

/// A synthetic scenario run: latent pair, observations at 30 dB, and truth.
pub struct Instance {
    pub plan: ScenarioPlan,
    pub x1: MultiBandImage,
    pub x2: MultiBandImage,
    pub y1: MultiBandImage,
    pub y2: MultiBandImage,
    pub n1: NoiseModel,
    pub n2: NoiseModel,
    pub truth: Vec<bool>,
}

pub fn instance(id: ScenarioId, size: usize, bands: usize, d: usize, seed: u64) -> Instance {
    let (m1, m2) = scenario_models(id, bands, d);
    let plan = ScenarioPlan::from_models(m1.clone(), m2.clone(), Geometry::new(size, size, bands))
        .unwrap();
    assert_eq!((plan.id, plan.swapped), (id, false));
    let scene = SceneSpec {
        width: size,
        height: size,
        band_count: bands,
        region_count: 8,
        signature_scale: 1.0,
        seed,
    };
    let x1 = generate_latent_scene(&scene).unwrap();
    let change = ChangeSpec {
        changed_fraction: 0.1,
        blob_count: 3,
        magnitude: 0.3,
    };
    let (x2, truth) = plant_changes(&x1, &change, seed + 100).unwrap();
    let n1 = noise_for_snr(&rfcd_core::apply_forward(&m1, &x1).unwrap(), 30.0).unwrap();
    let n2 = noise_for_snr(&rfcd_core::apply_forward(&m2, &x2).unwrap(), 30.0).unwrap();
    let y1 = simulate_observation(&x1, &m1, &n1, seed + 200).unwrap();
    let y2 = simulate_observation(&x2, &m2, &n2, seed + 300).unwrap();
    Instance {
        plan,
        x1,
        x2,
        y1,
        y2,
        n1,
        n2,
        truth,
    }
}
