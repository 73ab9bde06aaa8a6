mod common;

use common::*;
use nalgebra::DVector;
use rfcd_core::dense::{
    self, group_lasso_objective, group_lasso_optimum, quadratic_objective, quadratic_optimum,
};
use rfcd_core::solvers::{
    admm_minimize, forward_backward_l21, AdmmPlan, CorrectionData, FusionData, PlanKind,
};
use rfcd_core::{DegradationModel, Geometry, MultiBandImage, NoiseModel, SolverOptions};

const ROWS: usize = 8;
const COLS: usize = 8;
const BANDS: usize = 4;

fn admm_opts() -> SolverOptions {
    SolverOptions {
        max_iters: 5000,
        ..SolverOptions::default()
    }
}

fn fusion_models(kind: PlanKind, seed: u64) -> (DegradationModel, DegradationModel) {
    let mut rng = rng(seed);
    let mut l = |m: usize| random_response(&mut rng, m, BANDS);
    let (l1, l2) = (l(2), l(3));
    let mut rng = common::rng(seed + 1);
    let mut r = |d: usize| random_spatial(&mut rng, d);
    match kind {
        PlanKind::FusionSpectralSplit => (
            DegradationModel::full(l1, r(2)),
            DegradationModel::identity(),
        ),
        PlanKind::FusionIdentitySplit => (
            DegradationModel::spatial(r(4)),
            DegradationModel::spatial(r(2)),
        ),
        PlanKind::FusionSpectralSplitSylvester => (
            DegradationModel::full(l1, r(4)),
            DegradationModel::spatial(r(2)),
        ),
        PlanKind::FusionSpatialSplit => (
            DegradationModel::full(l1, r(2)),
            DegradationModel::spectral(l2),
        ),
        PlanKind::FusionDoubleSplit => (
            DegradationModel::full(l1, r(4)),
            DegradationModel::full(l2, r(2)),
        ),
        other => panic!("{other:?} is not a fusion plan"),
    }
}

fn observe(rng: &mut rand_chacha::ChaCha8Rng, model: &DegradationModel) -> MultiBandImage {
    let g = model
        .observed_geometry(Geometry::new(COLS, ROWS, BANDS))
        .unwrap();
    random_image(rng, g.width, g.height, g.bands)
}

#[test]
fn fusion_plans_reach_dense_optimum() {
    let kinds = [
        PlanKind::FusionSpectralSplit,
        PlanKind::FusionIdentitySplit,
        PlanKind::FusionSpectralSplitSylvester,
        PlanKind::FusionSpatialSplit,
        PlanKind::FusionDoubleSplit,
    ];
    for (i, kind) in kinds.into_iter().enumerate() {
        for seed in 0..3u64 {
            let base = 100 * i as u64 + 10 * seed;
            let (m1, m2) = fusion_models(kind, base);
            let mut rng = rng(base + 5);
            let y1 = observe(&mut rng, &m1);
            let y2 = observe(&mut rng, &m2);
            let xbar = random_image(&mut rng, COLS, ROWS, BANDS);
            let n1 = random_noise(&mut rng, y1.band_count());
            let n2 = random_noise(&mut rng, y2.band_count());
            let lambda = 0.05;
            let latent = Geometry::new(COLS, ROWS, BANDS);
            let (b1, b2) = (m1.bind(latent).unwrap(), m2.bind(latent).unwrap());
            let plan = AdmmPlan::fusion(
                kind,
                FusionData {
                    y1: &y1,
                    ytilde2: &y2,
                    xbar: &xbar,
                    init: &xbar,
                    model1: &b1,
                    model2: &b2,
                    noise1: &n1,
                    noise2: &n2,
                    lambda,
                },
            )
            .unwrap();
            let out = admm_minimize(&plan, &admm_opts()).unwrap();
            assert!(
                out.converged,
                "{kind:?} seed {seed}: {} sweeps",
                out.iterations
            );
            assert!(out.primal_residual < 1e-6 && out.dual_residual < 1e-6);

            let t1 = Term::new(&m1, BANDS, ROWS, COLS, &y1, &n1.precisions().unwrap());
            let t2 = Term::new(&m2, BANDS, ROWS, COLS, &y2, &n2.precisions().unwrap());
            let terms = [t1.view(), t2.view()];
            let xb = dense::vectorize(xbar.matrix());
            let opt = quadratic_optimum(&terms, &xb, lambda);
            let f_opt = quadratic_objective(&terms, &xb, lambda, &opt);
            let f = quadratic_objective(&terms, &xb, lambda, &dense::vectorize(out.x.matrix()));
            assert!(
                (f - f_opt).abs() <= 1e-4 * f_opt,
                "{kind:?} seed {seed}: {f} vs {f_opt}"
            );
            assert!(
                (out.objective - f).abs() <= 1e-9 * f,
                "{kind:?}: reported objective"
            );
        }
    }
}

fn zero_bound(term: &dense::DenseTerm<'_>) -> f64 {
    let w = DVector::from_fn(term.data.len(), |i, _| 2.0 * term.weights[i] * term.data[i]);
    let g = term.operator.transpose() * w;
    g.as_slice()
        .chunks(BANDS)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

#[test]
fn correction_plans_reach_dense_optimum() {
    for (kind, spectral) in [
        (PlanKind::CorrectionSpatial, false),
        (PlanKind::CorrectionSpectralSpatial, true),
    ] {
        for seed in 0..3u64 {
            let mut rng = rng(500 + seed + 10 * spectral as u64);
            let spatial = random_spatial(&mut rng, 2);
            let model = if spectral {
                DegradationModel::full(random_response(&mut rng, 3, BANDS), spatial.clone())
            } else {
                DegradationModel::spatial(spatial.clone())
            };
            let dy = observe(&mut rng, &model);
            let noise = random_noise(&mut rng, dy.band_count());
            let term = Term::new(&model, BANDS, ROWS, COLS, &dy, &noise.precisions().unwrap());
            let gamma = 0.3 * zero_bound(&term.view());
            let op = spatial.bind(ROWS, COLS).unwrap();
            let init = MultiBandImage::zeros(Geometry::new(COLS, ROWS, BANDS));
            let l = model.spectral.as_ref().map(|l| l.matrix());
            let plan = AdmmPlan::correction(
                kind,
                CorrectionData {
                    dy: &dy,
                    spectral: l,
                    spatial: &op,
                    noise2: &noise,
                    gamma,
                    init: &init,
                },
            )
            .unwrap();
            let out = admm_minimize(&plan, &admm_opts()).unwrap();
            assert!(
                out.converged,
                "{kind:?} seed {seed}: {} sweeps",
                out.iterations
            );
            assert!(out.primal_residual < 1e-6 && out.dual_residual < 1e-6);

            let view = term.view();
            let opt = group_lasso_optimum(&view, BANDS, gamma, 20_000);
            let f_opt = group_lasso_objective(&view, BANDS, gamma, &opt);
            let f = group_lasso_objective(&view, BANDS, gamma, &dense::vectorize(out.x.matrix()));
            assert!(
                (f - f_opt).abs() <= 1e-4 * f_opt,
                "{kind:?} seed {seed}: {f} vs {f_opt}"
            );
            assert!(
                out.x.column_norms().iter().any(|n| *n > 0.0),
                "{kind:?}: trivial solution"
            );
        }
    }
}

#[test]
fn forward_backward_descends_to_dense_optimum() {
    for seed in 0..5u64 {
        let mut rng = rng(700 + seed);
        let response = random_response(&mut rng, 3, BANDS);
        let model = DegradationModel::spectral(response.clone());
        let dy = observe(&mut rng, &model);
        let noise = random_noise(&mut rng, 3);
        let term = Term::new(&model, BANDS, ROWS, COLS, &dy, &noise.precisions().unwrap());
        let gamma = 0.3 * zero_bound(&term.view());
        let init = MultiBandImage::zeros(Geometry::new(COLS, ROWS, BANDS));
        let opts = SolverOptions {
            max_iters: 20_000,
            tol: 1e-12,
            ..SolverOptions::default()
        };
        let out = forward_backward_l21(&dy, Some(&response), &noise, gamma, &opts, &init).unwrap();
        assert!(
            out.trace.windows(2).all(|w| w[1] <= w[0]),
            "seed {seed}: trace increased"
        );

        let view = term.view();
        let opt = group_lasso_optimum(&view, BANDS, gamma, 20_000);
        let f_opt = group_lasso_objective(&view, BANDS, gamma, &opt);
        let f = group_lasso_objective(&view, BANDS, gamma, &dense::vectorize(out.x.matrix()));
        assert!(
            (f - f_opt).abs() <= 1e-4 * f_opt,
            "seed {seed}: {f} vs {f_opt}"
        );
    }
}

#[test]
fn forward_backward_identity_matches_threshold() {
    let mut rng = rng(42);
    let dy = random_image(&mut rng, 4, 4, 3);
    let noise = NoiseModel::isotropic(3, 0.5).unwrap();
    let gamma = 1.5;
    let init = MultiBandImage::zeros(dy.geometry());
    let opts = SolverOptions {
        max_iters: 10_000,
        tol: 1e-14,
        ..SolverOptions::default()
    };
    let out = forward_backward_l21(&dy, None, &noise, gamma, &opts, &init).unwrap();
    let exact = rfcd_core::group_soft_threshold(&dy, gamma * 0.5 / 2.0);
    assert!(rel_err(out.x.matrix(), exact.matrix()) < 1e-6);
}

#[test]
fn plan_kinds_are_checked() {
    let mut rng = rng(1);
    let spatial = random_spatial(&mut rng, 2);
    let op = spatial.bind(ROWS, COLS).unwrap();
    let dy = random_image(&mut rng, 4, 4, BANDS);
    let noise = random_noise(&mut rng, BANDS);
    let init = MultiBandImage::zeros(Geometry::new(COLS, ROWS, BANDS));
    let data = CorrectionData {
        dy: &dy,
        spectral: None,
        spatial: &op,
        noise2: &noise,
        gamma: 1.0,
        init: &init,
    };
    assert!(AdmmPlan::correction(PlanKind::FusionDoubleSplit, data).is_err());
    for kind in [
        PlanKind::CorrectionSpatial,
        PlanKind::FusionDoubleSplit,
        PlanKind::SingleBlock,
    ] {
        assert!(!kind.blocks().is_empty());
    }
}
