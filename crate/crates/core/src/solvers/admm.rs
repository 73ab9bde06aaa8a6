//! Scaled-form ADMM with the block splits used by the fusion and correction
//! steps.
//!
//! Every plan minimizes `f(x) + Σ_j g_j(z_j)` subject to `K_j x = z_j`
//! through the scaled augmented Lagrangian
//! `f(x) + Σ_j g_j(z_j) + (μ/2) Σ_j ‖K_j x − z_j + V_j‖²`.
//! One sweep minimizes over `x`, then over each `z_j`, then sets
//! `V_j ← V_j + K_j x − z_j`.

use nalgebra::DMatrix;
use serde::Serialize;

use super::spectral::{weighted_back, weighted_gram};
use super::{superres_bands, SolverOptions, SpectralSystem, SylvesterSolver};
use crate::error::{Error, Result};
use crate::fft::SpatialOperator;
use crate::image::MultiBandImage;
use crate::model::{map_bands, BoundModel, NoiseModel};
use crate::regularization::{group_soft_threshold, l21_norm};

/// One block of a plan: the split it owns, how it is minimized, and its dual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockDescriptor {
    pub split: &'static str,
    pub solver: &'static str,
    pub dual: &'static str,
}

#[derive(Debug, Clone)]
pub struct AdmmOutput {
    /// Primal variable of interest (the latent image or the change image).
    pub x: MultiBandImage,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Original (unsplit) objective at `x`.
    pub objective: f64,
}

const BALANCE_RATIO: f64 = 10.0;
const BALANCE_STEP: f64 = 2.0;

struct State {
    x: MultiBandImage,
    z: Vec<MultiBandImage>,
    v: Vec<MultiBandImage>,
    mu: f64,
}

trait Problem {
    fn constraint(&self, x: &MultiBandImage, j: usize) -> MultiBandImage;
    fn sweep(&self, st: &mut State) -> Result<()>;
    fn output(&self, st: &State) -> MultiBandImage;
    fn objective(&self, x: &MultiBandImage) -> f64;
    /// Norm used as an absolute floor for the relative residuals.
    fn scale(&self) -> f64;
    fn split_count(&self) -> usize;
}

/// Which augmented Lagrangian a plan implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PlanKind {
    /// Closed form wrapped as a single block; no split.
    SingleBlock,
    /// `U = L1 X`, super-resolution on `U`, spectral least squares on `X`.
    FusionSpectralSplit,
    /// `U = X`, super-resolution on both blocks.
    FusionIdentitySplit,
    /// `U = L1 X`, super-resolution on `U`, Sylvester on `X`.
    FusionSpectralSplitSylvester,
    /// `U = X R1`, Sylvester on `X`, spectral least squares on `U`.
    FusionSpatialSplit,
    /// `U1 = L1 X`, `U2 = X R2`.
    FusionDoubleSplit,
    /// `W = ΔX` with `R2` only.
    CorrectionSpatial,
    /// `W = ΔX` with `L2` and `R2`.
    CorrectionSpectralSpatial,
}

impl PlanKind {
    pub fn blocks(&self) -> &'static [BlockDescriptor] {
        use PlanKind::*;
        match self {
            SingleBlock => &[BlockDescriptor {
                split: "X",
                solver: "closed form",
                dual: "-",
            }],
            FusionSpectralSplit => &[
                BlockDescriptor {
                    split: "X",
                    solver: "spectral least squares",
                    dual: "-",
                },
                BlockDescriptor {
                    split: "U = L1 X",
                    solver: "band super-resolution",
                    dual: "V",
                },
            ],
            FusionIdentitySplit => &[
                BlockDescriptor {
                    split: "X",
                    solver: "band super-resolution (R2)",
                    dual: "-",
                },
                BlockDescriptor {
                    split: "U = X",
                    solver: "band super-resolution (R1)",
                    dual: "V",
                },
            ],
            FusionSpectralSplitSylvester => &[
                BlockDescriptor {
                    split: "X",
                    solver: "sylvester",
                    dual: "-",
                },
                BlockDescriptor {
                    split: "U = L1 X",
                    solver: "band super-resolution",
                    dual: "V",
                },
            ],
            FusionSpatialSplit => &[
                BlockDescriptor {
                    split: "X",
                    solver: "sylvester",
                    dual: "-",
                },
                BlockDescriptor {
                    split: "U = X R1",
                    solver: "spectral least squares",
                    dual: "V",
                },
            ],
            FusionDoubleSplit => &[
                BlockDescriptor {
                    split: "X",
                    solver: "sylvester",
                    dual: "-",
                },
                BlockDescriptor {
                    split: "U1 = L1 X",
                    solver: "band super-resolution",
                    dual: "V1",
                },
                BlockDescriptor {
                    split: "U2 = X R2",
                    solver: "spectral least squares",
                    dual: "V2",
                },
            ],
            CorrectionSpatial => &[
                BlockDescriptor {
                    split: "dX",
                    solver: "band super-resolution",
                    dual: "-",
                },
                BlockDescriptor {
                    split: "W = dX",
                    solver: "group soft threshold",
                    dual: "V",
                },
            ],
            CorrectionSpectralSpatial => &[
                BlockDescriptor {
                    split: "dX",
                    solver: "spectral eigenbasis super-resolution",
                    dual: "-",
                },
                BlockDescriptor {
                    split: "W = dX",
                    solver: "group soft threshold",
                    dual: "V",
                },
            ],
        }
    }
}

/// Inputs of a fusion plan; `init` warm-starts `X`.
pub struct FusionData<'a> {
    pub y1: &'a MultiBandImage,
    pub ytilde2: &'a MultiBandImage,
    pub xbar: &'a MultiBandImage,
    pub init: &'a MultiBandImage,
    pub model1: &'a BoundModel,
    pub model2: &'a BoundModel,
    pub noise1: &'a NoiseModel,
    pub noise2: &'a NoiseModel,
    pub lambda: f64,
}

/// Inputs of a correction plan on the predicted change `dy`.
pub struct CorrectionData<'a> {
    pub dy: &'a MultiBandImage,
    pub spectral: Option<&'a DMatrix<f64>>,
    pub spatial: &'a SpatialOperator,
    pub noise2: &'a NoiseModel,
    pub gamma: f64,
    pub init: &'a MultiBandImage,
}

/// A ready-to-run plan.
pub struct AdmmPlan<'a> {
    kind: PlanKind,
    problem: Box<dyn Problem + 'a>,
    init: MultiBandImage,
    mu_scale: f64,
}

impl<'a> AdmmPlan<'a> {
    pub fn kind(&self) -> PlanKind {
        self.kind
    }

    pub fn blocks(&self) -> &'static [BlockDescriptor] {
        self.kind.blocks()
    }

    /// A closed-form minimizer posing as a one-block plan.
    pub fn single_block(
        solve: impl Fn() -> Result<MultiBandImage> + 'a,
        objective: impl Fn(&MultiBandImage) -> f64 + 'a,
        init: MultiBandImage,
    ) -> Self {
        Self {
            kind: PlanKind::SingleBlock,
            problem: Box::new(SingleBlock {
                solve: Box::new(solve),
                objective: Box::new(objective),
            }),
            init,
            mu_scale: 1.0,
        }
    }

    pub fn fusion(kind: PlanKind, data: FusionData<'a>) -> Result<Self> {
        let fusion = Fusion::new(data)?;
        let init = fusion.data.init.clone();
        let mu_scale = fusion.mu_scale;
        let problem: Box<dyn Problem + 'a> = match kind {
            PlanKind::FusionSpectralSplit => Box::new(SpectralSplit::new(fusion)?),
            PlanKind::FusionIdentitySplit => Box::new(IdentitySplit::new(fusion)?),
            PlanKind::FusionSpectralSplitSylvester => {
                Box::new(SpectralSplitSylvester::new(fusion)?)
            }
            PlanKind::FusionSpatialSplit => Box::new(SpatialSplit::new(fusion)?),
            PlanKind::FusionDoubleSplit => Box::new(DoubleSplit::new(fusion)?),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "{other:?} is not a fusion plan"
                )))
            }
        };
        Ok(Self {
            kind,
            problem,
            init,
            mu_scale,
        })
    }

    pub fn correction(kind: PlanKind, data: CorrectionData<'a>) -> Result<Self> {
        let correction = Correction::new(data)?;
        let init = correction.data.init.clone();
        let mu_scale = correction.mu_scale;
        let problem: Box<dyn Problem + 'a> = match kind {
            PlanKind::CorrectionSpatial => Box::new(CorrectionSpatial::new(correction)?),
            PlanKind::CorrectionSpectralSpatial => {
                Box::new(CorrectionSpectralSpatial::new(correction)?)
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "{other:?} is not a correction plan"
                )))
            }
        };
        Ok(Self {
            kind,
            problem,
            init,
            mu_scale,
        })
    }

    /// Objective of the unsplit problem at `x`.
    pub fn objective(&self, x: &MultiBandImage) -> f64 {
        self.problem.objective(x)
    }
}

fn norm_of(images: &[MultiBandImage]) -> f64 {
    images.iter().map(|i| i.squared_norm()).sum::<f64>().sqrt()
}

/// Runs the plan from its warm start until both relative residuals drop
/// below `opts.tol` or `opts.max_iters` sweeps have been made.
///
/// The penalty used is `opts.mu` times the plan's precision scale, so the
/// default `mu = 1` is balanced against the data-fit weights.
pub fn admm_minimize(plan: &AdmmPlan<'_>, opts: &SolverOptions) -> Result<AdmmOutput> {
    opts.validate()?;
    let problem = plan.problem.as_ref();
    let splits = problem.split_count();
    let x = plan.init.clone();
    let z: Vec<_> = (0..splits).map(|j| problem.constraint(&x, j)).collect();
    let v = z
        .iter()
        .map(|zj| MultiBandImage::zeros(zj.geometry()))
        .collect();
    let mut st = State {
        x,
        z,
        v,
        mu: opts.mu * plan.mu_scale,
    };
    let floor = problem.scale().max(f64::MIN_POSITIVE);

    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iters {
        iterations += 1;
        let z_old = st.z.clone();
        problem.sweep(&mut st)?;
        let kx: Vec<_> = (0..splits).map(|j| problem.constraint(&st.x, j)).collect();
        let mut r2 = 0.0;
        let mut dz2 = 0.0;
        for j in 0..splits {
            let r = &kx[j] - &st.z[j];
            r2 += r.squared_norm();
            dz2 += (&st.z[j] - &z_old[j]).squared_norm();
            st.v[j] = &st.v[j] + &r;
        }
        let denom = norm_of(&kx).max(norm_of(&st.z)).max(floor);
        primal = r2.sqrt() / denom;
        dual = dz2.sqrt() / norm_of(&st.z).max(floor);
        if primal < opts.tol && dual < opts.tol {
            converged = true;
            break;
        }
        // Residual balancing; the scaled duals follow the penalty.
        let factor = if primal > BALANCE_RATIO * dual {
            BALANCE_STEP
        } else if dual > BALANCE_RATIO * primal {
            1.0 / BALANCE_STEP
        } else {
            1.0
        };
        if factor != 1.0 {
            st.mu *= factor;
            for vj in st.v.iter_mut() {
                *vj = vj.scaled(1.0 / factor);
            }
        }
    }
    let x = problem.output(&st);
    let objective = problem.objective(&x);
    Ok(AdmmOutput {
        x,
        iterations,
        converged,
        primal_residual: primal,
        dual_residual: dual,
        objective,
    })
}

struct SingleBlock<'a> {
    solve: Box<dyn Fn() -> Result<MultiBandImage> + 'a>,
    objective: Box<dyn Fn(&MultiBandImage) -> f64 + 'a>,
}

impl Problem for SingleBlock<'_> {
    fn constraint(&self, _: &MultiBandImage, _: usize) -> MultiBandImage {
        unreachable!("single-block plans have no split")
    }
    fn sweep(&self, st: &mut State) -> Result<()> {
        st.x = (self.solve)()?;
        Ok(())
    }
    fn output(&self, st: &State) -> MultiBandImage {
        st.x.clone()
    }
    fn objective(&self, x: &MultiBandImage) -> f64 {
        (self.objective)(x)
    }
    fn scale(&self) -> f64 {
        1.0
    }
    fn split_count(&self) -> usize {
        0
    }
}

fn spatial_fwd(op: &SpatialOperator, z: &MultiBandImage) -> MultiBandImage {
    let (h, w) = op.coarse_shape();
    map_bands(z, w, h, |b| op.forward(b))
}

fn spatial_adj(op: &SpatialOperator, z: &MultiBandImage) -> MultiBandImage {
    let (h, w) = op.fine_shape();
    map_bands(z, w, h, |b| op.adjoint(b))
}

fn spectral_fwd(l: &DMatrix<f64>, z: &MultiBandImage) -> MultiBandImage {
    z.same_grid(l * z.matrix())
}

fn weighted_sq(p: &[f64], r: &MultiBandImage) -> f64 {
    r.matrix()
        .row_iter()
        .enumerate()
        .map(|(b, row)| p[b] * row.norm_squared())
        .sum()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Validated fusion inputs shared by every fusion plan.
struct Fusion<'a> {
    data: FusionData<'a>,
    p1: Vec<f64>,
    p2: Vec<f64>,
    mu_scale: f64,
}

impl<'a> Fusion<'a> {
    fn new(data: FusionData<'a>) -> Result<Self> {
        super::check_lambda(data.lambda)?;
        let latent = data.xbar.geometry();
        if data.model1.latent() != latent || data.model2.latent() != latent {
            return Err(Error::ShapeMismatch(
                "fusion: models bound to another grid".into(),
            ));
        }
        data.xbar
            .ensure_same_shape(data.init, "fusion warm start")?;
        if data.model1.observed() != data.y1.geometry() {
            return Err(Error::ShapeMismatch(format!(
                "fusion: Y1 is {:?}, model predicts {:?}",
                data.y1.geometry(),
                data.model1.observed()
            )));
        }
        if data.model2.observed() != data.ytilde2.geometry() {
            return Err(Error::ShapeMismatch(format!(
                "fusion: Y2 is {:?}, model predicts {:?}",
                data.ytilde2.geometry(),
                data.model2.observed()
            )));
        }
        data.noise1.check_bands(data.y1.band_count())?;
        data.noise2.check_bands(data.ytilde2.band_count())?;
        let p1 = data.noise1.precisions()?;
        let p2 = data.noise2.precisions()?;
        let mu_scale = 0.5 * (mean(&p1) + mean(&p2));
        Ok(Self {
            data,
            p1,
            p2,
            mu_scale,
        })
    }

    fn objective(&self, x: &MultiBandImage) -> f64 {
        let d = &self.data;
        let r1 = d.y1 - &d.model1.forward(x);
        let r2 = d.ytilde2 - &d.model2.forward(x);
        0.5 * weighted_sq(&self.p1, &r1)
            + 0.5 * weighted_sq(&self.p2, &r2)
            + d.lambda * (x - d.xbar).squared_norm()
    }

    fn scale(&self) -> f64 {
        self.data
            .y1
            .frobenius_norm()
            .max(self.data.ytilde2.frobenius_norm())
    }

    fn bands(&self) -> usize {
        self.data.xbar.band_count()
    }

    fn l1(&self) -> Result<&'a DMatrix<f64>> {
        self.data.model1.spectral_matrix().ok_or_else(|| {
            Error::InvalidParameter("plan needs a spectral response on side 1".into())
        })
    }

    fn l2(&self) -> Result<&'a DMatrix<f64>> {
        self.data.model2.spectral_matrix().ok_or_else(|| {
            Error::InvalidParameter("plan needs a spectral response on side 2".into())
        })
    }

    fn r1(&self) -> Result<&'a SpatialOperator> {
        self.data.model1.spatial().ok_or_else(|| {
            Error::InvalidParameter("plan needs a spatial degradation on side 1".into())
        })
    }

    fn r2(&self) -> Result<&'a SpatialOperator> {
        self.data.model2.spatial().ok_or_else(|| {
            Error::InvalidParameter("plan needs a spatial degradation on side 2".into())
        })
    }

    fn expect_no_spectral2(&self) -> Result<()> {
        if self.data.model2.spectral_matrix().is_some() {
            return Err(Error::InvalidParameter(
                "plan expects no spectral response on side 2".into(),
            ));
        }
        Ok(())
    }

    fn expect_no_spatial2(&self) -> Result<()> {
        if self.data.model2.spatial().is_some() {
            return Err(Error::InvalidParameter(
                "plan expects no spatial degradation on side 2".into(),
            ));
        }
        Ok(())
    }

    fn two_lambda_xbar(&self) -> DMatrix<f64> {
        self.data.xbar.matrix() * (2.0 * self.data.lambda)
    }
}

/// `U = L1 X` with `R2 = I`, `L2 = I`.
struct SpectralSplit<'a> {
    f: Fusion<'a>,
    l1: &'a DMatrix<f64>,
    r1: &'a SpatialOperator,
}

impl<'a> SpectralSplit<'a> {
    fn new(f: Fusion<'a>) -> Result<Self> {
        f.expect_no_spectral2()?;
        f.expect_no_spatial2()?;
        Ok(Self {
            l1: f.l1()?,
            r1: f.r1()?,
            f,
        })
    }
}

impl Problem for SpectralSplit<'_> {
    fn constraint(&self, x: &MultiBandImage, _: usize) -> MultiBandImage {
        spectral_fwd(self.l1, x)
    }

    fn sweep(&self, st: &mut State) -> Result<()> {
        let n = self.f.bands();
        let d = &self.f.data;
        let mut normal = weighted_gram(None, &self.f.p2, n) + self.l1.transpose() * self.l1 * st.mu;
        for i in 0..n {
            normal[(i, i)] += 2.0 * d.lambda;
        }
        let rhs = weighted_back(None, &self.f.p2, d.ytilde2.matrix())
            + self.f.two_lambda_xbar()
            + self.l1.transpose() * (st.z[0].matrix() - st.v[0].matrix()) * st.mu;
        st.x = st.x.same_grid(SpectralSystem::new(normal)?.solve(&rhs));
        let target = &spectral_fwd(self.l1, &st.x) + &st.v[0];
        st.z[0] = superres_bands(
            self.r1,
            d.y1,
            &target,
            &self.f.p1,
            &vec![st.mu; target.band_count()],
        )?;
        Ok(())
    }

    fn output(&self, st: &State) -> MultiBandImage {
        st.x.clone()
    }
    fn objective(&self, x: &MultiBandImage) -> f64 {
        self.f.objective(x)
    }
    fn scale(&self) -> f64 {
        self.f.scale()
    }
    fn split_count(&self) -> usize {
        1
    }
}

/// `U = X` with spatial-only degradations on both sides.
struct IdentitySplit<'a> {
    f: Fusion<'a>,
    r1: &'a SpatialOperator,
    r2: &'a SpatialOperator,
}

impl<'a> IdentitySplit<'a> {
    fn new(f: Fusion<'a>) -> Result<Self> {
        if f.data.model1.spectral_matrix().is_some() {
            return Err(Error::InvalidParameter(
                "plan expects no spectral response on side 1".into(),
            ));
        }
        f.expect_no_spectral2()?;
        Ok(Self {
            r1: f.r1()?,
            r2: f.r2()?,
            f,
        })
    }
}

impl Problem for IdentitySplit<'_> {
    fn constraint(&self, x: &MultiBandImage, _: usize) -> MultiBandImage {
        x.clone()
    }

    fn sweep(&self, st: &mut State) -> Result<()> {
        let d = &self.f.data;
        let shift = 2.0 * d.lambda + st.mu;
        let z = st.x.same_grid(
            (self.f.two_lambda_xbar() + (st.z[0].matrix() - st.v[0].matrix()) * st.mu) / shift,
        );
        st.x = superres_bands(
            self.r2,
            d.ytilde2,
            &z,
            &self.f.p2,
            &vec![shift; z.band_count()],
        )?;
        let target = &st.x + &st.v[0];
        st.z[0] = superres_bands(
            self.r1,
            d.y1,
            &target,
            &self.f.p1,
            &vec![st.mu; target.band_count()],
        )?;
        Ok(())
    }

    fn output(&self, st: &State) -> MultiBandImage {
        st.x.clone()
    }
    fn objective(&self, x: &MultiBandImage) -> f64 {
        self.f.objective(x)
    }
    fn scale(&self) -> f64 {
        self.f.scale()
    }
    fn split_count(&self) -> usize {
        1
    }
}

/// `U = L1 X` with a spatial-only side 2.
struct SpectralSplitSylvester<'a> {
    f: Fusion<'a>,
    l1: &'a DMatrix<f64>,
    r1: &'a SpatialOperator,
    r2: &'a SpatialOperator,
}

impl<'a> SpectralSplitSylvester<'a> {
    fn new(f: Fusion<'a>) -> Result<Self> {
        f.expect_no_spectral2()?;
        Ok(Self {
            l1: f.l1()?,
            r1: f.r1()?,
            r2: f.r2()?,
            f,
        })
    }
}

impl Problem for SpectralSplitSylvester<'_> {
    fn constraint(&self, x: &MultiBandImage, _: usize) -> MultiBandImage {
        spectral_fwd(self.l1, x)
    }

    fn sweep(&self, st: &mut State) -> Result<()> {
        let n = self.f.bands();
        let d = &self.f.data;
        let mut a = self.l1.transpose() * self.l1 * st.mu;
        for i in 0..n {
            a[(i, i)] += 2.0 * d.lambda;
        }
        let back2 = spatial_adj(self.r2, d.ytilde2);
        let c = weighted_back(None, &self.f.p2, back2.matrix())
            + self.f.two_lambda_xbar()
            + self.l1.transpose() * (st.z[0].matrix() - st.v[0].matrix()) * st.mu;
        st.x = SylvesterSolver::new(&a, &self.f.p2)?.solve(self.r2, &st.x.same_grid(c))?;
        let target = &spectral_fwd(self.l1, &st.x) + &st.v[0];
        st.z[0] = superres_bands(
            self.r1,
            d.y1,
            &target,
            &self.f.p1,
            &vec![st.mu; target.band_count()],
        )?;
        Ok(())
    }

    fn output(&self, st: &State) -> MultiBandImage {
        st.x.clone()
    }
    fn objective(&self, x: &MultiBandImage) -> f64 {
        self.f.objective(x)
    }
    fn scale(&self) -> f64 {
        self.f.scale()
    }
    fn split_count(&self) -> usize {
        1
    }
}

/// `U = X R1` with a spectral-only side 2.
struct SpatialSplit<'a> {
    f: Fusion<'a>,
    l1: &'a DMatrix<f64>,
    l2: &'a DMatrix<f64>,
    r1: &'a SpatialOperator,
}

impl<'a> SpatialSplit<'a> {
    fn new(f: Fusion<'a>) -> Result<Self> {
        f.expect_no_spatial2()?;
        Ok(Self {
            l1: f.l1()?,
            l2: f.l2()?,
            r1: f.r1()?,
            f,
        })
    }
}

impl Problem for SpatialSplit<'_> {
    fn constraint(&self, x: &MultiBandImage, _: usize) -> MultiBandImage {
        spatial_fwd(self.r1, x)
    }

    fn sweep(&self, st: &mut State) -> Result<()> {
        let n = self.f.bands();
        let d = &self.f.data;
        let mut a = weighted_gram(Some(self.l2), &self.f.p2, n);
        for i in 0..n {
            a[(i, i)] += 2.0 * d.lambda;
        }
        let back = spatial_adj(self.r1, &(&st.z[0] - &st.v[0]));
        let c = weighted_back(Some(self.l2), &self.f.p2, d.ytilde2.matrix())
            + self.f.two_lambda_xbar()
            + back.matrix() * st.mu;
        let omega = vec![st.mu; n];
        st.x = SylvesterSolver::new(&a, &omega)?.solve(self.r1, &st.x.same_grid(c))?;

        let mut normal = weighted_gram(Some(self.l1), &self.f.p1, n);
        for i in 0..n {
            normal[(i, i)] += st.mu;
        }
        let target = &spatial_fwd(self.r1, &st.x) + &st.v[0];
        let rhs = weighted_back(Some(self.l1), &self.f.p1, d.y1.matrix()) + target.matrix() * st.mu;
        st.z[0] = target.same_grid(SpectralSystem::new(normal)?.solve(&rhs));
        Ok(())
    }

    fn output(&self, st: &State) -> MultiBandImage {
        st.x.clone()
    }
    fn objective(&self, x: &MultiBandImage) -> f64 {
        self.f.objective(x)
    }
    fn scale(&self) -> f64 {
        self.f.scale()
    }
    fn split_count(&self) -> usize {
        1
    }
}

/// `U1 = L1 X`, `U2 = X R2` with both sides fully degraded.
struct DoubleSplit<'a> {
    f: Fusion<'a>,
    l1: &'a DMatrix<f64>,
    l2: &'a DMatrix<f64>,
    r1: &'a SpatialOperator,
    r2: &'a SpatialOperator,
}

impl<'a> DoubleSplit<'a> {
    fn new(f: Fusion<'a>) -> Result<Self> {
        Ok(Self {
            l1: f.l1()?,
            l2: f.l2()?,
            r1: f.r1()?,
            r2: f.r2()?,
            f,
        })
    }
}

impl Problem for DoubleSplit<'_> {
    fn constraint(&self, x: &MultiBandImage, j: usize) -> MultiBandImage {
        match j {
            0 => spectral_fwd(self.l1, x),
            _ => spatial_fwd(self.r2, x),
        }
    }

    fn sweep(&self, st: &mut State) -> Result<()> {
        let n = self.f.bands();
        let d = &self.f.data;
        let mut a = self.l1.transpose() * self.l1 * st.mu;
        for i in 0..n {
            a[(i, i)] += 2.0 * d.lambda;
        }
        let back = spatial_adj(self.r2, &(&st.z[1] - &st.v[1]));
        let c = self.f.two_lambda_xbar()
            + self.l1.transpose() * (st.z[0].matrix() - st.v[0].matrix()) * st.mu
            + back.matrix() * st.mu;
        let omega = vec![st.mu; n];
        st.x = SylvesterSolver::new(&a, &omega)?.solve(self.r2, &st.x.same_grid(c))?;

        let target1 = &spectral_fwd(self.l1, &st.x) + &st.v[0];
        st.z[0] = superres_bands(
            self.r1,
            d.y1,
            &target1,
            &self.f.p1,
            &vec![st.mu; target1.band_count()],
        )?;

        let mut normal = weighted_gram(Some(self.l2), &self.f.p2, n);
        for i in 0..n {
            normal[(i, i)] += st.mu;
        }
        let target2 = &spatial_fwd(self.r2, &st.x) + &st.v[1];
        let rhs =
            weighted_back(Some(self.l2), &self.f.p2, d.ytilde2.matrix()) + target2.matrix() * st.mu;
        st.z[1] = target2.same_grid(SpectralSystem::new(normal)?.solve(&rhs));
        Ok(())
    }

    fn output(&self, st: &State) -> MultiBandImage {
        st.x.clone()
    }
    fn objective(&self, x: &MultiBandImage) -> f64 {
        self.f.objective(x)
    }
    fn scale(&self) -> f64 {
        self.f.scale()
    }
    fn split_count(&self) -> usize {
        2
    }
}

/// Validated inputs shared by the correction plans.
struct Correction<'a> {
    data: CorrectionData<'a>,
    p: Vec<f64>,
    mu_scale: f64,
}

impl<'a> Correction<'a> {
    fn new(data: CorrectionData<'a>) -> Result<Self> {
        if !(data.gamma >= 0.0) || !data.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be >= 0, got {}",
                data.gamma
            )));
        }
        let (rows, cols) = data.spatial.fine_shape();
        if data.init.height() != rows || data.init.width() != cols {
            return Err(Error::ShapeMismatch(
                "correction: warm start on another grid".into(),
            ));
        }
        let (hc, wc) = data.spatial.coarse_shape();
        if data.dy.height() != hc || data.dy.width() != wc {
            return Err(Error::ShapeMismatch(format!(
                "correction: predicted change is {}x{}, operator gives {}x{}",
                data.dy.height(),
                data.dy.width(),
                hc,
                wc
            )));
        }
        let m = data.spectral.map_or(data.init.band_count(), |l| l.nrows());
        if let Some(l) = data.spectral {
            if l.ncols() != data.init.band_count() {
                return Err(Error::BandMismatch {
                    expected: l.ncols(),
                    found: data.init.band_count(),
                });
            }
        }
        if data.dy.band_count() != m {
            return Err(Error::BandMismatch {
                expected: m,
                found: data.dy.band_count(),
            });
        }
        data.noise2.check_bands(m)?;
        let p = data.noise2.precisions()?;
        let mu_scale = 2.0 * mean(&p);
        Ok(Self { data, p, mu_scale })
    }

    /// `‖Λ^{-1/2}(ΔY − L ΔX R)‖² + γ‖ΔX‖_{2,1}`.
    fn objective(&self, dx: &MultiBandImage) -> f64 {
        let spectral = match self.data.spectral {
            Some(l) => spectral_fwd(l, dx),
            None => dx.clone(),
        };
        let r = self.data.dy - &spatial_fwd(self.data.spatial, &spectral);
        weighted_sq(&self.p, &r) + self.data.gamma * l21_norm(dx)
    }

    fn scale(&self) -> f64 {
        self.data.dy.frobenius_norm()
    }
}

/// `W = ΔX` with a spatial-only operator.
struct CorrectionSpatial<'a> {
    c: Correction<'a>,
    weights: Vec<f64>,
}

impl<'a> CorrectionSpatial<'a> {
    fn new(c: Correction<'a>) -> Result<Self> {
        if c.data.spectral.is_some() {
            return Err(Error::InvalidParameter(
                "spatial correction plan expects no spectral response".into(),
            ));
        }
        let weights = c.p.iter().map(|p| 2.0 * p).collect();
        Ok(Self { c, weights })
    }
}

impl Problem for CorrectionSpatial<'_> {
    fn constraint(&self, x: &MultiBandImage, _: usize) -> MultiBandImage {
        x.clone()
    }

    fn sweep(&self, st: &mut State) -> Result<()> {
        let z = &st.z[0] - &st.v[0];
        let mus = vec![st.mu; z.band_count()];
        st.x = superres_bands(self.c.data.spatial, self.c.data.dy, &z, &self.weights, &mus)?;
        st.z[0] = group_soft_threshold(&(&st.x + &st.v[0]), self.c.data.gamma / st.mu);
        Ok(())
    }

    fn output(&self, st: &State) -> MultiBandImage {
        st.z[0].clone()
    }
    fn objective(&self, x: &MultiBandImage) -> f64 {
        self.c.objective(x)
    }
    fn scale(&self) -> f64 {
        self.c.scale()
    }
    fn split_count(&self) -> usize {
        1
    }
}

/// `W = ΔX` with a spectral response and a spatial operator.
///
/// The `ΔX`-update `G ΔX R Rᵀ + μ ΔX = C` with `G = 2 Lᵀ Λ⁻¹ L` decouples
/// in the eigenbasis of `G` into one shifted spatial solve per eigenvalue.
struct CorrectionSpectralSpatial<'a> {
    c: Correction<'a>,
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    back: DMatrix<f64>,
}

impl<'a> CorrectionSpectralSpatial<'a> {
    fn new(c: Correction<'a>) -> Result<Self> {
        let l = c.data.spectral.ok_or_else(|| {
            Error::InvalidParameter("spectral-spatial correction plan needs a response".into())
        })?;
        let g = weighted_gram(Some(l), &c.p, l.ncols()) * 2.0;
        let eig = g.symmetric_eigen();
        let eigenvalues = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let weighted = weighted_back(Some(l), &c.p, c.data.dy.matrix()) * 2.0;
        let back = spatial_adj(c.data.spatial, &c.data.dy.same_grid(weighted)).into_matrix();
        Ok(Self {
            basis: eig.eigenvectors,
            eigenvalues,
            back,
            c,
        })
    }
}

impl Problem for CorrectionSpectralSpatial<'_> {
    fn constraint(&self, x: &MultiBandImage, _: usize) -> MultiBandImage {
        x.clone()
    }

    fn sweep(&self, st: &mut State) -> Result<()> {
        let op = self.c.data.spatial;
        let c = &self.back + (st.z[0].matrix() - st.v[0].matrix()) * st.mu;
        let rotated = self.basis.transpose() * c;
        let mut solved = DMatrix::zeros(rotated.nrows(), rotated.ncols());
        for (i, &d) in self.eigenvalues.iter().enumerate() {
            let row: Vec<f64> = rotated.row(i).iter().copied().collect();
            let x = op.solve_shifted(&row, st.mu, d)?;
            solved.row_mut(i).copy_from_slice(&x);
        }
        st.x = st.x.same_grid(&self.basis * solved);
        st.z[0] = group_soft_threshold(&(&st.x + &st.v[0]), self.c.data.gamma / st.mu);
        Ok(())
    }

    fn output(&self, st: &State) -> MultiBandImage {
        st.z[0].clone()
    }
    fn objective(&self, x: &MultiBandImage) -> f64 {
        self.c.objective(x)
    }
    fn scale(&self) -> f64 {
        self.c.scale()
    }
    fn split_count(&self) -> usize {
        1
    }
}
