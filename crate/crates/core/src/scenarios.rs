//! Scenario taxonomy, per-scenario fusion and correction steps, and the
//! alternating minimization driver.
//!
//! A scenario is fixed by which of the four degradations `(L1, R1, L2, R2)`
//! are present once both observations are expressed on a common latent grid.
//! When only the side labelled 2 by the caller carries a degradation pattern
//! that the taxonomy assigns to side 1, the roles are swapped internally and
//! the results are mapped back to the caller's labelling.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Geometry, MultiBandImage};
use crate::model::{
    default_blur_for, BlurKernel, BoundModel, Decimation, DegradationModel, NoiseModel,
    SpatialDegradation, SpectralResponse,
};
use crate::regularization::{crude_estimate, group_soft_threshold, l21_norm, RegularizationParams};
use crate::solvers::{
    admm_minimize, forward_backward_l21, solve_ridge_denoise, solve_spectral_deblur,
    superres_bands, sylvester_fusion_bound, AdmmPlan, CorrectionData, FusionData, PlanKind,
    SolverOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
    S8,
    S9,
    S10,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 10] = [
        ScenarioId::S1,
        ScenarioId::S2,
        ScenarioId::S3,
        ScenarioId::S4,
        ScenarioId::S5,
        ScenarioId::S6,
        ScenarioId::S7,
        ScenarioId::S8,
        ScenarioId::S9,
        ScenarioId::S10,
    ];

    /// Presence of `(L1, R1, L2, R2)` in the canonical orientation.
    pub fn pattern(&self) -> [bool; 4] {
        use ScenarioId::*;
        match self {
            S1 => [false, false, false, false],
            S2 => [true, false, false, false],
            S3 => [false, true, false, false],
            S4 => [false, true, true, false],
            S5 => [true, true, false, false],
            S6 => [false, true, false, true],
            S7 => [true, true, false, true],
            S8 => [true, false, true, false],
            S9 => [true, true, true, false],
            S10 => [true, true, true, true],
        }
    }

    /// Scenarios whose correction step is a plain group threshold.
    pub fn has_identity_correction(&self) -> bool {
        matches!(
            self,
            ScenarioId::S1 | ScenarioId::S2 | ScenarioId::S3 | ScenarioId::S5
        )
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// How one sensor samples the scene.
///
/// `pitch` is the ground sampling distance in integer units (e.g. metres).
/// Each entry of `band_groups` lists the source bands averaged into one
/// observed band, so `[[0], [1], [2]]` is a sensor observing three source
/// bands at full spectral resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub pitch: u32,
    pub band_groups: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blur_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_side: Option<usize>,
}

impl SensorSpec {
    pub fn new(pitch: u32, band_groups: Vec<Vec<usize>>) -> Self {
        Self {
            pitch,
            band_groups,
            blur_sigma: None,
            kernel_side: None,
        }
    }

    /// Sensor observing source bands `0..bands` one by one.
    pub fn full_bands(pitch: u32, bands: usize) -> Self {
        Self::new(pitch, (0..bands).map(|b| vec![b]).collect())
    }

    pub fn with_blur(mut self, sigma: f64, side: usize) -> Self {
        self.blur_sigma = Some(sigma);
        self.kernel_side = Some(side);
        self
    }

    pub fn observed_bands(&self) -> usize {
        self.band_groups.len()
    }

    fn validate(&self, which: &str) -> Result<()> {
        if self.pitch == 0 {
            return Err(Error::Scenario(format!(
                "{which}: pixel pitch must be positive"
            )));
        }
        if self.band_groups.is_empty() || self.band_groups.iter().any(|g| g.is_empty()) {
            return Err(Error::Scenario(format!(
                "{which}: band groups must be non-empty"
            )));
        }
        Ok(())
    }

    fn blur_for(&self, decimation: Decimation) -> Result<BlurKernel> {
        match (self.blur_sigma, self.kernel_side) {
            (None, None) => Ok(default_blur_for(decimation)),
            (sigma, side) => {
                let d = decimation.row_factor().max(decimation.col_factor()) as f64;
                let sigma = sigma.unwrap_or(0.5 * d);
                let side = side.unwrap_or(2 * (2.0 * sigma).ceil() as usize + 1);
                BlurKernel::gaussian(sigma, side)
            }
        }
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Sorted union of the source bands seen by either sensor.
pub fn latent_bands(s1: &SensorSpec, s2: &SensorSpec) -> Vec<usize> {
    let mut bands: Vec<usize> = s1
        .band_groups
        .iter()
        .chain(&s2.band_groups)
        .flatten()
        .copied()
        .collect();
    bands.sort_unstable();
    bands.dedup();
    bands
}

fn is_identity_groups(groups: &[Vec<usize>], latent: &[usize]) -> bool {
    groups.len() == latent.len()
        && groups
            .iter()
            .zip(latent)
            .all(|(g, b)| g.len() == 1 && g[0] == *b)
}

fn reindex(groups: &[Vec<usize>], latent: &[usize]) -> Vec<Vec<usize>> {
    groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|b| latent.binary_search(b).expect("band in union"))
                .collect()
        })
        .collect()
}

/// Scenario id for two sensors, and whether the caller's labels are swapped
/// relative to the canonical orientation.
pub fn scenario_id(s1: &SensorSpec, s2: &SensorSpec) -> Result<(ScenarioId, bool)> {
    s1.validate("sensor 1")?;
    s2.validate("sensor 2")?;
    let latent = latent_bands(s1, s2);
    let g = gcd(s1.pitch, s2.pitch);
    let (d1, d2) = (s1.pitch / g, s2.pitch / g);
    let l1 = !is_identity_groups(&s1.band_groups, &latent);
    let l2 = !is_identity_groups(&s2.band_groups, &latent);
    let (r1, r2) = (d1 > 1, d2 > 1);
    Ok(id_for_pattern(
        [l1, r1, l2, r2],
        (d1 as usize, d2 as usize),
        (s1.observed_bands(), s2.observed_bands()),
    ))
}

fn id_for_pattern(
    pattern: [bool; 4],
    (d1, d2): (usize, usize),
    (m1, m2): (usize, usize),
) -> (ScenarioId, bool) {
    use ScenarioId::*;
    match pattern {
        [false, false, false, false] => (S1, false),
        [true, false, false, false] => (S2, false),
        [false, false, true, false] => (S2, true),
        [false, true, false, false] => (S3, false),
        [false, false, false, true] => (S3, true),
        [false, true, true, false] => (S4, false),
        [true, false, false, true] => (S4, true),
        [true, true, false, false] => (S5, false),
        [false, false, true, true] => (S5, true),
        [false, true, false, true] => (S6, d2 > d1),
        [true, true, false, true] => (S7, false),
        [false, true, true, true] => (S7, true),
        [true, false, true, false] => (S8, m1 > m2),
        [true, true, true, false] => (S9, false),
        [true, false, true, true] => (S9, true),
        [true, true, true, true] => (S10, d2 > d1 || (d1 == d2 && m1 > m2)),
    }
}

/// A classified pair of sensors with degradation models on the latent grid.
///
/// `model1`/`model2` and `dims1`/`dims2` are in canonical orientation; when
/// `swapped` is set, canonical side 1 is the caller's second observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPlan {
    pub id: ScenarioId,
    pub model1: DegradationModel,
    pub model2: DegradationModel,
    pub latent: Geometry,
    pub latent_pitch: u32,
    /// Source band indices of the latent bands.
    pub latent_bands: Vec<usize>,
    pub virtual_factors: Option<(usize, usize)>,
    pub swapped: bool,
}

impl ScenarioPlan {
    pub fn bind(&self) -> Result<BoundPlan<'_>> {
        Ok(BoundPlan {
            plan: self,
            b1: self.model1.bind(self.latent)?,
            b2: self.model2.bind(self.latent)?,
        })
    }

    /// `(caller side 1, caller side 2)` in canonical order.
    pub fn canonical<'a, T>(&self, first: &'a T, second: &'a T) -> (&'a T, &'a T) {
        if self.swapped {
            (second, first)
        } else {
            (first, second)
        }
    }
}

impl ScenarioPlan {
    /// Plan for two degradation models already expressed on a common latent
    /// grid, in the caller's labelling. Identity spectral responses count as
    /// absent. The latent pitch is reported as 1.
    pub fn from_models(
        model1: DegradationModel,
        model2: DegradationModel,
        latent: Geometry,
    ) -> Result<Self> {
        let present = |m: &DegradationModel| {
            (
                m.spectral.as_ref().is_some_and(|l| !l.is_identity()),
                m.has_spatial(),
            )
        };
        let ((l1, r1), (l2, r2)) = (present(&model1), present(&model2));
        let factor = |m: &DegradationModel| {
            m.decimation()
                .map_or(1, |d| d.row_factor().max(d.col_factor()))
        };
        let bands =
            |m: &DegradationModel| m.spectral.as_ref().map_or(latent.bands, |l| l.out_bands());
        let (id, swapped) = id_for_pattern(
            [l1, r1, l2, r2],
            (factor(&model1), factor(&model2)),
            (bands(&model1), bands(&model2)),
        );
        let (model1, model2) = if swapped {
            (model2, model1)
        } else {
            (model1, model2)
        };
        model1.bind(latent)?;
        model2.bind(latent)?;
        let virtual_factors = (model1.has_spatial() && model2.has_spatial())
            .then(|| (factor(&model1), factor(&model2)));
        Ok(ScenarioPlan {
            id,
            model1,
            model2,
            latent,
            latent_pitch: 1,
            latent_bands: (0..latent.bands).collect(),
            virtual_factors,
            swapped,
        })
    }
}

/// Classifies two sensors whose observations are `dims = (width, height)`.
pub fn classify_scenario(
    s1: &SensorSpec,
    dims1: (usize, usize),
    s2: &SensorSpec,
    dims2: (usize, usize),
) -> Result<ScenarioPlan> {
    let (id, swapped) = scenario_id(s1, s2)?;
    let (c1, c2, cd1, cd2) = if swapped {
        (s2, s1, dims2, dims1)
    } else {
        (s1, s2, dims1, dims2)
    };
    let latent_bands = latent_bands(c1, c2);
    let g = gcd(c1.pitch, c2.pitch);
    let (d1, d2) = ((c1.pitch / g) as usize, (c2.pitch / g) as usize);
    let (w1, h1) = (cd1.0 * d1, cd1.1 * d1);
    let (w2, h2) = (cd2.0 * d2, cd2.1 * d2);
    if (w1, h1) != (w2, h2) {
        return Err(Error::Scenario(format!(
            "observations do not cover the same latent grid: {w1}x{h1} vs {w2}x{h2} at pitch {g}"
        )));
    }
    if w1 == 0 || h1 == 0 {
        return Err(Error::Scenario("observations must be non-empty".into()));
    }
    let latent = Geometry::new(w1, h1, latent_bands.len());
    let build =
        |s: &SensorSpec, d: usize, spectral: bool, spatial: bool| -> Result<DegradationModel> {
            let spectral = if spectral {
                Some(SpectralResponse::band_average(
                    &reindex(&s.band_groups, &latent_bands),
                    latent.bands,
                )?)
            } else {
                None
            };
            let spatial = if spatial {
                let dec = Decimation::uniform(d)?;
                Some(SpatialDegradation::new(s.blur_for(dec)?, dec))
            } else {
                None
            };
            Ok(DegradationModel { spectral, spatial })
        };
    let [l1, r1, l2, r2] = id.pattern();
    let model1 = build(c1, d1, l1, r1)?;
    let model2 = build(c2, d2, l2, r2)?;
    // Binding validates kernel sizes against the latent grid.
    model1.bind(latent)?;
    model2.bind(latent)?;
    Ok(ScenarioPlan {
        id,
        model1,
        model2,
        latent,
        latent_pitch: g,
        latent_bands,
        virtual_factors: (r1 && r2).then_some((d1, d2)),
        swapped,
    })
}

/// `Ỹ2 = Y2 − L2 ΔX R2`.
pub fn corrected_image(
    y2: &MultiBandImage,
    model2: &DegradationModel,
    dx: &MultiBandImage,
) -> Result<MultiBandImage> {
    y2.checked_sub(&model2.bind(dx.geometry())?.forward(dx))
}

/// `ΔY̌2 = Y2 − L2 X1 R2`.
pub fn predicted_change(
    y2: &MultiBandImage,
    model2: &DegradationModel,
    x1: &MultiBandImage,
) -> Result<MultiBandImage> {
    y2.checked_sub(&model2.bind(x1.geometry())?.forward(x1))
}

/// Which split the spatial-only correction plan uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionSplit {
    /// `W = ΔX R2`, consistent with the data-fit term.
    #[default]
    R2,
    /// `W = ΔX R1`; only valid when both sensors decimate to the same grid.
    LiteralR1,
}

/// Outer-loop controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmOptions {
    pub max_outer: usize,
    pub tol: f64,
    pub solver: SolverOptions,
    pub correction_split: CorrectionSplit,
}

impl Default for AmOptions {
    fn default() -> Self {
        Self {
            max_outer: 50,
            tol: 1e-5,
            solver: SolverOptions::default(),
            correction_split: CorrectionSplit::R2,
        }
    }
}

/// Result of one fusion or correction step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub image: MultiBandImage,
    pub converged: bool,
    pub inner_iterations: usize,
}

impl StepOutput {
    fn exact(image: MultiBandImage) -> Self {
        Self {
            image,
            converged: true,
            inner_iterations: 1,
        }
    }
}

/// A plan with its models bound to the latent grid.
pub struct BoundPlan<'a> {
    pub plan: &'a ScenarioPlan,
    pub b1: BoundModel,
    pub b2: BoundModel,
}

impl BoundPlan<'_> {
    /// `½‖Λ1^{-1/2}(Y1 − L1X1R1)‖² + ½‖Λ2^{-1/2}(Y2 − L2(X1+ΔX)R2)‖²
    /// + λ‖X1 − X̄1‖² + (γ/2)‖ΔX‖_{2,1}`, all in canonical orientation.
    #[allow(clippy::too_many_arguments)]
    pub fn objective(
        &self,
        y1: &MultiBandImage,
        y2: &MultiBandImage,
        x1: &MultiBandImage,
        dx: &MultiBandImage,
        xbar: &MultiBandImage,
        noise1: &NoiseModel,
        noise2: &NoiseModel,
        params: &RegularizationParams,
    ) -> Result<f64> {
        let p1 = noise1.precisions()?;
        let p2 = noise2.precisions()?;
        let r1 = y1.checked_sub(&self.b1.forward(x1))?;
        let r2 = y2.checked_sub(&self.b2.forward(&(x1 + dx)))?;
        Ok(0.5 * weighted_sq(&p1, &r1)
            + 0.5 * weighted_sq(&p2, &r2)
            + params.lambda * (x1 - xbar).squared_norm()
            + 0.5 * params.gamma * l21_norm(dx))
    }

    /// Minimizes the objective over `X1` with `Ỹ2` fixed, warm-started at `prev`.
    #[allow(clippy::too_many_arguments)]
    pub fn fusion_step(
        &self,
        y1: &MultiBandImage,
        ytilde2: &MultiBandImage,
        xbar: &MultiBandImage,
        prev: &MultiBandImage,
        noise1: &NoiseModel,
        noise2: &NoiseModel,
        lambda: f64,
        opts: &SolverOptions,
    ) -> Result<StepOutput> {
        let plan = self.plan;
        use ScenarioId::*;
        let kind = match plan.id {
            S1 => {
                return Ok(StepOutput::exact(solve_ridge_denoise(
                    y1, ytilde2, xbar, noise1, noise2, lambda,
                )?))
            }
            S2 | S8 => {
                let l1 = plan.model1.spectral.as_ref().expect("L1 present");
                return Ok(StepOutput::exact(solve_spectral_deblur(
                    y1,
                    l1,
                    ytilde2,
                    plan.model2.spectral.as_ref(),
                    xbar,
                    noise1,
                    noise2,
                    lambda,
                )?));
            }
            S3 => {
                noise1.check_bands(y1.band_count())?;
                noise2.check_bands(ytilde2.band_count())?;
                let p1 = noise1.precisions()?;
                let p2 = noise2.precisions()?;
                let mus: Vec<f64> = p2.iter().map(|p| p + 2.0 * lambda).collect();
                let z = ytilde2.same_grid(nalgebra::DMatrix::from_fn(
                    xbar.band_count(),
                    xbar.pixel_count(),
                    |b, q| {
                        (p2[b] * ytilde2.matrix()[(b, q)] + 2.0 * lambda * xbar.matrix()[(b, q)])
                            / mus[b]
                    },
                ));
                let op = self.b1.spatial().expect("R1 present");
                return Ok(StepOutput::exact(superres_bands(op, y1, &z, &p1, &mus)?));
            }
            S4 => {
                noise1.check_bands(y1.band_count())?;
                noise2.check_bands(ytilde2.band_count())?;
                let p1 = noise1.precisions()?;
                let p2 = noise2.precisions()?;
                return Ok(StepOutput::exact(sylvester_fusion_bound(
                    y1, &self.b1, ytilde2, &self.b2, xbar, &p1, &p2, lambda,
                )?));
            }
            S5 => PlanKind::FusionSpectralSplit,
            S6 => PlanKind::FusionIdentitySplit,
            S7 => PlanKind::FusionSpectralSplitSylvester,
            S9 => PlanKind::FusionSpatialSplit,
            S10 => PlanKind::FusionDoubleSplit,
        };
        let admm = AdmmPlan::fusion(
            kind,
            FusionData {
                y1,
                ytilde2,
                xbar,
                init: prev,
                model1: &self.b1,
                model2: &self.b2,
                noise1,
                noise2,
                lambda,
            },
        )?;
        let out = admm_minimize(&admm, opts)?;
        Ok(StepOutput {
            image: out.x,
            converged: out.converged,
            inner_iterations: out.iterations,
        })
    }

    /// Minimizes `‖Λ2^{-1/2}(ΔY̌2 − L2 ΔX R2)‖² + γ‖ΔX‖_{2,1}` with `X1`
    /// fixed, warm-started at `prev`.
    #[allow(clippy::too_many_arguments)]
    pub fn correction_step(
        &self,
        y2: &MultiBandImage,
        x1: &MultiBandImage,
        noise2: &NoiseModel,
        gamma: f64,
        prev: &MultiBandImage,
        opts: &SolverOptions,
        split: CorrectionSplit,
    ) -> Result<StepOutput> {
        let plan = self.plan;
        let dy = y2.checked_sub(&self.b2.forward(x1))?;
        noise2.check_bands(dy.band_count())?;
        use ScenarioId::*;
        match plan.id {
            S1 | S2 | S3 | S5 => {
                if noise2.is_isotropic() {
                    let sigma2 = noise2.band_variances()[0];
                    if !(sigma2 > 0.0) {
                        return Err(Error::Singular("sensor 2 variance must be positive".into()));
                    }
                    return Ok(StepOutput::exact(group_soft_threshold(
                        &dy,
                        gamma * sigma2 / 2.0,
                    )));
                }
                let out = forward_backward_l21(&dy, None, noise2, gamma, opts, prev)?;
                Ok(StepOutput {
                    image: out.x,
                    converged: out.converged,
                    inner_iterations: out.iterations,
                })
            }
            S4 | S8 | S9 => {
                let l2 = plan.model2.spectral.as_ref();
                let out = forward_backward_l21(&dy, l2, noise2, gamma, opts, prev)?;
                Ok(StepOutput {
                    image: out.x,
                    converged: out.converged,
                    inner_iterations: out.iterations,
                })
            }
            S6 | S7 | S10 => {
                let r2 = self.b2.spatial().expect("R2 present");
                let (kind, spectral, spatial) = if plan.id == S10 {
                    (
                        PlanKind::CorrectionSpectralSpatial,
                        self.b2.spectral_matrix(),
                        r2,
                    )
                } else {
                    let op = match split {
                        CorrectionSplit::R2 => r2,
                        CorrectionSplit::LiteralR1 => {
                            let r1 = self.b1.spatial().expect("R1 present");
                            if r1.coarse_shape() != r2.coarse_shape() {
                                return Err(Error::Scenario(format!(
                                    "the literal R1 split needs equal coarse grids, got {:?} and {:?}",
                                    r1.coarse_shape(),
                                    r2.coarse_shape()
                                )));
                            }
                            r1
                        }
                    };
                    (PlanKind::CorrectionSpatial, None, op)
                };
                let admm = AdmmPlan::correction(
                    kind,
                    CorrectionData {
                        dy: &dy,
                        spectral,
                        spatial,
                        noise2,
                        gamma,
                        init: prev,
                    },
                )?;
                let out = admm_minimize(&admm, opts)?;
                Ok(StepOutput {
                    image: out.x,
                    converged: out.converged,
                    inner_iterations: out.iterations,
                })
            }
        }
    }

    /// Smallest `γ` for which `ΔX = 0` minimizes the correction objective:
    /// `max_p ‖[2 L2ᵀ Λ2⁻¹ ΔY̌2 R2ᵀ]_p‖`.
    pub fn zero_stationarity_bound(
        &self,
        y2: &MultiBandImage,
        x1: &MultiBandImage,
        noise2: &NoiseModel,
    ) -> Result<f64> {
        let dy = y2.checked_sub(&self.b2.forward(x1))?;
        noise2.check_bands(dy.band_count())?;
        let p = noise2.precisions()?;
        let mut weighted = dy.matrix().clone();
        for (b, mut row) in weighted.row_iter_mut().enumerate() {
            row *= 2.0 * p[b];
        }
        let grad = self.b2.adjoint(&dy.same_grid(weighted));
        Ok(grad.column_norms().into_iter().fold(0.0, f64::max))
    }
}

fn weighted_sq(p: &[f64], r: &MultiBandImage) -> f64 {
    r.matrix()
        .row_iter()
        .enumerate()
        .map(|(b, row)| p[b] * row.norm_squared())
        .sum()
}

/// One-shot fusion step on an unbound plan.
#[allow(clippy::too_many_arguments)]
pub fn fusion_step(
    plan: &ScenarioPlan,
    y1: &MultiBandImage,
    ytilde2: &MultiBandImage,
    xbar: &MultiBandImage,
    prev: &MultiBandImage,
    noise1: &NoiseModel,
    noise2: &NoiseModel,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<StepOutput> {
    plan.bind()?
        .fusion_step(y1, ytilde2, xbar, prev, noise1, noise2, lambda, opts)
}

/// One-shot correction step on an unbound plan.
pub fn correction_step(
    plan: &ScenarioPlan,
    y2: &MultiBandImage,
    x1: &MultiBandImage,
    noise2: &NoiseModel,
    gamma: f64,
    prev: &MultiBandImage,
    opts: &SolverOptions,
) -> Result<StepOutput> {
    plan.bind()?
        .correction_step(y2, x1, noise2, gamma, prev, opts, CorrectionSplit::R2)
}

/// Final state of the alternating minimization.
///
/// `x1` is the latent image at the acquisition time of the caller's first
/// observation and `dx = X2 − X1` in the caller's labelling.
#[derive(Debug, Clone)]
pub struct AmState {
    pub x1: MultiBandImage,
    pub dx: MultiBandImage,
    /// `J` at the initial point, then after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub iteration: usize,
    pub converged: bool,
    /// Outer iterations in which an inner iterative solver hit its limit.
    pub inner_nonconverged: usize,
    /// Steps rejected because they would have increased `J`.
    pub rejected_steps: usize,
}

/// Alternating minimization over `(X1, ΔX)` from `ΔX = 0` and `X̄1` given by
/// [`crude_estimate`]. Inputs are in the caller's labelling.
pub fn robust_fusion_cd(
    y1: &MultiBandImage,
    y2: &MultiBandImage,
    plan: &ScenarioPlan,
    noise1: &NoiseModel,
    noise2: &NoiseModel,
    params: &RegularizationParams,
    opts: &AmOptions,
) -> Result<AmState> {
    opts.solver.validate()?;
    if opts.max_outer == 0 || !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(
            "max_outer must be >= 1 and tol > 0".into(),
        ));
    }
    let (y1, y2) = plan.canonical(y1, y2);
    let (n1, n2) = plan.canonical(noise1, noise2);
    let bound = plan.bind()?;
    if bound.b1.observed() != y1.geometry() || bound.b2.observed() != y2.geometry() {
        return Err(Error::ShapeMismatch(format!(
            "observations {:?} and {:?} do not match the plan ({:?}, {:?})",
            y1.geometry(),
            y2.geometry(),
            bound.b1.observed(),
            bound.b2.observed()
        )));
    }
    n1.check_bands(y1.band_count())?;
    n2.check_bands(y2.band_count())?;

    let xbar = crude_estimate(y1, &plan.model1, plan.latent)?;
    let mut x1 = xbar.clone();
    let mut dx = MultiBandImage::zeros(plan.latent);
    let objective = |x1: &MultiBandImage, dx: &MultiBandImage| {
        bound.objective(y1, y2, x1, dx, &xbar, n1, n2, params)
    };
    let mut j = objective(&x1, &dx)?;
    let mut trace = vec![j];
    let mut converged = false;
    let mut inner_nonconverged = 0;
    let mut rejected_steps = 0;
    let mut iteration = 0;
    let at = |k: usize| {
        move |e: Error| Error::AtIteration {
            iteration: k,
            source: Box::new(e),
        }
    };

    for k in 1..=opts.max_outer {
        iteration = k;
        let j_prev = j;
        let ytilde2 = y2.checked_sub(&bound.b2.forward(&dx)).map_err(at(k))?;
        let fused = bound
            .fusion_step(
                y1,
                &ytilde2,
                &xbar,
                &x1,
                n1,
                n2,
                params.lambda,
                &opts.solver,
            )
            .map_err(at(k))?;
        let j_fused = objective(&fused.image, &dx).map_err(at(k))?;
        if j_fused <= j {
            x1 = fused.image;
            j = j_fused;
        } else {
            rejected_steps += 1;
        }

        let corrected = bound
            .correction_step(
                y2,
                &x1,
                n2,
                params.gamma,
                &dx,
                &opts.solver,
                opts.correction_split,
            )
            .map_err(at(k))?;
        let j_corrected = objective(&x1, &corrected.image).map_err(at(k))?;
        if j_corrected <= j {
            dx = corrected.image;
            j = j_corrected;
        } else {
            rejected_steps += 1;
        }
        if !fused.converged || !corrected.converged {
            inner_nonconverged += 1;
        }
        trace.push(j);
        if (j_prev - j).abs() <= opts.tol * j_prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    let (x1, dx) = if plan.swapped {
        (&x1 + &dx, dx.scaled(-1.0))
    } else {
        (x1, dx)
    };
    Ok(AmState {
        x1,
        dx,
        objective_trace: trace,
        iteration,
        converged,
        inner_nonconverged,
        rejected_steps,
    })
}

/// Default sparsity weight: the zero-stationarity level of a pure-noise
/// pixel, `2·sqrt(m2)/σ2` with `σ2` the RMS noise level of sensor 2.
pub fn default_gamma(noise2: &NoiseModel) -> Result<f64> {
    let v = noise2.band_variances();
    let mean_var = v.iter().sum::<f64>() / v.len() as f64;
    if !(mean_var > 0.0) {
        return Err(Error::Singular("sensor 2 variance must be positive".into()));
    }
    Ok(2.0 * (v.len() as f64).sqrt() / mean_var.sqrt())
}

/// Default Tikhonov weight: `1e-3` times the mean band precision.
pub fn default_lambda(noise1: &NoiseModel, noise2: &NoiseModel) -> Result<f64> {
    let p1 = noise1.precisions()?;
    let p2 = noise2.precisions()?;
    let mean = p1.iter().chain(&p2).sum::<f64>() / (p1.len() + p2.len()) as f64;
    Ok(1e-3 * mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_examples() {
        let full = SensorSpec::full_bands(10, 3);
        assert_eq!(scenario_id(&full, &full).unwrap(), (ScenarioId::S1, false));
        let ms = SensorSpec::new(10, vec![vec![0, 1], vec![2]]);
        assert_eq!(scenario_id(&ms, &full).unwrap(), (ScenarioId::S2, false));
        assert_eq!(scenario_id(&full, &ms).unwrap(), (ScenarioId::S2, true));
    }

    #[test]
    fn gcd_grid_for_non_integer_ratio() {
        let a = SensorSpec::full_bands(15, 1);
        let b = SensorSpec::full_bands(10, 1);
        let plan = classify_scenario(&a, (8, 8), &b, (12, 12)).unwrap();
        assert_eq!(plan.id, ScenarioId::S6);
        assert_eq!(plan.latent_pitch, 5);
        assert_eq!(plan.virtual_factors, Some((3, 2)));
        assert!(!plan.swapped);
        assert_eq!((plan.latent.width, plan.latent.height), (24, 24));
    }

    #[test]
    fn zero_pitch_is_rejected() {
        let a = SensorSpec::full_bands(0, 1);
        let b = SensorSpec::full_bands(10, 1);
        assert!(scenario_id(&a, &b).is_err());
    }

    #[test]
    fn mismatched_extents_are_rejected() {
        let a = SensorSpec::full_bands(20, 1);
        let b = SensorSpec::full_bands(10, 1);
        assert!(classify_scenario(&a, (8, 8), &b, (8, 8)).is_err());
    }
}
