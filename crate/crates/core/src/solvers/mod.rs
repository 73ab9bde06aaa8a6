//! Sub-solvers for the fusion and correction steps.
//!
//! Closed forms cover the quadratic problems whose normal equations
//! diagonalize (per pixel, per band, or both after a change of basis); the
//! remaining problems go through forward-backward splitting or ADMM.

pub mod admm;
mod forward_backward;
mod ridge;
mod spectral;
mod superres;
mod sylvester;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use admm::{
    admm_minimize, AdmmOutput, AdmmPlan, BlockDescriptor, CorrectionData, FusionData, PlanKind,
};
pub use forward_backward::{forward_backward_l21, lipschitz_constant, FbOutput};
pub use ridge::solve_ridge_denoise;
pub use spectral::solve_spectral_deblur;
pub use superres::solve_band_superres;
pub use sylvester::solve_sylvester_fusion;

pub(crate) use spectral::SpectralSystem;
pub(crate) use superres::superres_bands;
pub(crate) use sylvester::{sylvester_fusion_bound, SylvesterSolver};

/// Iteration controls shared by the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub mu: f64,
    pub step_scale: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-6,
            mu: 1.0,
            step_scale: 0.99,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mu must be > 0, got {}",
                self.mu
            )));
        }
        if !(self.step_scale > 0.0 && self.step_scale <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "step_scale must lie in (0, 1], got {}",
                self.step_scale
            )));
        }
        Ok(())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}
