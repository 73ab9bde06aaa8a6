//! Robust-fusion change detection between two multi-band optical images.
//!
//! Two observations of the same scene, acquired at different times by
//! sensors with possibly different spatial and spectral resolutions, are
//! related to a pair of latent images `X1` and `X2 = X1 + ΔX` through the
//! forward model `Y = L X R + N`. The crate estimates `X1` and the change
//! image `ΔX` jointly by alternating minimization, then derives a change map
//! from the per-pixel energy of `ΔX`.
//!
//! The main entry points are [`classify_scenario`], which picks the
//! degradation pattern linking the two sensors, and [`robust_fusion_cd`],
//! which runs the alternating minimization for that pattern.

pub mod dense;
pub mod detection;
pub mod error;
mod fft;
pub mod image;
pub mod io;
pub mod model;
pub mod regularization;
pub mod scenarios;
pub mod solvers;
pub mod synthesis;

pub use detection::{
    change_energy, threshold_map, wc_baseline, ChangeResult, ThresholdRule, WcResult,
};
pub use error::{Error, Result};
pub use fft::SpatialOperator;
pub use image::{Geometry, MultiBandImage};
pub use io::{export_energy, export_map, read_image, write_image, RasterFormat};
pub use model::{
    apply_blur, apply_forward, apply_spectral, build_gaussian_blur, decimate, sample_noise,
    upsample_adjoint, BlurKernel, BoundModel, Decimation, DegradationModel, NoiseModel,
    SpatialDegradation, SpectralResponse,
};
pub use regularization::{
    crude_estimate, group_soft_threshold, l21_norm, tikhonov_penalty, RegularizationParams,
};
pub use scenarios::{
    classify_scenario, corrected_image, predicted_change, robust_fusion_cd, AmOptions, AmState,
    ScenarioId, ScenarioPlan, SensorSpec,
};
pub use solvers::SolverOptions;
pub use synthesis::{
    evaluate, generate_latent_scene, noise_for_snr, plant_changes, roc_auc, simulate_observation,
    ChangeSpec, MetricsReport, SceneSpec,
};
