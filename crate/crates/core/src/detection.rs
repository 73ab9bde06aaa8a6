//! Change energy, decision rules, and the worst-case baseline.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::MultiBandImage;
use crate::model::{default_blur_for, Decimation, DegradationModel, SpatialDegradation};
use crate::scenarios::SensorSpec;

const OTSU_BINS: usize = 256;

/// Rule producing the threshold `τ` from an energy image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ThresholdRule {
    Fixed { tau: f64 },
    Quantile { q: f64 },
    Otsu,
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Otsu
    }
}

/// Detection outputs on the grid of `dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeResult {
    pub dx: MultiBandImage,
    pub energy: Vec<f64>,
    pub tau: f64,
    pub map: Vec<bool>,
    pub trace: Vec<f64>,
}

impl ChangeResult {
    pub fn from_change(dx: MultiBandImage, rule: ThresholdRule, trace: Vec<f64>) -> Result<Self> {
        let energy = change_energy(&dx);
        let (tau, map) = threshold_map(&energy, rule)?;
        Ok(Self {
            dx,
            energy,
            tau,
            map,
            trace,
        })
    }

    pub fn width(&self) -> usize {
        self.dx.width()
    }

    pub fn height(&self) -> usize {
        self.dx.height()
    }
}

/// `e_p = ‖Δx_p‖₂`.
pub fn change_energy(dx: &MultiBandImage) -> Vec<f64> {
    dx.column_norms()
}

/// Threshold and decision map `d_p = [e_p ≥ τ]`.
pub fn threshold_map(energy: &[f64], rule: ThresholdRule) -> Result<(f64, Vec<bool>)> {
    if energy.is_empty() {
        return Err(Error::InvalidParameter("energy image is empty".into()));
    }
    if energy.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidParameter(
            "energy image has non-finite values".into(),
        ));
    }
    let tau = match rule {
        ThresholdRule::Fixed { tau } => tau,
        ThresholdRule::Quantile { q } => {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "quantile must lie in (0, 1), got {q}"
                )));
            }
            quantile(energy, q)
        }
        ThresholdRule::Otsu => otsu(energy),
    };
    Ok((tau, energy.iter().map(|e| *e >= tau).collect()))
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Between-class variance maximizer on a 256-bin histogram. Ties are broken
/// by the midpoint of the maximizing bin range.
fn otsu(energy: &[f64]) -> f64 {
    let (lo, hi) = energy
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), e| {
            (a.min(*e), b.max(*e))
        });
    if hi <= lo {
        return lo;
    }
    let width = (hi - lo) / OTSU_BINS as f64;
    let mut hist = [0usize; OTSU_BINS];
    for e in energy {
        let bin = (((e - lo) / width) as usize).min(OTSU_BINS - 1);
        hist[bin] += 1;
    }
    let total = energy.len() as f64;
    let center = |k: usize| lo + (k as f64 + 0.5) * width;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(k, c)| *c as f64 * center(k))
        .sum();

    let mut best = f64::NEG_INFINITY;
    let (mut first, mut last) = (0, 0);
    let (mut w0, mut sum0) = (0.0, 0.0);
    for k in 0..OTSU_BINS - 1 {
        w0 += hist[k] as f64;
        sum0 += hist[k] as f64 * center(k);
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let diff = sum0 / w0 - (sum_all - sum0) / w1;
        let between = w0 * w1 * diff * diff;
        if between > best * (1.0 + 1e-12) {
            best = between;
            first = k;
            last = k;
        } else if (between - best).abs() <= 1e-12 * best {
            last = k;
        }
    }
    // Threshold at the upper edge of the last bin of the lower class.
    lo + ((first + last) as f64 / 2.0 + 1.0) * width
}

/// Worst-case baseline output on the common coarse grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WcResult {
    pub result: ChangeResult,
    /// Source bands of each common band.
    pub common_bands: Vec<Vec<usize>>,
    /// Pitch of the common grid.
    pub pitch: u32,
    /// Replication factor from the common grid to the finest (GCD) grid.
    pub block: usize,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn sorted(g: &[usize]) -> Vec<usize> {
    let mut g = g.to_vec();
    g.sort_unstable();
    g.dedup();
    g
}

/// Indices of the groups of `groups` whose disjoint union is exactly `target`.
fn decompose(target: &[usize], groups: &[Vec<usize>]) -> Option<Vec<usize>> {
    if let Some(i) = groups.iter().position(|g| sorted(g) == target) {
        return Some(vec![i]);
    }
    let parts: Vec<usize> = (0..groups.len())
        .filter(|&i| {
            sorted(&groups[i])
                .iter()
                .all(|b| target.binary_search(b).is_ok())
        })
        .collect();
    let mut covered: Vec<usize> = parts
        .iter()
        .flat_map(|&i| groups[i].iter().copied())
        .collect();
    covered.sort_unstable();
    let total = covered.len();
    covered.dedup();
    (total == covered.len() && covered == target).then_some(parts)
}

/// Bands expressible by both sensors, as size-weighted averaging matrices
/// over each sensor's observed bands.
fn common_bands(
    s1: &SensorSpec,
    s2: &SensorSpec,
) -> Result<(Vec<Vec<usize>>, DMatrix<f64>, DMatrix<f64>)> {
    let mut common: Vec<Vec<usize>> = Vec::new();
    for g in s1.band_groups.iter().chain(&s2.band_groups) {
        let g = sorted(g);
        if common.contains(&g) {
            continue;
        }
        if decompose(&g, &s1.band_groups).is_some() && decompose(&g, &s2.band_groups).is_some() {
            common.push(g);
        }
    }
    if common.is_empty() {
        return Err(Error::Scenario(
            "the two sensors share no common band".into(),
        ));
    }
    common.sort();
    let weights = |s: &SensorSpec| {
        let mut m = DMatrix::zeros(common.len(), s.observed_bands());
        for (r, g) in common.iter().enumerate() {
            for i in decompose(g, &s.band_groups).expect("decomposable") {
                m[(r, i)] = sorted(&s.band_groups[i]).len() as f64 / g.len() as f64;
            }
        }
        m
    };
    let (w1, w2) = (weights(s1), weights(s2));
    Ok((common, w1, w2))
}

fn degrade_to(y: &MultiBandImage, bands: &DMatrix<f64>, factor: usize) -> Result<MultiBandImage> {
    let mixed = y.same_grid(bands * y.matrix());
    if factor == 1 {
        return Ok(mixed);
    }
    let dec = Decimation::uniform(factor)?;
    let model = DegradationModel::spatial(SpatialDegradation::new(default_blur_for(dec), dec));
    crate::model::apply_forward(&model, &mixed)
}

/// Degrades both observations to the coarsest common grid (the LCM of the
/// pitches) and the shared bands, then applies change vector analysis.
pub fn wc_baseline(
    y1: &MultiBandImage,
    y2: &MultiBandImage,
    s1: &SensorSpec,
    s2: &SensorSpec,
    rule: ThresholdRule,
) -> Result<WcResult> {
    for (y, s, which) in [(y1, s1, "sensor 1"), (y2, s2, "sensor 2")] {
        if s.pitch == 0 {
            return Err(Error::Scenario(format!(
                "{which}: pixel pitch must be positive"
            )));
        }
        if y.band_count() != s.observed_bands() {
            return Err(Error::BandMismatch {
                expected: s.observed_bands(),
                found: y.band_count(),
            });
        }
    }
    let (common, w1, w2) = common_bands(s1, s2)?;
    let g = gcd(s1.pitch, s2.pitch);
    let lcm = s1.pitch / g * s2.pitch;
    let f1 = (lcm / s1.pitch) as usize;
    let f2 = (lcm / s2.pitch) as usize;
    let c1 = degrade_to(y1, &w1, f1)?;
    let c2 = degrade_to(y2, &w2, f2)?;
    let diff = c2.checked_sub(&c1).map_err(|_| {
        Error::ShapeMismatch(format!(
            "degraded observations differ: {:?} vs {:?}",
            c1.geometry(),
            c2.geometry()
        ))
    })?;
    Ok(WcResult {
        result: ChangeResult::from_change(diff, rule, Vec::new())?,
        common_bands: common,
        pitch: lcm,
        block: (lcm / g) as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Geometry;

    #[test]
    fn energy_examples() {
        assert_eq!(
            change_energy(&MultiBandImage::zeros(Geometry::new(2, 2, 3))),
            vec![0.0; 4]
        );
        let d = MultiBandImage::from_bands(1, 1, &[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(change_energy(&d), vec![5.0]);
        let p = MultiBandImage::from_bands(1, 1, &[vec![4.0], vec![3.0]]).unwrap();
        assert_eq!(change_energy(&p), vec![5.0]);
    }

    #[test]
    fn fixed_thresholds() {
        let e = [0.0, 0.5, 2.0];
        assert_eq!(
            threshold_map(&e, ThresholdRule::Fixed { tau: 0.0 })
                .unwrap()
                .1,
            vec![true; 3]
        );
        assert_eq!(
            threshold_map(&e, ThresholdRule::Fixed { tau: 2.5 })
                .unwrap()
                .1,
            vec![false; 3]
        );
        assert!(threshold_map(&[], ThresholdRule::Otsu).is_err());
        assert!(threshold_map(&e, ThresholdRule::Quantile { q: 1.0 }).is_err());
    }

    #[test]
    fn otsu_separates_two_modes() {
        let mut e = vec![0.1; 100];
        e.extend(vec![0.9; 100]);
        let (tau, map) = threshold_map(&e, ThresholdRule::Otsu).unwrap();
        assert!(tau > 0.1 && tau < 0.9, "{tau}");
        assert_eq!(map.iter().filter(|d| **d).count(), 100);
    }

    #[test]
    fn identical_inputs_have_zero_energy() {
        let s = SensorSpec::full_bands(10, 2);
        let y =
            MultiBandImage::from_bands(2, 2, &[vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]]).unwrap();
        let wc = wc_baseline(&y, &y, &s, &s, ThresholdRule::Otsu).unwrap();
        assert!(wc.result.energy.iter().all(|e| *e == 0.0));
        assert_eq!(wc.block, 1);
    }

    #[test]
    fn disjoint_bands_have_no_common_ground() {
        let a = SensorSpec::new(10, vec![vec![0]]);
        let b = SensorSpec::new(10, vec![vec![1]]);
        let y = MultiBandImage::zeros(Geometry::new(2, 2, 1));
        assert!(wc_baseline(&y, &y, &a, &b, ThresholdRule::Otsu).is_err());
    }

    #[test]
    fn common_bands_merge_fine_groups() {
        let fine = SensorSpec::new(10, vec![vec![0], vec![1], vec![2], vec![3]]);
        let coarse = SensorSpec::new(10, vec![vec![0, 1], vec![2, 3, 4]]);
        let (common, w_fine, w_coarse) = common_bands(&fine, &coarse).unwrap();
        assert_eq!(common, vec![vec![0, 1]]);
        assert_eq!(
            w_fine.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.5, 0.5, 0.0, 0.0]
        );
        assert_eq!(
            w_coarse.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0]
        );
    }
}
