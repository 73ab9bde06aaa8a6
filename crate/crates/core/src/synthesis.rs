//! Synthetic scenes with planted changes, simulated acquisitions, and
//! detection metrics against the planted ground truth.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Geometry, MultiBandImage};
use crate::model::{apply_forward, sample_noise, DegradationModel, NoiseModel};

const PLACEMENT_ATTEMPTS: usize = 2000;

/// Piecewise-constant latent scene description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub band_count: usize,
    pub region_count: usize,
    pub signature_scale: f64,
    pub seed: u64,
}

/// Planted change description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeSpec {
    pub changed_fraction: f64,
    pub blob_count: usize,
    pub magnitude: f64,
}

/// Voronoi partition with one random spectral signature per cell.
pub fn generate_latent_scene(spec: &SceneSpec) -> Result<MultiBandImage> {
    if spec.width == 0 || spec.height == 0 || spec.band_count == 0 || spec.region_count == 0 {
        return Err(Error::InvalidParameter("scene counts must be >= 1".into()));
    }
    if !(spec.signature_scale > 0.0) || !spec.signature_scale.is_finite() {
        return Err(Error::InvalidParameter(
            "signature scale must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<(f64, f64)> = (0..spec.region_count)
        .map(|_| {
            (
                rng.random_range(0.0..spec.height as f64),
                rng.random_range(0.0..spec.width as f64),
            )
        })
        .collect();
    let signatures = DMatrix::from_fn(spec.band_count, spec.region_count, |_, _| {
        rng.random_range(0.0..spec.signature_scale)
    });
    let n = spec.width * spec.height;
    let data = DMatrix::from_fn(spec.band_count, n, |b, p| {
        let (r, c) = ((p / spec.width) as f64 + 0.5, (p % spec.width) as f64 + 0.5);
        let region = centers
            .iter()
            .enumerate()
            .map(|(i, (cr, cc))| (i, (r - cr).powi(2) + (c - cc).powi(2)))
            .fold(
                (0, f64::INFINITY),
                |best, cur| if cur.1 < best.1 { cur } else { best },
            )
            .0;
        signatures[(b, region)]
    });
    MultiBandImage::new(spec.width, spec.height, data)
}

/// Adds a random spectral offset of size about `magnitude` on disjoint disks
/// covering about `changed_fraction` of the grid.
pub fn plant_changes(
    x1: &MultiBandImage,
    spec: &ChangeSpec,
    seed: u64,
) -> Result<(MultiBandImage, Vec<bool>)> {
    let (w, h) = (x1.width(), x1.height());
    let n = w * h;
    if !(spec.changed_fraction > 0.0 && spec.changed_fraction < 1.0) {
        return Err(Error::InvalidParameter(
            "changed_fraction must lie in (0, 1)".into(),
        ));
    }
    if spec.blob_count == 0 || spec.changed_fraction * (n as f64) < 1.0 {
        return Err(Error::InvalidParameter(
            "change spec must describe at least one blob and one pixel".into(),
        ));
    }
    if !(spec.magnitude >= 0.0) || !spec.magnitude.is_finite() {
        return Err(Error::InvalidParameter("magnitude must be >= 0".into()));
    }
    let area = spec.changed_fraction * n as f64 / spec.blob_count as f64;
    let radius = (area / std::f64::consts::PI).sqrt();
    if 2.0 * radius > w.min(h) as f64 {
        return Err(Error::InvalidParameter(
            "changed_fraction too large for the blob geometry".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(spec.blob_count);
    for _ in 0..spec.blob_count {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let c = (
                rng.random_range(radius..=h as f64 - radius),
                rng.random_range(radius..=w as f64 - radius),
            );
            if centers
                .iter()
                .all(|o| (o.0 - c.0).powi(2) + (o.1 - c.1).powi(2) > (2.0 * radius + 1.0).powi(2))
            {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InvalidParameter(
                "changed_fraction too large for the blob geometry".into(),
            ));
        }
    }
    let bands = x1.band_count();
    let offsets: Vec<Vec<f64>> = centers
        .iter()
        .map(|_| {
            (0..bands)
                .map(|_| {
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    sign * spec.magnitude * rng.random_range(0.5..1.0)
                })
                .collect()
        })
        .collect();
    let mut truth = vec![false; n];
    let mut x2 = x1.matrix().clone();
    for p in 0..n {
        let (r, c) = ((p / w) as f64 + 0.5, (p % w) as f64 + 0.5);
        if let Some(k) = centers
            .iter()
            .position(|(cr, cc)| (r - cr).powi(2) + (c - cc).powi(2) <= radius * radius)
        {
            truth[p] = true;
            for b in 0..bands {
                x2[(b, p)] += offsets[k][b];
            }
        }
    }
    Ok((x1.same_grid(x2), truth))
}

/// `Y = L X R + N`.
pub fn simulate_observation(
    x: &MultiBandImage,
    model: &DegradationModel,
    noise: &NoiseModel,
    seed: u64,
) -> Result<MultiBandImage> {
    let clean = apply_forward(model, x)?;
    let n = sample_noise(noise, clean.geometry(), seed)?;
    Ok(&clean + &n)
}

/// Per-band noise variances giving the requested SNR against `clean`:
/// `σ_b² = mean(y_b²) / 10^{snr/10}`.
pub fn noise_for_snr(clean: &MultiBandImage, snr_db: f64) -> Result<NoiseModel> {
    let factor = 10f64.powf(snr_db / 10.0);
    let variances = clean
        .matrix()
        .row_iter()
        .map(|row| row.norm_squared() / row.len() as f64 / factor)
        .collect();
    NoiseModel::new(variances)
}

/// Block replication of a coarse raster onto a `block`-times finer grid.
pub fn upsample_blocks<T: Copy>(values: &[T], width: usize, height: usize, block: usize) -> Vec<T> {
    let fw = width * block;
    (0..height * block * fw)
        .map(|p| values[(p / fw / block) * width + (p % fw) / block])
        .collect()
}

/// Confusion counts, derived rates, and the ROC sweep when scores are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`.
    pub roc: Vec<(f64, f64)>,
    pub auc: Option<f64>,
}

/// ROC over all distinct score thresholds and its trapezoidal area.
/// Returns `None` for the area when `truth` has a single class.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<(Vec<(f64, f64)>, Option<f64>)> {
    if scores.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} truth pixels",
            scores.len(),
            truth.len()
        )));
    }
    let positives = truth.iter().filter(|t| **t).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Ok((vec![(0.0, 0.0), (1.0, 1.0)], None));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut roc = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let point = (fp as f64 / negatives as f64, tp as f64 / positives as f64);
        let last = *roc.last().expect("non-empty");
        auc += (point.0 - last.0) * (point.1 + last.1) / 2.0;
        roc.push(point);
    }
    Ok((roc, Some(auc)))
}

/// Scores a binary map, and optionally a continuous score image, against truth.
pub fn evaluate(map: &[bool], scores: Option<&[f64]>, truth: &[bool]) -> Result<MetricsReport> {
    if map.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "map has {} pixels, truth has {}",
            map.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (d, t) in map.iter().zip(truth) {
        match (d, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let (roc, auc) = match scores {
        Some(s) => roc_auc(s, truth)?,
        None => (Vec::new(), None),
    };
    Ok(MetricsReport {
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        precision,
        recall,
        f1,
        roc,
        auc,
    })
}

/// Scene geometry helper.
impl SceneSpec {
    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width, self.height, self.band_count)
    }
}
