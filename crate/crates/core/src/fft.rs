//! Frequency-domain machinery for cyclic blur and integer decimation.
//!
//! A centrosymmetric kernel under cyclic boundaries is diagonalized by the
//! 2-D DFT with a real spectrum, and the coarse-grid operator `S^T B^2 S`
//! is again circulant, with a spectrum obtained by folding the fine-grid
//! spectrum over its `dr·dc` aliases. Both facts together give an exact
//! O(n log n) solve of `(mu I + w B S S^T B) x = r`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::{BlurKernel, Decimation};

/// Row-major 2-D FFT of a fixed size.
pub(crate) struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    fn run(&self, data: &mut [Complex64], rows_fft: &dyn Fft<f64>, cols_fft: &dyn Fft<f64>) {
        debug_assert_eq!(data.len(), self.rows * self.cols);
        for row in data.chunks_exact_mut(self.cols) {
            rows_fft.process(row);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                column[r] = data[r * self.cols + c];
            }
            cols_fft.process(&mut column);
            for r in 0..self.rows {
                data[r * self.cols + c] = column[r];
            }
        }
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(data, self.row_fwd.as_ref(), self.col_fwd.as_ref());
    }

    /// Normalized inverse transform.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, self.row_inv.as_ref(), self.col_inv.as_ref());
        let scale = 1.0 / (self.rows * self.cols) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

fn to_complex(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

/// Spatial degradation `R = B S` bound to a concrete fine grid.
pub struct SpatialOperator {
    rows: usize,
    cols: usize,
    decimation: Decimation,
    fft: Fft2,
    coarse_fft: Fft2,
    /// Real spectrum of the blur on the fine grid.
    transfer: Vec<f64>,
    /// Spectrum of `S^T B^2 S` on the coarse grid.
    folded_power: Vec<f64>,
}

impl SpatialOperator {
    pub fn new(
        kernel: &BlurKernel,
        decimation: Decimation,
        rows: usize,
        cols: usize,
    ) -> Result<Self> {
        let (kr, kc) = kernel.shape();
        if kr > rows || kc > cols {
            return Err(Error::KernelTooLarge {
                kernel_rows: kr,
                kernel_cols: kc,
                rows,
                cols,
            });
        }
        decimation.check_divides(rows, cols)?;

        let fft = Fft2::new(rows, cols);
        let mut embedded = vec![Complex64::new(0.0, 0.0); rows * cols];
        let (cr, cc) = (kr / 2, kc / 2);
        for i in 0..kr {
            for j in 0..kc {
                let r = (i + rows - cr) % rows;
                let c = (j + cols - cc) % cols;
                embedded[r * cols + c].re += kernel.tap(i, j);
            }
        }
        fft.forward(&mut embedded);
        let transfer: Vec<f64> = embedded.iter().map(|z| z.re).collect();

        let (dr, dc) = (decimation.row_factor(), decimation.col_factor());
        let (hc, wc) = (rows / dr, cols / dc);
        let norm = 1.0 / (dr * dc) as f64;
        let mut folded_power = vec![0.0; hc * wc];
        for u in 0..hc {
            for v in 0..wc {
                let mut acc = 0.0;
                for a in 0..dr {
                    for b in 0..dc {
                        let t = transfer[(u + a * hc) * cols + v + b * wc];
                        acc += t * t;
                    }
                }
                folded_power[u * wc + v] = acc * norm;
            }
        }

        Ok(Self {
            rows,
            cols,
            decimation,
            fft,
            coarse_fft: Fft2::new(hc, wc),
            transfer,
            folded_power,
        })
    }

    pub fn fine_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn coarse_shape(&self) -> (usize, usize) {
        (
            self.rows / self.decimation.row_factor(),
            self.cols / self.decimation.col_factor(),
        )
    }

    pub fn factor(&self) -> usize {
        self.decimation.factor()
    }

    /// Cyclic blur of one fine-grid band.
    pub fn blur(&self, band: &[f64]) -> Vec<f64> {
        let mut buf = to_complex(band);
        self.fft.forward(&mut buf);
        for (z, t) in buf.iter_mut().zip(&self.transfer) {
            *z *= *t;
        }
        self.fft.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    pub fn decimate(&self, band: &[f64]) -> Vec<f64> {
        self.decimation.decimate_band(band, self.rows, self.cols)
    }

    pub fn upsample(&self, coarse: &[f64]) -> Vec<f64> {
        let (hc, wc) = self.coarse_shape();
        self.decimation.upsample_band(coarse, hc, wc)
    }

    /// `x R` for one band: blur then decimate.
    pub fn forward(&self, band: &[f64]) -> Vec<f64> {
        self.decimate(&self.blur(band))
    }

    /// `y R^T` for one coarse band: zero-upsample then blur.
    pub fn adjoint(&self, coarse: &[f64]) -> Vec<f64> {
        self.blur(&self.upsample(coarse))
    }

    /// Exact solution of `(mu I + w B S S^T B) x = rhs` on the fine grid.
    pub fn solve_shifted(&self, rhs: &[f64], mu: f64, w: f64) -> Result<Vec<f64>> {
        if mu < 0.0 || w < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "shifted solve needs mu >= 0 and w >= 0, got mu={mu}, w={w}"
            )));
        }
        if mu == 0.0 {
            if self.decimation.factor() > 1 {
                return Err(Error::Singular(
                    "super-resolution with zero penalty and decimation is underdetermined".into(),
                ));
            }
            let max_gain = self.transfer.iter().fold(0.0_f64, |m, t| m.max(t * t));
            let mut buf = to_complex(rhs);
            self.fft.forward(&mut buf);
            for (z, t) in buf.iter_mut().zip(&self.transfer) {
                let gain = w * t * t;
                if gain <= 1e-12 * w * max_gain || gain == 0.0 {
                    return Err(Error::Singular(
                        "blur spectrum vanishes and no penalty regularizes it".into(),
                    ));
                }
                *z /= gain;
            }
            self.fft.inverse(&mut buf);
            return Ok(buf.into_iter().map(|z| z.re).collect());
        }

        // Woodbury: x = (r - w B S (mu I + w S^T B^2 S)^{-1} S^T B r) / mu
        let coarse = self.forward(rhs);
        let mut buf = to_complex(&coarse);
        self.coarse_fft.forward(&mut buf);
        for (z, g) in buf.iter_mut().zip(&self.folded_power) {
            *z /= mu + w * g;
        }
        self.coarse_fft.inverse(&mut buf);
        let inner: Vec<f64> = buf.into_iter().map(|z| z.re).collect();
        let correction = self.adjoint(&inner);
        Ok(rhs
            .iter()
            .zip(&correction)
            .map(|(r, c)| (r - w * c) / mu)
            .collect())
    }
}
