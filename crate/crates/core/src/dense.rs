//! Dense reference operators for small grids.
//!
//! Every operator here is built by direct indexing, without going through
//! the FFT machinery, so it can serve as an oracle for the fast paths. An
//! image is the `bands × pixels` matrix `X`; a spatial operator is the
//! `pixels × pixels'` matrix `R` acting on the right, and `vec` stacks the
//! columns of `X` (pixel after pixel).

use nalgebra::{DMatrix, DVector};

use crate::model::{BlurKernel, Decimation, DegradationModel, SpatialDegradation};

/// `B` with `(X B)` the cyclic blur of every band of `X`.
pub fn blur_matrix(kernel: &BlurKernel, rows: usize, cols: usize) -> DMatrix<f64> {
    let n = rows * cols;
    let (kr, kc) = kernel.shape();
    let (cr, cc) = (kr / 2, kc / 2);
    let mut b = DMatrix::zeros(n, n);
    for r in 0..rows {
        for c in 0..cols {
            for i in 0..kr {
                for j in 0..kc {
                    let sr = (r + i + rows - cr % rows) % rows;
                    let sc = (c + j + cols - cc % cols) % cols;
                    b[(sr * cols + sc, r * cols + c)] += kernel.tap(i, j);
                }
            }
        }
    }
    b
}

/// `S` keeping the top-left pixel of every block.
pub fn decimation_matrix(decimation: Decimation, rows: usize, cols: usize) -> DMatrix<f64> {
    let (dr, dc) = (decimation.row_factor(), decimation.col_factor());
    let (hc, wc) = (rows / dr, cols / dc);
    let mut s = DMatrix::zeros(rows * cols, hc * wc);
    for i in 0..hc {
        for j in 0..wc {
            s[((i * dr) * cols + j * dc, i * wc + j)] = 1.0;
        }
    }
    s
}

/// `R = B S`.
pub fn spatial_matrix(spatial: &SpatialDegradation, rows: usize, cols: usize) -> DMatrix<f64> {
    blur_matrix(&spatial.blur, rows, cols) * decimation_matrix(spatial.decimation, rows, cols)
}

/// `(L, R)` of a model on a `rows × cols` latent grid with `bands` bands;
/// absent parts are identities.
pub fn model_matrices(
    model: &DegradationModel,
    bands: usize,
    rows: usize,
    cols: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let l = model
        .spectral
        .as_ref()
        .map_or_else(|| DMatrix::identity(bands, bands), |s| s.matrix().clone());
    let r = model.spatial.as_ref().map_or_else(
        || DMatrix::identity(rows * cols, rows * cols),
        |s| spatial_matrix(s, rows, cols),
    );
    (l, r)
}

/// `Rᵀ ⊗ L`, so that `vec(L X R) = (Rᵀ ⊗ L) vec(X)`.
pub fn vec_operator(l: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    r.transpose().kronecker(l)
}

/// `vec(X)` for a `bands × pixels` matrix.
pub fn vectorize(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &DVector<f64>, bands: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(bands, v.len() / bands, v.as_slice())
}

/// `diag(p_1..p_m)` repeated over `pixels` columns, matching [`vectorize`].
pub fn precision_diagonal(precisions: &[f64], pixels: usize) -> DMatrix<f64> {
    let m = precisions.len();
    DMatrix::from_diagonal(&DVector::from_fn(m * pixels, |i, _| precisions[i % m]))
}

/// One weighted least-squares term `½‖W^{1/2}(y − A x)‖²` of a dense problem.
pub struct DenseTerm<'a> {
    pub operator: &'a DMatrix<f64>,
    pub weights: &'a DVector<f64>,
    pub data: &'a DVector<f64>,
}

fn weighted_normal(terms: &[DenseTerm<'_>], n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    for t in terms {
        let wa = DMatrix::from_fn(t.operator.nrows(), n, |i, j| {
            t.weights[i] * t.operator[(i, j)]
        });
        h += t.operator.transpose() * &wa;
        g += wa.transpose() * t.data;
    }
    (h, g)
}

/// Minimizer of `Σ ½‖W^{1/2}(y − A x)‖² + λ‖x − x̄‖²` from the normal
/// equations.
pub fn quadratic_optimum(
    terms: &[DenseTerm<'_>],
    xbar: &DVector<f64>,
    lambda: f64,
) -> DVector<f64> {
    let n = xbar.len();
    let (mut h, mut g) = weighted_normal(terms, n);
    for i in 0..n {
        h[(i, i)] += 2.0 * lambda;
    }
    g += xbar * (2.0 * lambda);
    h.lu().solve(&g).expect("normal equations are nonsingular")
}

/// Value of `Σ ½‖W^{1/2}(y − A x)‖² + λ‖x − x̄‖²`.
pub fn quadratic_objective(
    terms: &[DenseTerm<'_>],
    xbar: &DVector<f64>,
    lambda: f64,
    x: &DVector<f64>,
) -> f64 {
    let fit: f64 = terms
        .iter()
        .map(|t| {
            let r = t.data - t.operator * x;
            0.5 * r
                .iter()
                .zip(t.weights.iter())
                .map(|(r, w)| w * r * r)
                .sum::<f64>()
        })
        .sum();
    fit + lambda * (x - xbar).norm_squared()
}

/// `‖W^{1/2}(y − A x)‖² + γ Σ_p ‖x_p‖`, pixels being consecutive runs of
/// `bands` entries.
pub fn group_lasso_objective(
    term: &DenseTerm<'_>,
    bands: usize,
    gamma: f64,
    x: &DVector<f64>,
) -> f64 {
    let r = term.data - term.operator * x;
    let fit: f64 = r
        .iter()
        .zip(term.weights.iter())
        .map(|(r, w)| w * r * r)
        .sum();
    fit + gamma
        * x.as_slice()
            .chunks(bands)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
}

/// Minimizer of [`group_lasso_objective`] by accelerated proximal gradient
/// with a fixed iteration budget.
pub fn group_lasso_optimum(
    term: &DenseTerm<'_>,
    bands: usize,
    gamma: f64,
    iterations: usize,
) -> DVector<f64> {
    let n = term.operator.ncols();
    let (h, g) = weighted_normal(std::slice::from_ref(term), n);
    let (h, g) = (h * 2.0, g * 2.0);
    let step = 1.0 / h.symmetric_eigenvalues().max().max(f64::MIN_POSITIVE);
    let mut x = DVector::zeros(n);
    let mut z = x.clone();
    let mut t = 1.0_f64;
    for _ in 0..iterations {
        let mut next = &z - (&h * &z - &g) * step;
        for col in next.as_mut_slice().chunks_mut(bands) {
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let shrink = if norm > gamma * step {
                1.0 - gamma * step / norm
            } else {
                0.0
            };
            col.iter_mut().for_each(|v| *v *= shrink);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimation_columns_are_orthonormal() {
        let s = decimation_matrix(Decimation::uniform(2).unwrap(), 4, 6);
        assert_eq!(s.transpose() * &s, DMatrix::identity(6, 6));
    }

    #[test]
    fn delta_blur_is_identity() {
        assert_eq!(
            blur_matrix(&BlurKernel::delta(), 3, 3),
            DMatrix::identity(9, 9)
        );
    }
}
