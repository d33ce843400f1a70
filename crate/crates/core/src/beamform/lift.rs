//! Semidefinite lifting machinery: complex Hermitian matrix variables over
//! real parameters, the `[[Re, -Im], [Im, Re]]` PSD embedding, and the
//! linear maps from lifted variables to Fisher-information entries.

use crate::beamform::conic::{AffineExpr, ConicProblem};
use crate::crb::SensingStructure;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Hermitian part `(G + G^H) / 2`.
pub fn herm_part(g: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

/// A complex Hermitian `n x n` matrix variable parameterized by `n^2` reals:
/// the upper-triangle real parts (column-major, diagonal included) followed
/// by the strict-upper-triangle imaginary parts.
#[derive(Debug, Clone, Copy)]
pub struct HermitianVar {
    pub n: usize,
    base: usize,
}

impl HermitianVar {
    pub fn alloc(problem: &mut ConicProblem, n: usize) -> Self {
        let base = problem.add_vars(n * n);
        HermitianVar { n, base }
    }

    fn re_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j);
        self.base + j * (j + 1) / 2 + i
    }

    fn im_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        self.base + self.n * (self.n + 1) / 2 + j * (j - 1) / 2 + i
    }

    /// Linear functional `scale * tr(W G)` for Hermitian data `G`.
    /// `tr(W G) = sum_i X_ii G_ii + 2 sum_{i<j} (X_ij Re G_ij + Y_ij Im G_ij)`.
    pub fn trace_with(&self, g: &DMatrix<Complex64>, scale: f64) -> AffineExpr {
        let mut expr = AffineExpr::default();
        for j in 0..self.n {
            expr.push(self.re_index(j, j), scale * g[(j, j)].re);
            for i in 0..j {
                expr.push(self.re_index(i, j), 2.0 * scale * g[(i, j)].re);
                expr.push(self.im_index(i, j), 2.0 * scale * g[(i, j)].im);
            }
        }
        expr
    }

    /// Plain trace `scale * tr(W)`.
    pub fn trace(&self, scale: f64) -> AffineExpr {
        let mut expr = AffineExpr::default();
        for j in 0..self.n {
            expr.push(self.re_index(j, j), scale);
        }
        expr
    }

    /// Quadratic form `scale * v^H W v` as a linear functional of `W`.
    pub fn quad_form(&self, v: &DVector<Complex64>, scale: f64) -> AffineExpr {
        let n = self.n;
        let g = DMatrix::from_fn(n, n, |r, c| v[r] * v[c].conj());
        self.trace_with(&g, scale)
    }

    /// Emit the PSD constraint through the real symmetric embedding
    /// `[[X, -Y], [Y, X]] >= 0` of `W = X + iY`.
    pub fn constrain_psd(&self, problem: &mut ConicProblem) {
        let n = self.n;
        let dim = 2 * n;
        let mut tri = Vec::with_capacity(dim * (dim + 1) / 2);
        for col in 0..dim {
            for row in 0..=col {
                let expr = if col < n {
                    // Top-left X block.
                    AffineExpr::var(self.re_index(row, col))
                } else if row < n {
                    // Top-right block: -Y, with Y skew-symmetric.
                    let c = col - n;
                    match row.cmp(&c) {
                        std::cmp::Ordering::Less => {
                            AffineExpr::term(self.im_index(row, c), -1.0)
                        }
                        std::cmp::Ordering::Equal => AffineExpr::default(),
                        std::cmp::Ordering::Greater => AffineExpr::var(self.im_index(c, row)),
                    }
                } else {
                    // Bottom-right X block.
                    AffineExpr::var(self.re_index(row - n, col - n))
                };
                tri.push(expr);
            }
        }
        problem.constrain_psd(dim, tri);
    }

    /// Reconstruct the complex Hermitian matrix from a solution vector.
    pub fn extract(&self, x: &[f64]) -> DMatrix<Complex64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                Complex64::new(x[self.re_index(r, r)], 0.0)
            } else if r < c {
                Complex64::new(x[self.re_index(r, c)], x[self.im_index(r, c)])
            } else {
                Complex64::new(x[self.re_index(c, r)], -x[self.im_index(c, r)])
            }
        })
    }

    /// Parameter vector of a fixed Hermitian matrix (for anchors and tests).
    pub fn params_of(matrix: &DMatrix<Complex64>) -> Vec<f64> {
        let n = matrix.nrows();
        let mut out = vec![0.0; n * n];
        let mut idx = 0;
        for j in 0..n {
            for i in 0..=j {
                out[idx] = matrix[(i, j)].re;
                idx += 1;
            }
        }
        for j in 0..n {
            for i in 0..j {
                out[idx] = matrix[(i, j)].im;
                idx += 1;
            }
        }
        out
    }

    /// Write a fixed matrix into a full solution vector at this block's
    /// offsets (test helper for evaluating expressions at known points).
    pub fn write_params(&self, matrix: &DMatrix<Complex64>, x: &mut [f64]) {
        let params = Self::params_of(matrix);
        x[self.base..self.base + params.len()].copy_from_slice(&params);
    }
}

/// A real symmetric `n x n` matrix variable (upper triangle, column-major).
#[derive(Debug, Clone, Copy)]
pub struct SymVar {
    pub n: usize,
    base: usize,
}

impl SymVar {
    pub fn alloc(problem: &mut ConicProblem, n: usize) -> Self {
        let base = problem.add_vars(n * (n + 1) / 2);
        SymVar { n, base }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.base + j * (j + 1) / 2 + i
    }

    pub fn entry(&self, i: usize, j: usize) -> AffineExpr {
        AffineExpr::var(self.index(i, j))
    }

    pub fn trace(&self, scale: f64) -> AffineExpr {
        let mut expr = AffineExpr::default();
        for i in 0..self.n {
            expr.push(self.index(i, i), scale);
        }
        expr
    }

    pub fn extract(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |r, c| x[self.index(r, c)])
    }
}

/// Hermitian data matrices realizing the FIM entries as linear functionals
/// of the lifted variables `(W_1..W_M, R)`:
///
/// `[F_OO]_ij = (2 a^2 / s^2) tr((R + sum W_m) herm(D_i^H D_j))`,
/// `[F_Oa]_i  = (2 a / s^2) tr((R + sum W_m) herm(D_i^H Dt))`,
/// `F_aa      = (2 / s^2) tr((R + sum W_m) Dt^H Dt)`.
#[derive(Debug, Clone)]
pub struct FimLinearMaps {
    /// `herm(D_i^H D_j)` for `i <= j`, indexed by `i * 2K + j`.
    g_omega: Vec<DMatrix<Complex64>>,
    /// `herm(D_i^H Dt)` per angle.
    g_cross: Vec<DMatrix<Complex64>>,
    /// `Dt^H Dt` (already Hermitian).
    g_alpha: DMatrix<Complex64>,
    pub dim_omega: usize,
    pub scale_oo: f64,
    pub scale_oa: f64,
    pub scale_aa: f64,
}

impl FimLinearMaps {
    fn g_omega_at(&self, i: usize, j: usize) -> &DMatrix<Complex64> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        &self.g_omega[i * self.dim_omega + j]
    }

    /// The data matrix for entry `(i, j)` of `F_OO`, Hermitian.
    pub fn data_oo(&self, i: usize, j: usize) -> &DMatrix<Complex64> {
        self.g_omega_at(i, j)
    }

    pub fn data_oa(&self, i: usize) -> &DMatrix<Complex64> {
        &self.g_cross[i]
    }

    pub fn data_aa(&self) -> &DMatrix<Complex64> {
        &self.g_alpha
    }

    /// Affine expression of a FIM entry over all lifted blocks.
    fn entry_expr(
        data: &DMatrix<Complex64>,
        scale: f64,
        w_vars: &[HermitianVar],
        r_var: &HermitianVar,
    ) -> AffineExpr {
        let mut expr = r_var.trace_with(data, scale);
        for w in w_vars {
            expr.add(&w.trace_with(data, scale), 1.0);
        }
        expr
    }

    pub fn f_oo_expr(
        &self,
        i: usize,
        j: usize,
        w_vars: &[HermitianVar],
        r_var: &HermitianVar,
    ) -> AffineExpr {
        Self::entry_expr(self.g_omega_at(i, j), self.scale_oo, w_vars, r_var)
    }

    pub fn f_oa_expr(&self, i: usize, w_vars: &[HermitianVar], r_var: &HermitianVar) -> AffineExpr {
        Self::entry_expr(&self.g_cross[i], self.scale_oa, w_vars, r_var)
    }

    pub fn f_aa_expr(&self, w_vars: &[HermitianVar], r_var: &HermitianVar) -> AffineExpr {
        Self::entry_expr(&self.g_alpha, self.scale_aa, w_vars, r_var)
    }

    /// Evaluate the FIM blocks at fixed lifted matrices (anchor points,
    /// consistency tests).
    pub fn evaluate(
        &self,
        w_lifted: &[DMatrix<Complex64>],
        r_lifted: &DMatrix<Complex64>,
    ) -> (DMatrix<f64>, DVector<f64>, f64) {
        let dk = self.dim_omega;
        let acc = |data: &DMatrix<Complex64>| -> f64 {
            let mut sum = trace_product(r_lifted, data);
            for w in w_lifted {
                sum += trace_product(w, data);
            }
            sum
        };
        let f_oo = DMatrix::from_fn(dk, dk, |i, j| self.scale_oo * acc(self.g_omega_at(i, j)));
        let f_oa = DVector::from_fn(dk, |i, _| self.scale_oa * acc(&self.g_cross[i]));
        let f_aa = self.scale_aa * acc(&self.g_alpha);
        (f_oo, f_oa, f_aa)
    }
}

/// Real trace `tr(W G)` for Hermitian `W`, `G`.
pub fn trace_product(w: &DMatrix<Complex64>, g: &DMatrix<Complex64>) -> f64 {
    let n = w.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        acc += w[(j, j)].re * g[(j, j)].re;
        for i in 0..j {
            acc += 2.0 * (w[(i, j)].re * g[(i, j)].re + w[(i, j)].im * g[(i, j)].im);
        }
    }
    acc
}

/// Precompute the Hermitian data matrices of the FIM linear maps for a fixed
/// scene (angles, sensing gains and their derivatives).
pub fn assemble_fim_linear_maps(
    structure: &SensingStructure,
    alpha: f64,
    sigma_n_w: f64,
) -> FimLinearMaps {
    let dk = structure.d_omega.len();
    let mut g_omega = Vec::with_capacity(dk * dk);
    for i in 0..dk {
        for j in 0..dk {
            if i <= j {
                g_omega.push(herm_part(
                    &(structure.d_omega[i].adjoint() * &structure.d_omega[j]),
                ));
            } else {
                g_omega.push(DMatrix::zeros(0, 0));
            }
        }
    }
    let g_cross = (0..dk)
        .map(|i| herm_part(&(structure.d_omega[i].adjoint() * &structure.d_tilde)))
        .collect();
    let g_alpha = structure.d_tilde.adjoint() * &structure.d_tilde;
    let base = 2.0 / sigma_n_w;
    FimLinearMaps {
        g_omega,
        g_cross,
        g_alpha,
        dim_omega: dk,
        scale_oo: base * alpha * alpha,
        scale_oa: base * alpha,
        scale_aa: base,
    }
}


#[cfg(test)]
impl HermitianVar {
    pub(crate) fn index_re_for_test(&self, i: usize, j: usize) -> usize {
        self.re_index(i, j)
    }
    pub(crate) fn index_im_for_test(&self, i: usize, j: usize) -> usize {
        self.im_index(i, j)
    }
}
