//! Least-squares readout solve via Householder QR and back substitution,
//! replacing an explicit pseudo-inverse.
//!
//! Householder reflections (rather than Gram-Schmidt) because the hidden
//! activation columns can be strongly correlated once the sigmoids saturate;
//! near-singular triangular factors fall back to a small ridge term.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Outcome of a least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub enum RankFlag {
    FullRank,
    Regularized,
}

#[derive(Debug, Clone)]
pub struct LsqSolution {
    pub beta: Vec<f64>,
    /// `||H beta - Y||_2`.
    pub residual_norm: f64,
    pub rank_flag: RankFlag,
    /// Ridge term used by the fallback path; zero when full rank.
    pub ridge_lambda: f64,
}

/// Internal column-major factorization state: the reflectors live below the
/// diagonal of `a`, the triangular factor on and above it.
struct Householder {
    n: usize,
    m: usize,
    /// Column-major working copy of A with reflectors packed below the
    /// diagonal.
    a: Vec<f64>,
    /// Diagonal of R (the packed diagonal slots hold reflector heads).
    r_diag: Vec<f64>,
    /// Reflector scaling factors.
    tau: Vec<f64>,
}

impl Householder {
    fn factor(matrix: &DenseTensor) -> Result<Self> {
        let dims = matrix.dims();
        if dims.len() != 2 {
            return Err(Error::Dimension(format!(
                "QR expects a 2-axis matrix, got {:?}",
                dims
            )));
        }
        let (n, m) = (dims[0], dims[1]);
        if n < m {
            return Err(Error::Underdetermined { n, m });
        }
        matrix.assert_finite("QR input")?;

        // Column-major copy for stride-1 column updates.
        let mut a = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                a[j * n + i] = matrix.get2(i, j);
            }
        }
        let mut r_diag = vec![0.0; m];
        let mut tau = vec![0.0; m];

        for k in 0..m {
            let col = &mut a[k * n..(k + 1) * n];
            let norm = col[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                r_diag[k] = 0.0;
                tau[k] = 0.0;
                continue;
            }
            let alpha = if col[k] >= 0.0 { -norm } else { norm };
            r_diag[k] = alpha;
            // v = x - alpha e_k, normalized so v[k] = 1.
            let head = col[k] - alpha;
            col[k] = head;
            if head != 0.0 {
                for v in col[k + 1..].iter_mut() {
                    *v /= head;
                }
            }
            let v_norm_sq = 1.0
                + a[k * n + k + 1..(k + 1) * n]
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>();
            tau[k] = 2.0 / v_norm_sq;
            a[k * n + k] = 1.0;

            // Apply the reflector to the remaining columns.
            for j in (k + 1)..m {
                let mut dot = 0.0;
                for i in k..n {
                    dot += a[k * n + i] * a[j * n + i];
                }
                let scale = tau[k] * dot;
                for i in k..n {
                    a[j * n + i] = a[j * n + i] - scale * a[k * n + i];
                }
            }
        }
        Ok(Self { n, m, a, r_diag, tau })
    }

    /// Apply `Q^T` to a vector of length n.
    fn q_transpose_apply(&self, y: &[f64]) -> Vec<f64> {
        let mut z = y.to_vec();
        for k in 0..self.m {
            if self.tau[k] == 0.0 {
                continue;
            }
            let mut dot = 0.0;
            for i in k..self.n {
                dot += self.a[k * self.n + i] * z[i];
            }
            let scale = self.tau[k] * dot;
            for i in k..self.n {
                z[i] -= scale * self.a[k * self.n + i];
            }
        }
        z
    }

    /// Materialize the economy factors `(Q: n x M, R: M x M)`.
    fn economy(&self) -> (DenseTensor, DenseTensor) {
        let (n, m) = (self.n, self.m);
        let mut r = DenseTensor::zeros(&[m, m]).expect("nonzero dims");
        for k in 0..m {
            r.set2(k, k, self.r_diag[k]);
            for j in (k + 1)..m {
                r.set2(k, j, self.a[j * n + k]);
            }
        }
        // Q = (I - tau_0 v_0 v_0^T) ... applied to the first M identity
        // columns, building back-to-front.
        let mut q = DenseTensor::zeros(&[n, m]).expect("nonzero dims");
        let mut col = vec![0.0; n];
        for j in 0..m {
            col.fill(0.0);
            col[j] = 1.0;
            for k in (0..m).rev() {
                if self.tau[k] == 0.0 {
                    continue;
                }
                let mut dot = 0.0;
                for i in k..n {
                    dot += self.a[k * n + i] * col[i];
                }
                let scale = self.tau[k] * dot;
                for i in k..n {
                    col[i] -= scale * self.a[k * n + i];
                }
            }
            for i in 0..n {
                q.set2(i, j, col[i]);
            }
        }
        (q, r)
    }

    fn r_matrix(&self) -> DenseTensor {
        self.economy().1
    }
}

/// Economy QR factorization `A = Q R` with `Q: n x M` orthonormal columns and
/// `R: M x M` upper triangular. Requires `n >= M`.
pub fn qr_factor(a: &DenseTensor) -> Result<(DenseTensor, DenseTensor)> {
    Ok(Householder::factor(a)?.economy())
}

/// Solve `R beta = z` for upper triangular `R`, rejecting tiny diagonals.
pub fn back_substitute(r: &DenseTensor, z: &[f64]) -> Result<Vec<f64>> {
    let dims = r.dims();
    if dims.len() != 2 || dims[0] != dims[1] || dims[0] != z.len() {
        return Err(Error::Dimension(format!(
            "back substitution expects square R matching z, got {:?} and {}",
            dims,
            z.len()
        )));
    }
    let m = dims[0];
    let max_r = r
        .data()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let threshold = f64::EPSILON * m as f64 * max_r;
    let mut beta = vec![0.0; m];
    for k in (0..m).rev() {
        let diag = r.get2(k, k);
        if diag.abs() <= threshold {
            return Err(Error::SingularTriangular { index: k });
        }
        let mut sum = z[k];
        for j in (k + 1)..m {
            sum -= r.get2(k, j) * beta[j];
        }
        beta[k] = sum / diag;
    }
    Ok(beta)
}

/// Solve `min_beta ||H beta - Y||^2` by QR + back substitution; on a
/// near-singular triangular factor, retry with ridge term
/// `lambda = 1e-8 * trace(H^T H) / M` via the augmented system
/// `[H; sqrt(lambda) I]`.
pub fn solve_lsq(h: &DenseTensor, y: &[f64]) -> Result<LsqSolution> {
    let dims = h.dims();
    if dims.len() != 2 {
        return Err(Error::Dimension(format!(
            "solve_lsq expects a 2-axis design matrix, got {:?}",
            dims
        )));
    }
    let (n, m) = (dims[0], dims[1]);
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "Y has {} entries for {} rows",
            y.len(),
            n
        )));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("solve_lsq targets"));
    }

    let fact = Householder::factor(h)?;
    let z = fact.q_transpose_apply(y);
    match back_substitute(&fact.r_matrix(), &z[..m]) {
        Ok(beta) => Ok(LsqSolution {
            residual_norm: residual_norm(h, &beta, y),
            beta,
            rank_flag: RankFlag::FullRank,
            ridge_lambda: 0.0,
        }),
        Err(Error::SingularTriangular { .. }) => {
            let trace = (0..m)
                .map(|j| (0..n).map(|i| h.get2(i, j).powi(2)).sum::<f64>())
                .sum::<f64>();
            let lambda = 1e-8 * trace / m as f64;
            let sqrt_l = lambda.sqrt();
            let mut aug = DenseTensor::zeros(&[n + m, m])?;
            for i in 0..n {
                for j in 0..m {
                    aug.set2(i, j, h.get2(i, j));
                }
            }
            for j in 0..m {
                aug.set2(n + j, j, sqrt_l);
            }
            let mut y_aug = y.to_vec();
            y_aug.extend(std::iter::repeat(0.0).take(m));
            let fact = Householder::factor(&aug)?;
            let z = fact.q_transpose_apply(&y_aug);
            let beta = back_substitute(&fact.r_matrix(), &z[..m])?;
            Ok(LsqSolution {
                residual_norm: residual_norm(h, &beta, y),
                beta,
                rank_flag: RankFlag::Regularized,
                ridge_lambda: lambda,
            })
        }
        Err(e) => Err(e),
    }
}

fn residual_norm(h: &DenseTensor, beta: &[f64], y: &[f64]) -> f64 {
    let (n, m) = (h.dims()[0], h.dims()[1]);
    let mut acc = 0.0;
    for i in 0..n {
        let mut pred = 0.0;
        for j in 0..m {
            pred += h.get2(i, j) * beta[j];
        }
        acc += (pred - y[i]) * (pred - y[i]);
    }
    acc.sqrt()
}
