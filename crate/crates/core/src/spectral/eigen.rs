use nalgebra::{DMatrix, DVector};

use super::{RankTol, SymOperator};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 50;
const OFF_DIAGONAL_TOL: f64 = 1e-14;

/// Eigenvalues in descending order with orthonormal eigenvectors, split into
/// the numerically positive part (the first `rank` pairs) and the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    rank: usize,
    rank_tolerance: f64,
}

impl SpectralDecomposition {
    pub(super) fn from_pairs(values: DVector<f64>, vectors: DMatrix<f64>, tol: RankTol) -> Self {
        let n = values.len();
        let max_abs = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let rank_tolerance = tol.threshold(n, max_abs);
        let rank = values.iter().take_while(|&&v| v > rank_tolerance).count();
        Self {
            eigenvalues: values,
            eigenvectors: vectors,
            rank,
            rank_tolerance,
        }
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Column `j` is the unit eigenvector for `eigenvalues()[j]`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.rank_tolerance
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvectors of the positive part, as columns.
    pub fn positive_vectors(&self) -> DMatrix<f64> {
        self.eigenvectors.columns(0, self.rank).into_owned()
    }

    /// Eigenvectors spanning the numerical null space, as columns.
    pub fn null_vectors(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.eigenvectors.columns(self.rank, n - self.rank).into_owned()
    }

    /// `Σ_j g(λ_j) f_j f_j^T` over the positive part.
    pub fn positive_function(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..self.rank {
            let f = self.eigenvectors.column(j);
            out.ger(g(self.eigenvalues[j]), &f, &f, 1.0);
        }
        super::symmetrize(&mut out);
        out
    }

    /// `V diag(λ) V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.eigenvectors * DMatrix::from_diagonal(&self.eigenvalues);
        scaled * self.eigenvectors.transpose()
    }
}

/// Eigendecomposition of a symmetric operator with an explicit rank cutoff
/// scale (`None` means the default of 100).
pub fn eig_sym(a: &SymOperator, rank_tol_scale: Option<f64>) -> Result<SpectralDecomposition> {
    if a.matrix().iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite entries".into()));
    }
    let tol = match rank_tol_scale {
        Some(s) => RankTol::new(s)?,
        None => a.rank_tol(),
    };
    Ok(a.clone().with_rank_tol(tol).eig())
}

/// Cyclic Jacobi rotations in row order.
///
/// Stops once the off-diagonal Frobenius norm falls to `1e-14 * ‖A‖_F` or
/// after 50 sweeps. Eigenvalues come back descending; each eigenvector is
/// signed so its largest-magnitude entry (lowest index on ties) is positive.
pub(super) fn jacobi(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let total = m.norm();

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) <= OFF_DIAGONAL_TOL * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s, t);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));

    let values = DVector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).into_owned();
        let mut lead = 0;
        for i in 1..n {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

fn off_diagonal_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += m[(i, j)] * m[(i, j)];
            }
        }
    }
    sum.sqrt()
}

// Applies the rotation zeroing m[(p, q)] to both sides of `m` and accumulates
// it into `v`.
fn rotate(m: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64, t: f64) {
    let n = m.nrows();
    let apq = m[(p, q)];
    let app = m[(p, p)];
    let aqq = m[(q, q)];
    m[(p, p)] = app - t * apq;
    m[(q, q)] = aqq + t * apq;
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        m[(k, p)] = new_kp;
        m[(p, k)] = new_kp;
        m[(k, q)] = new_kq;
        m[(q, k)] = new_kq;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}
