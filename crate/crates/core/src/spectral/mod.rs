//! Symmetric operators and the spectral calculus built on them: square roots,
//! pseudo-inverse square roots, orthogonal projectors onto ranges and null
//! spaces, and the invertible factor `U` with `U T = Π_{R(T*)}`.

mod calculus;
mod eigen;
mod invertible;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use calculus::{null_projector, pseudo_inverse, range_adjoint_projector};
pub use eigen::{eig_sym, SpectralDecomposition};
pub use invertible::{build_u, extend_injective_to_invertible, lu_min_pivot, LuReport};

/// Relative cutoff separating numerically positive eigenvalues from zero ones.
///
/// An eigenvalue counts as positive when it exceeds
/// `scale * n * max|λ| * f64::EPSILON`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankTol {
    scale: f64,
}

impl RankTol {
    pub const DEFAULT_SCALE: f64 = 100.0;

    pub fn new(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "rank tolerance scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn threshold(&self, n: usize, max_abs_eigenvalue: f64) -> f64 {
        self.scale * n as f64 * max_abs_eigenvalue * f64::EPSILON
    }
}

impl Default for RankTol {
    fn default() -> Self {
        Self {
            scale: Self::DEFAULT_SCALE,
        }
    }
}

#[derive(Debug, Clone)]
struct EigenPairs {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

/// A real symmetric `n × n` operator.
///
/// Symmetry is enforced at construction by averaging with the transpose. The
/// eigendecomposition is computed lazily once and shared by every spectral
/// function called on the operator.
#[derive(Debug, Clone)]
pub struct SymOperator {
    entries: DMatrix<f64>,
    tol: RankTol,
    eigen: OnceLock<EigenPairs>,
}

impl SymOperator {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("operator dimension must be at least 1".into()));
        }
        if entries.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "operator must be square, got {}x{}",
                n,
                entries.ncols()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("operator has non-finite entries".into()));
        }
        let mut sym = entries;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (sym[(i, j)] + sym[(j, i)]);
                sym[(i, j)] = avg;
                sym[(j, i)] = avg;
            }
        }
        debug_assert!(sym == sym.transpose());
        Ok(Self {
            entries: sym,
            tol: RankTol::default(),
            eigen: OnceLock::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows, None)?)
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is a valid operator")
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(DMatrix::zeros(n, n)).expect("zero is a valid operator")
    }

    /// Returns the same operator with a different rank cutoff.
    pub fn with_rank_tol(mut self, tol: RankTol) -> Self {
        // Eigenpairs do not depend on the cutoff, so the cache survives.
        self.tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn rank_tol(&self) -> RankTol {
        self.tol
    }

    fn eigen_pairs(&self) -> &EigenPairs {
        self.eigen.get_or_init(|| {
            let (values, vectors) = eigen::jacobi(&self.entries);
            EigenPairs { values, vectors }
        })
    }

    /// Spectral decomposition under this operator's rank tolerance.
    pub fn eig(&self) -> SpectralDecomposition {
        let pairs = self.eigen_pairs();
        SpectralDecomposition::from_pairs(pairs.values.clone(), pairs.vectors.clone(), self.tol)
    }

    pub fn rank(&self) -> usize {
        self.eig().rank()
    }

    /// Largest absolute eigenvalue (the operator 2-norm).
    pub fn norm(&self) -> f64 {
        self.eigen_pairs().values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen_pairs().values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Symmetrizes a computed covariance and clamps round-off.
    ///
    /// Eigenvalues at or below `tol.threshold(n, reference_norm)` (or the
    /// operator's own rank tolerance, whichever is larger) are set to zero;
    /// anything more negative than that is rejected. `reference_norm` should
    /// bound the magnitude of the factors the matrix was composed from.
    pub fn clamped_psd(entries: DMatrix<f64>, reference_norm: f64, tol: RankTol) -> Result<Self> {
        let op = Self::new(entries)?.with_rank_tol(tol);
        let dec = op.eig();
        let cutoff = dec
            .rank_tolerance()
            .max(tol.threshold(op.dim(), reference_norm));
        let values = dec.eigenvalues();
        if let Some(&min) = values.iter().find(|&&v| v < -cutoff) {
            return Err(Error::NotPositive {
                eigenvalue: min,
                tolerance: cutoff,
            });
        }
        if values.iter().all(|&v| v > cutoff || v == 0.0) {
            return Ok(op);
        }
        let clamped = values.map(|v| if v > cutoff { v } else { 0.0 });
        let vectors = dec.eigenvectors().clone();
        let mut m = &vectors * DMatrix::from_diagonal(&clamped) * vectors.transpose();
        symmetrize(&mut m);
        let out = Self::new(m)?.with_rank_tol(tol);
        let _ = out.eigen.set(EigenPairs {
            values: clamped,
            vectors,
        });
        Ok(out)
    }

    /// Fails with `NotPositive` if an eigenvalue lies below `-rank_tolerance`.
    pub fn check_psd(&self) -> Result<()> {
        let dec = self.eig();
        let min = self.min_eigenvalue();
        if min < -dec.rank_tolerance() {
            return Err(Error::NotPositive {
                eigenvalue: min,
                tolerance: dec.rank_tolerance(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.entries * v
    }

    /// Positive square root `D^{1/2}`.
    pub fn sqrt(&self) -> Result<SymOperator> {
        calculus::sqrt(self)
    }

    /// Pseudo-inverse square root `D^{-1/2}`: inverts `D^{1/2}` on `R(D)`
    /// and vanishes on `N(D)`.
    pub fn pinv_sqrt(&self) -> Result<SymOperator> {
        calculus::pinv_sqrt(self)
    }

    /// Moore–Penrose pseudo-inverse of a symmetric operator.
    pub fn pinv(&self) -> SymOperator {
        calculus::sym_pinv(self)
    }

    /// Orthogonal projector onto `R(D)`.
    pub fn range_projector(&self) -> Projector {
        calculus::range_projector(self)
    }

    /// Orthogonal projector onto `N(D)`.
    pub fn null_projector(&self) -> Projector {
        self.range_projector().complement()
    }
}

/// A real linear map `ℝ^cols → ℝ^rows`. Zero-row maps are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    entries: DMatrix<f64>,
}

impl LinearMap {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.ncols() == 0 {
            return Err(Error::InvalidInput("linear map needs at least one column".into()));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("linear map has non-finite entries".into()));
        }
        Ok(Self { entries })
    }

    /// Builds a map from row vectors; `cols` is needed only when `rows` is empty.
    pub fn from_rows(rows: &[Vec<f64>], cols: Option<usize>) -> Result<Self> {
        Self::new(matrix_from_rows(rows, cols)?)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            entries: DMatrix::zeros(rows, cols),
        }
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn transpose(&self) -> LinearMap {
        LinearMap {
            entries: self.entries.transpose(),
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.entries * v
    }

    /// `T^T T`, a positive operator on the domain.
    pub fn gram(&self, tol: RankTol) -> SymOperator {
        SymOperator::new(self.entries.transpose() * &self.entries)
            .expect("gram matrix of a finite map is finite")
            .with_rank_tol(tol)
    }

    /// Operator 2-norm.
    pub fn norm(&self) -> f64 {
        if self.rows() == 0 {
            return 0.0;
        }
        self.gram(RankTol::default()).norm().sqrt()
    }
}

impl From<&SymOperator> for LinearMap {
    fn from(op: &SymOperator) -> Self {
        LinearMap {
            entries: op.matrix().clone(),
        }
    }
}

impl From<&Projector> for LinearMap {
    fn from(p: &Projector) -> Self {
        LinearMap {
            entries: p.matrix().clone(),
        }
    }
}

/// An orthogonal projector, stored as a symmetric idempotent matrix together
/// with the dimension of the subspace it projects onto.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    entries: DMatrix<f64>,
    subspace_rank: usize,
}

impl Projector {
    /// Projector `Q Q^T` onto the span of the orthonormal columns of `q`.
    pub fn from_orthonormal_columns(n: usize, q: &DMatrix<f64>) -> Self {
        let k = q.ncols();
        let mut p = if k == 0 {
            DMatrix::zeros(n, n)
        } else {
            q * q.transpose()
        };
        symmetrize(&mut p);
        Projector {
            entries: p,
            subspace_rank: k,
        }
    }

    pub fn identity(n: usize) -> Self {
        Projector {
            entries: DMatrix::identity(n, n),
            subspace_rank: n,
        }
    }

    pub fn zero(n: usize) -> Self {
        Projector {
            entries: DMatrix::zeros(n, n),
            subspace_rank: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn rank(&self) -> usize {
        self.subspace_rank
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `I − P`, the projector onto the orthogonal complement.
    pub fn complement(&self) -> Projector {
        let n = self.dim();
        let mut q = DMatrix::identity(n, n) - &self.entries;
        symmetrize(&mut q);
        Projector {
            entries: q,
            subspace_rank: n - self.subspace_rank,
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.entries * v
    }

    /// Largest violation among symmetry, idempotence and the trace condition.
    pub fn invariant_residuals(&self) -> (f64, f64, f64) {
        let p = &self.entries;
        let sym = max_abs(&(p - p.transpose()));
        let idem = max_abs(&(p * p - p));
        let trace = (p.trace() - self.subspace_rank as f64).abs();
        (sym, idem, trace)
    }
}

/// Largest absolute entry; zero for empty matrices.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], cols: Option<usize>) -> Result<DMatrix<f64>> {
    let ncols = match (rows.first(), cols) {
        (Some(r), _) => r.len(),
        (None, Some(c)) => c,
        (None, None) => {
            return Err(Error::InvalidInput(
                "empty matrix needs an explicit column count".into(),
            ))
        }
    };
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::InvalidInput(format!(
                "row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
