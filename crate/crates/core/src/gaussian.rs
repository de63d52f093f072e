//! The multivariate Normal law `N(μ, D)` with a possibly singular covariance,
//! its characteristic function, linear images, joint laws of two linear
//! images, the independence criterion, and seeded sampling.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::NormalSource;
use crate::spectral::{max_abs, LinearMap, RankTol, SymOperator};

/// `N(μ, D)`, supported on the affine subspace `μ + R(D)`.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: SymOperator,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: SymOperator) -> Result<Self> {
        check_dim("mean length vs covariance", cov.dim(), mean.len())?;
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("mean has non-finite entries".into()));
        }
        cov.check_psd()?;
        Ok(Self { mean, cov })
    }

    pub fn from_parts(mean: &[f64], cov: &[Vec<f64>]) -> Result<Self> {
        let cov = SymOperator::from_rows(cov)?;
        Self::new(DVector::from_row_slice(mean), cov)
    }

    pub fn standard(n: usize) -> Self {
        Self::new(DVector::zeros(n), SymOperator::identity(n)).expect("N(0, I) is valid")
    }

    pub fn with_rank_tol(self, tol: RankTol) -> Self {
        Self {
            mean: self.mean,
            cov: self.cov.with_rank_tol(tol),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SymOperator {
        &self.cov
    }

    pub fn rank_tol(&self) -> RankTol {
        self.cov.rank_tol()
    }

    /// `Ψ(t) = exp(i⟨t, μ⟩ − ½⟨t, D t⟩)`.
    pub fn char_fn(&self, t: &DVector<f64>) -> Result<Complex<f64>> {
        check_dim("char_fn argument", self.dim(), t.len())?;
        let phase = t.dot(&self.mean);
        let quad = t.dot(&self.cov.apply(t));
        Ok(Complex::from_polar((-0.5 * quad).exp(), phase))
    }

    /// Law of `S Y`: `N(Sμ, S D S^T)`.
    pub fn pushforward(&self, s: &LinearMap) -> Result<Gaussian> {
        check_dim("pushforward map columns", self.dim(), s.cols())?;
        if s.rows() == 0 {
            return Err(Error::InvalidInput("pushforward onto a zero-dimensional space".into()));
        }
        let cov = self.image_cov(s, s)?;
        let cov = SymOperator::clamped_psd(cov, self.image_scale(s, s), self.rank_tol())?;
        Ok(Gaussian {
            mean: s.apply(&self.mean),
            cov,
        })
    }

    fn image_cov(&self, s: &LinearMap, t: &LinearMap) -> Result<DMatrix<f64>> {
        Ok(s.matrix() * self.cov.matrix() * t.matrix().transpose())
    }

    fn image_scale(&self, s: &LinearMap, t: &LinearMap) -> f64 {
        s.norm() * self.cov.norm() * t.norm()
    }

    /// Law of `(SY, TY)` on `ℝ^{m+p}` with covariance blocks
    /// `[[S D S^T, S D T^T], [T D S^T, T D T^T]]`.
    pub fn joint(&self, s: &LinearMap, t: &LinearMap) -> Result<JointGaussian> {
        check_dim("joint: first map columns", self.dim(), s.cols())?;
        check_dim("joint: second map columns", self.dim(), t.cols())?;
        let (m, p) = (s.rows(), t.rows());
        if m + p == 0 {
            return Err(Error::InvalidInput("joint law of two zero-dimensional maps".into()));
        }
        let top = self.marginal_block(s)?;
        let bottom = self.marginal_block(t)?;
        let cross = self.image_cov(s, t)?;

        let mut cov = DMatrix::zeros(m + p, m + p);
        cov.view_mut((0, 0), (m, m)).copy_from(&top);
        cov.view_mut((m, m), (p, p)).copy_from(&bottom);
        cov.view_mut((0, m), (m, p)).copy_from(&cross);
        cov.view_mut((m, 0), (p, m)).copy_from(&cross.transpose());

        let mut mean = DVector::zeros(m + p);
        mean.rows_mut(0, m).copy_from(&s.apply(&self.mean));
        mean.rows_mut(m, p).copy_from(&t.apply(&self.mean));

        let scale = self.cov.norm() * (s.norm() + t.norm()).powi(2);
        Ok(JointGaussian {
            mean,
            cov: SymOperator::new(cov)?.with_rank_tol(self.rank_tol()),
            split: m,
            scale,
        })
    }

    // Same arithmetic as `pushforward`, so marginal blocks match it exactly.
    fn marginal_block(&self, s: &LinearMap) -> Result<DMatrix<f64>> {
        if s.rows() == 0 {
            return Ok(DMatrix::zeros(0, 0));
        }
        Ok(self.pushforward(s)?.cov.into_matrix())
    }

    /// `SY` and `TY` are independent iff `S D T^T = 0`; decided at
    /// `1e-10 · (1 + ‖S‖‖D‖‖T‖)`.
    pub fn independence_test(&self, s: &LinearMap, t: &LinearMap) -> Result<Independence> {
        check_dim("independence: first map columns", self.dim(), s.cols())?;
        check_dim("independence: second map columns", self.dim(), t.cols())?;
        let residual = max_abs(&self.image_cov(s, t)?);
        let tolerance = INDEPENDENCE_REL_TOL * (1.0 + self.image_scale(s, t));
        Ok(Independence {
            independent: residual <= tolerance,
            residual,
            tolerance,
        })
    }

    /// `count` i.i.d. draws `μ + D^{1/2} Z` as the rows of a matrix.
    pub fn sample(&self, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        let root = self.cov.sqrt()?;
        let mut src = NormalSource::new(seed);
        Ok(sample_with_root(&self.mean, root.matrix(), count, &mut src))
    }
}

pub(crate) fn sample_with_root(
    mean: &DVector<f64>,
    root: &DMatrix<f64>,
    count: usize,
    src: &mut NormalSource,
) -> DMatrix<f64> {
    let n = mean.len();
    let mut z = DMatrix::zeros(count, n);
    let mut buf = vec![0.0; n];
    for i in 0..count {
        src.fill_normal(&mut buf);
        for (j, v) in buf.iter().enumerate() {
            z[(i, j)] = *v;
        }
    }
    // Rows are z^T D^{1/2}; D^{1/2} is symmetric.
    let mut out = z * root;
    for mut row in out.row_iter_mut() {
        row += mean.transpose();
    }
    out
}

pub const INDEPENDENCE_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Independence {
    pub independent: bool,
    pub residual: f64,
    pub tolerance: f64,
}

/// Joint law of `(SY, TY)`; the first `split` coordinates belong to `SY`.
#[derive(Debug, Clone)]
pub struct JointGaussian {
    mean: DVector<f64>,
    cov: SymOperator,
    split: usize,
    scale: f64,
}

impl JointGaussian {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SymOperator {
        &self.cov
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn block(&self, row: usize, col: usize) -> DMatrix<f64> {
        let m = self.split;
        let p = self.mean.len() - m;
        let (r0, nr) = if row == 0 { (0, m) } else { (m, p) };
        let (c0, nc) = if col == 0 { (0, m) } else { (m, p) };
        self.cov.matrix().view((r0, c0), (nr, nc)).into_owned()
    }

    /// The joint law as a plain Gaussian, with covariance round-off clamped.
    pub fn to_gaussian(&self) -> Result<Gaussian> {
        let cov = SymOperator::clamped_psd(self.cov.matrix().clone(), self.scale, self.cov.rank_tol())?;
        Gaussian::new(self.mean.clone(), cov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j_projector(n: usize) -> LinearMap {
        LinearMap::new(DMatrix::from_element(n, n, 1.0 / n as f64)).unwrap()
    }

    fn complement(p: &LinearMap) -> LinearMap {
        let n = p.cols();
        LinearMap::new(DMatrix::identity(n, n) - p.matrix()).unwrap()
    }

    fn remark_operator() -> SymOperator {
        SymOperator::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap()
    }

    #[test]
    fn rejects_mismatched_and_indefinite() {
        let cov = SymOperator::identity(2);
        assert!(matches!(
            Gaussian::new(DVector::zeros(3), cov),
            Err(Error::Dim { .. })
        ));
        let bad = SymOperator::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            Gaussian::new(DVector::zeros(2), bad),
            Err(Error::NotPositive { .. })
        ));
    }

    #[test]
    fn char_fn_examples() {
        let g = Gaussian::from_parts(&[1.0, -2.0], &[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let v = g.char_fn(&DVector::zeros(2)).unwrap();
        assert_eq!((v.re, v.im), (1.0, 0.0));

        let z = Gaussian::standard(2);
        let v = z.char_fn(&DVector::from_row_slice(&[1.0, 1.0])).unwrap();
        assert!((v.re - (-1.0f64).exp()).abs() < 1e-15);
        assert!(v.im.abs() < 1e-15);

        let point = Gaussian::from_parts(&[0.5, 2.0], &[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let t = DVector::from_row_slice(&[0.3, -1.1]);
        let v = point.char_fn(&t).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-15);
        assert!((v.arg() - t.dot(point.mean())).abs() < 1e-15);

        assert!(matches!(z.char_fn(&DVector::zeros(3)), Err(Error::Dim { .. })));
    }

    #[test]
    fn pushforward_examples() {
        let g = Gaussian::from_parts(&[1.0, 2.0], &[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let same = g.pushforward(&LinearMap::identity(2)).unwrap();
        assert_eq!(same.mean(), g.mean());
        assert_eq!(same.cov().matrix(), g.cov().matrix());

        let sum = LinearMap::from_rows(&[vec![1.0, 1.0]], None).unwrap();
        let h = Gaussian::standard(2).pushforward(&sum).unwrap();
        assert_eq!(h.mean()[0], 0.0);
        assert_eq!(h.cov().matrix()[(0, 0)], 2.0);

        let g = Gaussian::from_parts(&[1.0, 2.0], &[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let second = LinearMap::from_rows(&[vec![0.0, 1.0]], None).unwrap();
        let h = g.pushforward(&second).unwrap();
        assert_eq!(h.mean()[0], 2.0);
        assert_eq!(h.cov().matrix()[(0, 0)], 0.0);
    }

    #[test]
    fn joint_examples() {
        let mu = [1.0, -1.0];
        let g = Gaussian::from_parts(&mu, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let i = LinearMap::identity(2);
        let j = g.joint(&i, &i).unwrap();
        assert_eq!(j.mean().as_slice(), &[1.0, -1.0, 1.0, -1.0]);
        for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert_eq!(j.block(r, c), DMatrix::identity(2, 2));
        }

        let p = j_projector(2);
        let q = complement(&p);
        let j = Gaussian::standard(2).joint(&p, &q).unwrap();
        assert!(max_abs(&j.block(0, 1)) < 1e-15);
        assert!(max_abs(&j.block(1, 0)) < 1e-15);
    }

    #[test]
    fn independence_examples() {
        let p = j_projector(2);
        let q = complement(&p);
        let z = Gaussian::standard(2);
        assert!(z.independence_test(&p, &q).unwrap().independent);
        let i = LinearMap::identity(2);
        let r = z.independence_test(&i, &i).unwrap();
        assert!(!r.independent);
        assert_eq!(r.residual, 1.0);

        let g = Gaussian::new(DVector::zeros(2), remark_operator()).unwrap();
        assert!(g.independence_test(&p, &q).unwrap().independent);
        assert!(g.independence_test(&q, &p).unwrap().independent);

        // A covariance without J as eigenvector couples the two parts.
        let h = Gaussian::from_parts(&[0.0, 0.0], &[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert!(!h.independence_test(&p, &q).unwrap().independent);
    }

    #[test]
    fn sampling_point_mass_and_singular() {
        let mu = [3.0, -4.0];
        let point = Gaussian::from_parts(&mu, &[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let rows = point.sample(5, 1).unwrap();
        for r in rows.row_iter() {
            assert_eq!(r.iter().copied().collect::<Vec<_>>(), mu.to_vec());
        }

        let g = Gaussian::from_parts(&[0.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let rows = g.sample(1000, 9).unwrap();
        assert!(rows.column(1).iter().all(|&x| x == 0.0));
        assert!(rows.column(0).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn sampling_is_reproducible_and_matches_moments() {
        let z = Gaussian::standard(2);
        let a = z.sample(100_000, 2024).unwrap();
        let b = z.sample(100_000, 2024).unwrap();
        assert_eq!(a, b);

        let n = a.nrows() as f64;
        let mean = a.row_mean();
        let centered = DMatrix::from_fn(a.nrows(), 2, |i, j| a[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / (n - 1.0);
        for j in 0..2 {
            assert!(mean[j].abs() <= 3.0 / n.sqrt());
        }
        assert!(max_abs(&(cov - DMatrix::identity(2, 2))) <= 5.0 / n.sqrt());
    }
}
