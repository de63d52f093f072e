//! Independent routes to the conditional law, used to cross-check
//! [`condition`](crate::conditioning::condition): the classical
//! generalized-inverse formula and Monte Carlo estimators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{sample_with_root, Gaussian};
use crate::rng::NormalSource;
use crate::spectral::{LinearMap, SymOperator};

/// Minimum number of accepted rows for a binned Monte Carlo estimate.
pub const MIN_ACCEPTED: usize = 100;

const CHUNK_ROWS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Ginv,
    MonteCarlo,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub mean: DVector<f64>,
    pub cov: SymOperator,
    pub method: OracleMethod,
    /// Rows kept by the Monte Carlo bin; `None` for closed-form results.
    pub accepted: Option<usize>,
}

/// `μ + ΣA^T (AΣA^T)^+ (y − Aμ)` and `Σ − ΣA^T (AΣA^T)^+ AΣ`, with the
/// Moore–Penrose inverse taken spectrally.
pub fn ginv_condition(g: &Gaussian, a: &LinearMap, y_obs: &DVector<f64>) -> Result<OracleResult> {
    check_dim("oracle map columns", g.dim(), a.cols())?;
    check_dim("oracle observation length", a.rows(), y_obs.len())?;
    if a.rows() == 0 {
        return Ok(OracleResult {
            mean: g.mean().clone(),
            cov: g.cov().clone(),
            method: OracleMethod::Ginv,
            accepted: None,
        });
    }
    let sigma = g.cov().matrix();
    let a_sigma = a.matrix() * sigma;
    let inner = SymOperator::new(&a_sigma * a.matrix().transpose())?.with_rank_tol(g.rank_tol());
    let gain = a_sigma.transpose() * inner.pinv().matrix();

    let mean = g.mean() + &gain * (y_obs - a.apply(g.mean()));
    // Left unclamped: the reference value carries its own round-off.
    let cov = SymOperator::new(sigma - &gain * &a_sigma)?.with_rank_tol(g.rank_tol());
    Ok(OracleResult {
        mean,
        cov,
        method: OracleMethod::Ginv,
        accepted: None,
    })
}

// Streams `count` draws of Y in fixed-size chunks from one seeded source.
fn for_each_chunk(
    g: &Gaussian,
    count: usize,
    seed: u64,
    mut f: impl FnMut(&DMatrix<f64>),
) -> Result<()> {
    let root = g.cov().sqrt()?;
    let mut src = NormalSource::new(seed);
    let mut left = count;
    while left > 0 {
        let rows = left.min(CHUNK_ROWS);
        let chunk = sample_with_root(g.mean(), root.matrix(), rows, &mut src);
        f(&chunk);
        left -= rows;
    }
    Ok(())
}

/// Empirical mean and covariance of draws of `Y` whose image `TY` lands
/// within `bin_radius` (Euclidean) of `y_obs`.
pub fn mc_conditional_moments(
    g: &Gaussian,
    t: &LinearMap,
    n_samples: usize,
    bin_radius: f64,
    y_obs: &DVector<f64>,
    seed: u64,
) -> Result<OracleResult> {
    check_dim("Monte Carlo map columns", g.dim(), t.cols())?;
    check_dim("Monte Carlo observation length", t.rows(), y_obs.len())?;
    if bin_radius.is_nan() || bin_radius <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "bin radius must be positive, got {bin_radius}"
        )));
    }
    let n = g.dim();
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for_each_chunk(g, n_samples, seed, |chunk| {
        for row in chunk.row_iter() {
            let y = row.transpose();
            if (t.apply(&y) - y_obs).norm() <= bin_radius {
                kept.push(y);
            }
        }
    })?;
    if kept.len() < MIN_ACCEPTED {
        return Err(Error::TooFewAccepted {
            accepted: kept.len(),
            required: MIN_ACCEPTED,
        });
    }
    let k = kept.len() as f64;
    let mut mean = kept.iter().fold(DVector::zeros(n), |acc, y| acc + y) / k;
    // Second pass removes the rounding left in the first mean.
    let shift = kept.iter().fold(DVector::zeros(n), |acc, y| acc + (y - &mean)) / k;
    mean += shift;
    let mut cov = DMatrix::zeros(n, n);
    for y in &kept {
        let c = y - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= k - 1.0;
    let reference = cov.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cov = SymOperator::clamped_psd(cov, reference, g.rank_tol())?;
    Ok(OracleResult {
        mean,
        cov,
        method: OracleMethod::MonteCarlo,
        accepted: Some(kept.len()),
    })
}

/// Largest absolute sample correlation between a coordinate of `SY` and a
/// coordinate of `TY`. Coordinates whose sample variance is below `1e-12`
/// times the largest variance on either side are treated as constant
/// (correlation 0).
pub fn mc_independence(
    g: &Gaussian,
    s: &LinearMap,
    t: &LinearMap,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    check_dim("Monte Carlo first map columns", g.dim(), s.cols())?;
    check_dim("Monte Carlo second map columns", g.dim(), t.cols())?;
    let (m, p) = (s.rows(), t.rows());
    let mut acc = CrossMoments::new(m, p);
    for_each_chunk(g, n_samples, seed, |chunk| {
        let sy = chunk * s.matrix().transpose();
        let ty = chunk * t.matrix().transpose();
        for i in 0..chunk.nrows() {
            acc.push(sy.row(i).iter().copied(), ty.row(i).iter().copied());
        }
    })?;
    Ok(acc.max_abs_correlation())
}

/// Sample correlation of two scalar statistics of `Y`.
pub fn mc_statistic_correlation(
    g: &Gaussian,
    n_samples: usize,
    seed: u64,
    first: impl Fn(&[f64]) -> f64,
    second: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    let mut acc = CrossMoments::new(1, 1);
    let mut buf = vec![0.0; g.dim()];
    for_each_chunk(g, n_samples, seed, |chunk| {
        for row in chunk.row_iter() {
            for (b, v) in buf.iter_mut().zip(row.iter()) {
                *b = *v;
            }
            acc.push(std::iter::once(first(&buf)), std::iter::once(second(&buf)));
        }
    })?;
    Ok(acc.max_abs_correlation())
}

/// Running first and second moments of paired vectors (Welford updates).
struct CrossMoments {
    count: f64,
    mean_a: Vec<f64>,
    mean_b: Vec<f64>,
    m2_a: Vec<f64>,
    m2_b: Vec<f64>,
    cross: DMatrix<f64>,
    delta_a: Vec<f64>,
}

impl CrossMoments {
    fn new(m: usize, p: usize) -> Self {
        Self {
            count: 0.0,
            mean_a: vec![0.0; m],
            mean_b: vec![0.0; p],
            m2_a: vec![0.0; m],
            m2_b: vec![0.0; p],
            cross: DMatrix::zeros(m, p),
            delta_a: vec![0.0; m],
        }
    }

    fn push(&mut self, a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) {
        self.count += 1.0;
        let n = self.count;
        for (i, x) in a.enumerate() {
            let d = x - self.mean_a[i];
            self.delta_a[i] = d;
            self.mean_a[i] += d / n;
            self.m2_a[i] += d * (x - self.mean_a[i]);
        }
        for (j, y) in b.enumerate() {
            let d = y - self.mean_b[j];
            self.mean_b[j] += d / n;
            let d_post = y - self.mean_b[j];
            self.m2_b[j] += d * d_post;
            for i in 0..self.mean_a.len() {
                self.cross[(i, j)] += self.delta_a[i] * d_post;
            }
        }
    }

    fn max_abs_correlation(&self) -> f64 {
        // One floor for both sides: a map that is zero up to round-off must
        // not be compared against itself.
        let floor = 1e-12 * self.m2_a.iter().chain(&self.m2_b).fold(0.0_f64, |m, x| m.max(*x));
        let mut best = 0.0_f64;
        for i in 0..self.mean_a.len() {
            for j in 0..self.mean_b.len() {
                let (va, vb) = (self.m2_a[i], self.m2_b[j]);
                if va <= floor || vb <= floor || va == 0.0 || vb == 0.0 {
                    continue;
                }
                best = best.max((self.cross[(i, j)] / (va * vb).sqrt()).abs());
            }
        }
        best
    }
}
