//! Seeded random problem instances: PSD covariances and linear maps of a
//! prescribed rank. Used by the property suites, the benches and the tests.

use nalgebra::{DMatrix, DVector};

use crate::gaussian::Gaussian;
use crate::rng::NormalSource;
use crate::spectral::{LinearMap, RankTol, SymOperator};

pub fn normal_matrix(src: &mut NormalSource, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for x in m.iter_mut() {
        *x = src.normal();
    }
    m
}

pub fn normal_vector(src: &mut NormalSource, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| src.normal())
}

/// `L L^T` with `L` an `n × rank` Gaussian matrix; rank is exact with
/// probability one.
pub fn random_psd(src: &mut NormalSource, n: usize, rank: usize) -> SymOperator {
    let l = normal_matrix(src, n, rank);
    let d = if rank == 0 {
        DMatrix::zeros(n, n)
    } else {
        &l * l.transpose()
    };
    SymOperator::new(d).expect("finite by construction")
}

/// Random symmetric (generally indefinite) operator.
pub fn random_symmetric(src: &mut NormalSource, n: usize) -> SymOperator {
    let a = normal_matrix(src, n, n);
    SymOperator::new(&a + a.transpose()).expect("finite by construction")
}

/// `A B` with `A` `m × rank` and `B` `rank × n`.
pub fn random_map(src: &mut NormalSource, m: usize, n: usize, rank: usize) -> LinearMap {
    let rank = rank.min(m).min(n);
    let t = if rank == 0 {
        DMatrix::zeros(m, n)
    } else {
        normal_matrix(src, m, rank) * normal_matrix(src, rank, n)
    };
    LinearMap::new(t).expect("finite by construction")
}

/// One conditioning problem: a Gaussian, a map, and a realization of `Y`
/// (so `T y` lies on the support of `TY`).
#[derive(Debug, Clone)]
pub struct ConditioningInstance {
    pub gaussian: Gaussian,
    pub map: LinearMap,
    pub realization: DVector<f64>,
    pub rank_d: usize,
    pub rank_t: usize,
}

impl ConditioningInstance {
    pub fn observation(&self) -> DVector<f64> {
        self.map.apply(&self.realization)
    }
}

/// `n` uniform in `1..=max_n`, `rank(D)` uniform in `0..=n`, `m` uniform in
/// `0..=n`, `rank(T)` uniform in `0..=min(m, n)`.
pub fn conditioning_instance(src: &mut NormalSource, max_n: usize, tol: RankTol) -> ConditioningInstance {
    let n = src.int_in(1, max_n);
    let rank_d = src.int_in(0, n);
    let m = src.int_in(0, n);
    let rank_t = src.int_in(0, m);
    conditioning_instance_with(src, n, rank_d, m, rank_t, tol)
}

pub fn conditioning_instance_with(
    src: &mut NormalSource,
    n: usize,
    rank_d: usize,
    m: usize,
    rank_t: usize,
    tol: RankTol,
) -> ConditioningInstance {
    let cov = random_psd(src, n, rank_d).with_rank_tol(tol);
    let mean = normal_vector(src, n);
    let gaussian = Gaussian::new(mean, cov).expect("L L^T is positive");
    let map = random_map(src, m, n, rank_t);
    let root = gaussian.cov().sqrt().expect("positive");
    let realization = gaussian.mean() + root.matrix() * normal_vector(src, n);
    ConditioningInstance {
        gaussian,
        map,
        realization,
        rank_d,
        rank_t,
    }
}
