use nalgebra::{DMatrix, DVector};

use super::{LinearMap, RankTol};
use crate::error::{check_dim, Error, Result};

/// A vector counts as dependent on the ones already chosen when less than
/// this fraction of its norm survives orthogonalization.
const INDEPENDENCE_TOL: f64 = 1e-10;

/// Outcome of an LU factorization with partial pivoting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LuReport {
    pub min_pivot: f64,
    pub frobenius_norm: f64,
}

impl LuReport {
    /// True when every pivot exceeds `rel * ‖A‖_F`.
    pub fn is_invertible(&self, rel: f64) -> bool {
        self.min_pivot > rel * self.frobenius_norm
    }
}

pub fn lu_min_pivot(a: &DMatrix<f64>) -> LuReport {
    let lu = a.clone().lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, p| m.min(p.abs()));
    LuReport {
        min_pivot,
        frobenius_norm: a.norm(),
    }
}

/// Gram–Schmidt with column pivoting: at every step the candidate with the
/// largest surviving fraction of its norm is orthonormalized next. Returns the
/// orthonormal columns found; stops early on dependence.
fn pivoted_gram_schmidt(vectors: &[DVector<f64>], start: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = start.to_vec();
    let norms: Vec<f64> = vectors.iter().map(|v| v.norm()).collect();
    let mut residuals: Vec<DVector<f64>> = vectors.to_vec();
    for r in residuals.iter_mut() {
        orthogonalize(r, &basis);
    }
    let mut remaining: Vec<usize> = (0..vectors.len()).collect();
    let mut found = Vec::new();
    while !remaining.is_empty() {
        let (pos, frac) = remaining
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                let frac = if norms[i] > 0.0 {
                    residuals[i].norm() / norms[i]
                } else {
                    0.0
                };
                (pos, frac)
            })
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if frac <= INDEPENDENCE_TOL {
            break;
        }
        let i = remaining.remove(pos);
        let mut q = residuals[i].clone();
        orthogonalize(&mut q, &basis);
        q /= q.norm();
        for &j in &remaining {
            let c = q.dot(&residuals[j]);
            residuals[j].axpy(-c, &q, 1.0);
        }
        basis.push(q.clone());
        found.push(q);
    }
    found
}

// Two passes of classical Gram–Schmidt against an orthonormal set.
fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(v);
            v.axpy(-c, q, 1.0);
        }
    }
}

/// Orthonormal basis of the orthogonal complement of `span(basis)`, where
/// `basis` is already orthonormal.
fn complement_basis(n: usize, basis: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let standard: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect();
    let mut out = pivoted_gram_schmidt(&standard, basis);
    out.truncate(n - basis.len());
    out
}

fn columns(n: usize, vs: &[DVector<f64>]) -> DMatrix<f64> {
    if vs.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(vs)
    }
}

/// Extends the injective map `basis_in[j] ↦ images[j]`, defined on
/// `W = span(basis_in)`, to an invertible operator on `ℝ^n`.
///
/// With `Q` an orthonormal basis of `W^⊥` and `X` one of `span(images)^⊥`,
/// a vector `v = w + Σ c_j q_j` is sent to `𝒰 w + Σ c_j x_j`.
pub fn extend_injective_to_invertible(
    basis_in: &[DVector<f64>],
    images: &[DVector<f64>],
) -> Result<DMatrix<f64>> {
    check_dim("image count", basis_in.len(), images.len())?;
    let n = match basis_in.first().or(images.first()) {
        Some(v) => v.len(),
        None => {
            return Err(Error::InvalidInput(
                "need at least one vector to infer the dimension".into(),
            ))
        }
    };
    for v in basis_in.iter().chain(images) {
        check_dim("vector length", n, v.len())?;
    }
    let k = basis_in.len();
    if k > n {
        return Err(Error::NotInjective { which: "basis_in" });
    }

    let w_basis = pivoted_gram_schmidt(basis_in, &[]);
    if w_basis.len() < k {
        return Err(Error::NotInjective { which: "basis_in" });
    }
    let r_basis = pivoted_gram_schmidt(images, &[]);
    if r_basis.len() < k {
        return Err(Error::NotInjective { which: "images" });
    }
    let q = columns(n, &complement_basis(n, &w_basis));
    let x = columns(n, &complement_basis(n, &r_basis));

    let mut u = &x * q.transpose();
    if k > 0 {
        let b = columns(n, basis_in);
        let im = columns(n, images);
        // Coordinates of Π_W v in the (non-orthogonal) basis B: (B^T B)^{-1} B^T v.
        let gram = b.transpose() * &b;
        let coords = gram
            .lu()
            .solve(&b.transpose())
            .ok_or(Error::NotInjective { which: "basis_in" })?;
        u += im * coords;
    }
    Ok(u)
}

/// An invertible `U` with `U T = Π_{R(T*)}` for square `T`.
///
/// Follows the eigenbasis `{f_j}` of `T^T T`: the map `T f_j ↦ f_j` on the
/// positive index set is injective and is extended to all of `ℝ^n`. The zero
/// map yields `U = I`.
pub fn build_u(t: &LinearMap, tol: RankTol) -> Result<DMatrix<f64>> {
    check_dim("build_u requires a square map", t.cols(), t.rows())?;
    let n = t.cols();
    let dec = t.gram(tol).eig();
    if dec.rank() == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    let images: Vec<DVector<f64>> = (0..dec.rank())
        .map(|j| dec.eigenvectors().column(j).into_owned())
        .collect();
    let basis_in: Vec<DVector<f64>> = images.iter().map(|f| t.matrix() * f).collect();
    extend_injective_to_invertible(&basis_in, &images)
}
