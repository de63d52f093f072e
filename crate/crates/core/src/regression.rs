//! The partial-out formula for population regression in the Normal model,
//! and the rank-one update of an orthogonal projection it rests on.
//!
//! For `W = (X, Y, Z_1, ..., Z_{n-2})` jointly Normal,
//!
//! ```text
//! E(Y | X, Z) − E(Y | Z) = Cov(X, Y | Z) / Var(X | Z) · [Var(X | Z) > 0] · (X − E(X | Z))
//! ```
//!
//! with the conditional moments read off `D^{1/2} Π_{N(S₃)} D^{1/2}`, where
//! `S₃ = P₃ D^{1/2}` and `P₃` zeroes the first two coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conditioning::condition;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::Gaussian;
use crate::spectral::{null_projector, LinearMap, Projector, SymOperator};

/// `x` counts as lying in `span(V)` when less than this fraction of its norm
/// is orthogonal to `V`.
pub const XPERP_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialOutResult {
    /// `Cov(X, Y | Z) / Var(X | Z)`, or 0 when `degenerate`.
    pub coefficient: f64,
    pub cond_cov_xy: f64,
    pub cond_var_x: f64,
    /// `Var(X | Z)` is zero up to the rank tolerance.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    /// `E(Y | X, Z) − E(Y | Z)`, through two conditioning calls.
    pub lhs: f64,
    /// `coefficient · (X − E(X | Z))`, through the projector formulas.
    pub rhs: f64,
    pub residual: f64,
}

// Diagonal 0/1 map keeping the listed coordinates.
fn coordinate_mask(n: usize, keep: impl Fn(usize) -> bool) -> LinearMap {
    let d = DVector::from_fn(n, |i, _| if keep(i) { 1.0 } else { 0.0 });
    LinearMap::new(DMatrix::from_diagonal(&d)).expect("mask is finite")
}

struct PartialOutParts {
    result: PartialOutResult,
    root: SymOperator,
    inv_root: SymOperator,
    null_s3: Projector,
}

fn parts(g: &Gaussian) -> Result<PartialOutParts> {
    let n = g.dim();
    if n < 3 {
        return Err(Error::Dim {
            context: "partial-out needs (X, Y, Z) with at least one Z; dimension",
            expected: 3,
            found: n,
        });
    }
    let tol = g.rank_tol();
    let root = g.cov().sqrt()?;
    let inv_root = g.cov().pinv_sqrt()?;
    let s3 = LinearMap::new(coordinate_mask(n, |i| i >= 2).matrix() * root.matrix())?;
    let null_s3 = null_projector(&s3, tol);

    let x_dir = null_s3.apply(&root.matrix().column(0).into_owned());
    let cond_var_x = x_dir.norm_squared();
    let cond_cov_xy = root.matrix().row(1).dot(&x_dir.transpose());
    let degenerate = cond_var_x <= tol.threshold(n, g.cov().norm());
    let coefficient = if degenerate { 0.0 } else { cond_cov_xy / cond_var_x };

    Ok(PartialOutParts {
        result: PartialOutResult {
            coefficient,
            cond_cov_xy,
            cond_var_x,
            degenerate,
        },
        root,
        inv_root,
        null_s3,
    })
}

/// Partial-out coefficient for coordinates ordered `(X, Y, Z...)`.
pub fn partial_out(g: &Gaussian) -> Result<PartialOutResult> {
    Ok(parts(g)?.result)
}

/// Reorders coordinates to `(x, y, remaining in ascending order)`.
pub fn reorder_roles(g: &Gaussian, x_index: usize, y_index: usize) -> Result<(Gaussian, Vec<usize>)> {
    let n = g.dim();
    if x_index >= n || y_index >= n || x_index == y_index {
        return Err(Error::InvalidInput(format!(
            "x_index {x_index} and y_index {y_index} must be distinct and below {n}"
        )));
    }
    let mut order = vec![x_index, y_index];
    order.extend((0..n).filter(|&i| i != x_index && i != y_index));
    let mean = DVector::from_fn(n, |i, _| g.mean()[order[i]]);
    let cov = DMatrix::from_fn(n, n, |i, j| g.cov().matrix()[(order[i], order[j])]);
    let cov = SymOperator::new(cov)?.with_rank_tol(g.rank_tol());
    Ok((Gaussian::new(mean, cov)?, order))
}

/// Evaluates both sides of the partial-out identity at `w_obs` and returns
/// their difference.
pub fn partial_out_identity_check(g: &Gaussian, w_obs: &DVector<f64>) -> Result<IdentityCheck> {
    let p = parts(g)?;
    let n = g.dim();
    check_dim("observation length", n, w_obs.len())?;

    let with_x = condition(g, &coordinate_mask(n, |i| i != 1))?;
    let without_x = condition(g, &coordinate_mask(n, |i| i >= 2))?;
    let lhs = with_x.evaluate(w_obs)?.mean()[1] - without_x.evaluate(w_obs)?.mean()[1];

    // X − E(X|Z) = ⟨D^{1/2} Π_{N(S₃)} D^{-1/2} (W − μ), e₁⟩, using
    // I − D^{1/2} Π_{R(S₃*)} D^{-1/2} − Π_{N(D)} = D^{1/2} Π_{N(S₃)} D^{-1/2}
    // and Π_{N(D)}(W − μ) = 0 on the support.
    let centered = w_obs - g.mean();
    let x_resid = p
        .root
        .matrix()
        .row(0)
        .dot(&(p.null_s3.matrix() * (p.inv_root.matrix() * centered)).transpose());
    let rhs = p.result.coefficient * x_resid;

    Ok(IdentityCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// Orthogonal projector onto the span of `basis` (which need not be
/// independent); the zero projector for an empty list.
pub fn span_projector(n: usize, basis: &[DVector<f64>]) -> Result<Projector> {
    if basis.is_empty() {
        return Ok(Projector::zero(n));
    }
    for v in basis {
        check_dim("basis vector length", n, v.len())?;
    }
    let b = DMatrix::from_columns(basis);
    Ok(SymOperator::new(&b * b.transpose())?.range_projector())
}

/// `Π_{V_x} y − Π_V y`, where `V_x = span(V ∪ {x})`, through the rank-one
/// formula `‖Π_{V⊥}x‖^{-2} ⟨Π_{V⊥}y, Π_{V⊥}x⟩ Π_{V⊥}x`.
pub fn extended_projection_delta(
    v_basis: &[DVector<f64>],
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = x.len();
    check_dim("y length", n, y.len())?;
    let pv = span_projector(n, v_basis)?;
    let x_perp = x - pv.apply(x);
    let norm = x_perp.norm();
    let tolerance = XPERP_REL_TOL * x.norm();
    if norm <= tolerance || norm == 0.0 {
        return Err(Error::XInSubspace { norm, tolerance });
    }
    let y_perp = y - pv.apply(y);
    Ok(&x_perp * (y_perp.dot(&x_perp) / (norm * norm)))
}
