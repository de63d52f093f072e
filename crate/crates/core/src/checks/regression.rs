use nalgebra::{DMatrix, DVector};

use super::{sub_seed, CheckConfig, Property};
use crate::gaussian::Gaussian;
use crate::instances::{normal_matrix, normal_vector, random_psd};
use crate::regression::{extended_projection_delta, partial_out, partial_out_identity_check};
use crate::rng::NormalSource;
use crate::spectral::SymOperator;

pub(super) fn run(cfg: &CheckConfig) -> Vec<Property> {
    let tol = cfg.rank_tol;
    let mut src = NormalSource::new(sub_seed(cfg.seed, 4));

    let mut identity = Property::new(
        "partial_out_identity",
        "|E(Y|X,Z) - E(Y|Z) - b (X - E(X|Z))| <= 1e-8 (1+|D|+|w-mu|), n = 4, full rank and rank 3",
    )
    .rank_dependent();
    let mut degenerate = Property::new(
        "partial_out_degenerate",
        "Var(X|Z) at tolerance implies the flag, coefficient 0 and |E(Y|X,Z) - E(Y|Z)| <= 1e-8 (1+|D|+|w-mu|)",
    )
    .rank_dependent();
    let mut update = Property::new(
        "projection_update",
        "rank-one update + P_V y vs QR projection onto span(V, x) within 1e-10, R^6, dim V <= 4",
    );

    for k in 0..cfg.trials {
        let rank = if k % 2 == 0 { 4 } else { 3 };
        let g = Gaussian::new(normal_vector(&mut src, 4), random_psd(&mut src, 4, rank))
            .expect("positive")
            .with_rank_tol(tol);
        let w = g.mean() + g.cov().sqrt().expect("positive").matrix() * normal_vector(&mut src, 4);
        let allowed = 1e-8 * (1.0 + g.cov().norm() + (&w - g.mean()).norm());
        identity.outcome(partial_out_identity_check(&g, &w).map(|c| (c.residual, allowed)));

        // Loadings whose first row is a combination of the last two, so that
        // X is a function of Z.
        let mut l = normal_matrix(&mut src, 4, 3);
        let (a, b) = (src.normal(), src.normal());
        let combo = l.row(2) * a + l.row(3) * b;
        l.set_row(0, &combo);
        let g = Gaussian::new(normal_vector(&mut src, 4), SymOperator::new(&l * l.transpose()).expect("finite"))
            .expect("positive")
            .with_rank_tol(tol);
        let w = g.mean() + &l * normal_vector(&mut src, 3);
        let allowed = 1e-8 * (1.0 + g.cov().norm() + (&w - g.mean()).norm());
        degenerate.outcome((|| {
            let r = partial_out(&g)?;
            let c = partial_out_identity_check(&g, &w)?;
            let flagged = r.degenerate && r.coefficient == 0.0;
            Ok((if flagged { c.lhs.abs() } else { f64::INFINITY }, allowed))
        })());

        let dim_v = src.int_in(0, 4);
        let basis: Vec<DVector<f64>> = (0..dim_v).map(|_| normal_vector(&mut src, 6)).collect();
        let x = normal_vector(&mut src, 6);
        let y = normal_vector(&mut src, 6);
        update.outcome(extended_projection_delta(&basis, &x, &y).map(|delta| {
            let mut cols = basis.clone();
            let before = qr_projection(&cols, &y);
            cols.push(x.clone());
            let after = qr_projection(&cols, &y);
            ((delta - (after - before)).amax(), 1e-10)
        }));
    }

    vec![identity, degenerate, update]
}

// Projection onto the column span by Householder QR, independent of the
// spectral route used by the library.
fn qr_projection(cols: &[DVector<f64>], y: &DVector<f64>) -> DVector<f64> {
    if cols.is_empty() {
        return DVector::zeros(y.len());
    }
    let qr = DMatrix::from_columns(cols).qr();
    let (q, r) = (qr.q(), qr.r());
    let top = r.diagonal().amax();
    let mut out = DVector::zeros(y.len());
    for i in 0..r.nrows() {
        if r[(i, i)].abs() > 1e-12 * top {
            let c = q.column(i);
            out += c * c.dot(y);
        }
    }
    out
}
