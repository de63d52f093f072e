use nalgebra::DMatrix;

use super::{diff, discarded_image, sub_seed, CheckConfig, Property};
use crate::instances::{random_map, random_psd, random_symmetric};
use crate::rng::NormalSource;
use crate::spectral::{build_u, eig_sym, lu_min_pivot, null_projector, range_adjoint_projector, Projector};

const MAX_N: usize = 8;

pub(super) fn run(cfg: &CheckConfig) -> Vec<Property> {
    let tol = cfg.rank_tol;
    let mut src = NormalSource::new(sub_seed(cfg.seed, 1));

    let mut recon = Property::new("reconstruction", "|V diag(l) V^T - A|_max <= 1e-9 (1+|A|)");
    let mut ortho = Property::new("orthonormal_eigenvectors", "|V^T V - I|_max <= 1e-10");
    let mut complement = Property::new("projector_complement", "|P_R(T*) + P_N(T) - I|_max <= 1e-10");
    let mut roots = Property::new(
        "square_root_identities",
        "D^1/2 D^-1/2 = D^-1/2 D^1/2 = P_R(D), D D^-1/2 = D^-1/2 D = D^1/2 within 1e-9 (1+|D|)",
    );
    let mut factor = Property::new(
        "build_u_factorization",
        "|U T - P_R(T*)|_max <= 1e-9 (1+|T|); skipped when a discarded direction f has |T f| above a tenth of that",
    )
    .rank_dependent();
    let mut full_rank = Property::new("build_u_invertible", "LU min pivot of U > 1e-12 |U|_F");
    let mut gram = Property::new("gram_eigenvalues", "|l_j - |T f_j|^2| <= 1e-9 (1+|T|^2)");
    let mut invariants = Property::new(
        "projector_invariants",
        "symmetric and idempotent within 1e-10, |trace - rank| <= 1e-9",
    );

    let check_projector = |p: &Projector, prop: &mut Property| {
        let (sym, idem, trace) = p.invariant_residuals();
        prop.record(sym.max(idem), 1e-10);
        prop.record(trace, 1e-9);
    };

    for _ in 0..cfg.trials {
        let n = src.int_in(1, MAX_N);

        for a in [random_symmetric(&mut src, n), {
            let rank = src.int_in(0, n);
            random_psd(&mut src, n, rank)
        }] {
            let a = a.with_rank_tol(tol);
            match eig_sym(&a, Some(tol.scale())) {
                Ok(dec) => {
                    recon.record(diff(&dec.reconstruct(), a.matrix()), 1e-9 * (1.0 + a.norm()));
                    let v = dec.eigenvectors();
                    ortho.record(diff(&(v.transpose() * v), &DMatrix::identity(n, n)), 1e-10);
                }
                Err(e) => {
                    recon.fail_with(&e);
                    ortho.fail_with(&e);
                }
            }
        }

        let rank_d = src.int_in(0, n);
        let d = random_psd(&mut src, n, rank_d).with_rank_tol(tol);
        roots.outcome((|| {
            let (r, ir) = (d.sqrt()?, d.pinv_sqrt()?);
            let p = d.range_projector();
            check_projector(&p, &mut invariants);
            let (r, ir, dm) = (r.matrix(), ir.matrix(), d.matrix());
            let residual = [
                diff(&(r * ir), p.matrix()),
                diff(&(ir * r), p.matrix()),
                diff(&(dm * ir), r),
                diff(&(ir * dm), r),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            Ok((residual, 1e-9 * (1.0 + d.norm())))
        })());

        let m = src.int_in(0, MAX_N);
        let rank_t = src.int_in(0, m.min(n));
        let t = random_map(&mut src, m, n, rank_t);
        let (pr, pn) = (range_adjoint_projector(&t, tol), null_projector(&t, tol));
        complement.record(diff(&(pr.matrix() + pn.matrix()), &DMatrix::identity(n, n)), 1e-10);
        check_projector(&pr, &mut invariants);
        check_projector(&pn, &mut invariants);

        let dec = t.gram(tol).eig();
        for (j, lambda) in dec.eigenvalues().iter().enumerate() {
            let tf = t.matrix() * dec.eigenvectors().column(j);
            gram.record((lambda - tf.norm_squared()).abs(), 1e-9 * (1.0 + t.norm().powi(2)));
        }

        let rank_sq = if src.uniform() < 0.5 { n } else { src.int_in(0, n - 1) };
        let sq = random_map(&mut src, n, n, rank_sq);
        // A singular value just under the cutoff leaves `|T f|` of its own
        // size in `U T - P`; the identity is asserted only for clear rank gaps.
        let allowed = 1e-9 * (1.0 + sq.norm());
        let ambiguous = discarded_image(sq.matrix(), tol) > 0.1 * allowed;
        match build_u(&sq, tol) {
            Ok(u) => {
                if ambiguous {
                    factor.skip();
                } else {
                    let p = range_adjoint_projector(&sq, tol);
                    factor.record(diff(&(&u * sq.matrix()), p.matrix()), allowed);
                }
                let lu = lu_min_pivot(&u);
                full_rank.flag(lu.is_invertible(1e-12));
            }
            Err(e) => {
                factor.fail_with(&e);
                full_rank.fail_with(&e);
            }
        }
    }

    vec![recon, ortho, complement, roots, factor, full_rank, gram, invariants]
}
