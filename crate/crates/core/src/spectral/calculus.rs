use nalgebra::DMatrix;

use super::{LinearMap, Projector, RankTol, SymOperator};
use crate::error::{Error, Result};

fn positive_spectrum(d: &SymOperator) -> Result<super::SpectralDecomposition> {
    let dec = d.eig();
    let min = d.min_eigenvalue();
    if min < -dec.rank_tolerance() {
        return Err(Error::NotPositive {
            eigenvalue: min,
            tolerance: dec.rank_tolerance(),
        });
    }
    Ok(dec)
}

fn with_tol(m: DMatrix<f64>, tol: RankTol) -> SymOperator {
    SymOperator::new(m)
        .expect("spectral function of a finite operator is finite")
        .with_rank_tol(tol)
}

// Eigenvalues at or below the rank tolerance are treated as exact zeros, so
// D^{1/2} and D^{-1/2} share the positive index set of D.
pub(super) fn sqrt(d: &SymOperator) -> Result<SymOperator> {
    let dec = positive_spectrum(d)?;
    Ok(with_tol(dec.positive_function(f64::sqrt), d.rank_tol()))
}

pub(super) fn pinv_sqrt(d: &SymOperator) -> Result<SymOperator> {
    let dec = positive_spectrum(d)?;
    Ok(with_tol(dec.positive_function(|l| 1.0 / l.sqrt()), d.rank_tol()))
}

pub(super) fn sym_pinv(d: &SymOperator) -> SymOperator {
    let dec = d.eig();
    with_tol(dec.positive_function(|l| 1.0 / l), d.rank_tol())
}

pub(super) fn range_projector(d: &SymOperator) -> Projector {
    let dec = d.eig();
    Projector::from_orthonormal_columns(d.dim(), &dec.positive_vectors())
}

/// `Π_{R(T*)} = Σ_{λ_j > 0} f_j f_j^T` over the eigenpairs of `T^T T`.
pub fn range_adjoint_projector(t: &LinearMap, tol: RankTol) -> Projector {
    let dec = t.gram(tol).eig();
    Projector::from_orthonormal_columns(t.cols(), &dec.positive_vectors())
}

/// `Π_{N(T)} = I − Π_{R(T*)}`.
pub fn null_projector(t: &LinearMap, tol: RankTol) -> Projector {
    range_adjoint_projector(t, tol).complement()
}

/// Moore–Penrose pseudo-inverse `Σ_{λ_j > 0} λ_j^{-1} f_j (T f_j)^T`, built
/// from the spectrum of `T^T T`. Shape is `cols × rows`.
pub fn pseudo_inverse(t: &LinearMap, tol: RankTol) -> DMatrix<f64> {
    let dec = t.gram(tol).eig();
    let (m, n) = (t.rows(), t.cols());
    let mut out = DMatrix::zeros(n, m);
    for j in 0..dec.rank() {
        let f = dec.eigenvectors().column(j);
        let tf = t.matrix() * f;
        out.ger(1.0 / dec.eigenvalues()[j], &f, &tf, 1.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::max_abs;

    fn diag(v: &[f64]) -> SymOperator {
        SymOperator::new(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))).unwrap()
    }

    fn map(rows: &[Vec<f64>]) -> LinearMap {
        LinearMap::from_rows(rows, None).unwrap()
    }

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        max_abs(&(a - b)) <= tol
    }

    #[test]
    fn sqrt_examples() {
        let r = diag(&[4.0, 0.0]).sqrt().unwrap();
        assert!(close(r.matrix(), diag(&[2.0, 0.0]).matrix(), 0.0));
        let i = SymOperator::identity(3).sqrt().unwrap();
        assert!(close(i.matrix(), &DMatrix::identity(3, 3), 1e-15));

        let d = SymOperator::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let r = d.sqrt().unwrap();
        let ev = r.eig();
        assert!((ev.eigenvalues()[0] - 3f64.sqrt()).abs() < 1e-14);
        assert!((ev.eigenvalues()[1] - 1.0).abs() < 1e-14);
        assert!(close(&(r.matrix() * r.matrix()), d.matrix(), 1e-9 * 4.0));
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let d = diag(&[1.0, -0.5]);
        assert!(matches!(d.sqrt(), Err(Error::NotPositive { .. })));
        assert!(matches!(d.pinv_sqrt(), Err(Error::NotPositive { .. })));
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clamped() {
        let d = diag(&[1.0, -1e-17]);
        let r = d.sqrt().unwrap();
        assert_eq!(r.matrix()[(1, 1)], 0.0);
    }

    #[test]
    fn pinv_sqrt_examples() {
        let r = diag(&[4.0, 0.0]).pinv_sqrt().unwrap();
        assert!(close(r.matrix(), diag(&[0.5, 0.0]).matrix(), 0.0));
        let i = SymOperator::identity(2).pinv_sqrt().unwrap();
        assert!(close(i.matrix(), &DMatrix::identity(2, 2), 1e-15));
    }

    #[test]
    fn range_projector_examples() {
        let p = diag(&[4.0, 0.0]).range_projector();
        assert_eq!(p.matrix(), diag(&[1.0, 0.0]).matrix());
        assert_eq!(p.rank(), 1);

        let full = SymOperator::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!(close(full.range_projector().matrix(), &DMatrix::identity(2, 2), 1e-15));

        // v = (3, 4) / 5, D = v v^T
        let v = nalgebra::DVector::from_row_slice(&[0.6, 0.8]);
        let vvt = &v * v.transpose();
        let p = SymOperator::new(vvt.clone()).unwrap().range_projector();
        assert!(close(p.matrix(), &vvt, 1e-15));
        assert_eq!(p.rank(), 1);
    }

    #[test]
    fn null_projector_examples() {
        let tol = RankTol::default();
        let p = null_projector(&map(&[vec![1.0, 0.0]]), tol);
        assert!(close(p.matrix(), diag(&[0.0, 1.0]).matrix(), 0.0));

        let p = null_projector(&LinearMap::zeros(1, 2), tol);
        assert_eq!(p.matrix(), &DMatrix::identity(2, 2));

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let p = null_projector(&map(&[vec![h, h]]), tol);
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!(close(p.matrix(), &expected, 1e-15));
        assert_eq!(p.rank(), 1);
    }

    #[test]
    fn range_adjoint_projector_examples() {
        let tol = RankTol::default();
        let p = range_adjoint_projector(&map(&[vec![1.0, 0.0], vec![0.0, 0.0]]), tol);
        assert_eq!(p.matrix(), diag(&[1.0, 0.0]).matrix());

        let p = range_adjoint_projector(&LinearMap::zeros(2, 2), tol);
        assert_eq!(p.matrix(), &DMatrix::zeros(2, 2));
        assert_eq!(p.rank(), 0);

        let p = range_adjoint_projector(&map(&[vec![0.0, 1.0], vec![0.0, 0.0]]), tol);
        assert!(close(p.matrix(), diag(&[0.0, 1.0]).matrix(), 1e-15));
    }

    #[test]
    fn zero_row_map_has_trivial_range() {
        let t = LinearMap::zeros(0, 3);
        let p = range_adjoint_projector(&t, RankTol::default());
        assert_eq!(p.rank(), 0);
        assert_eq!(pseudo_inverse(&t, RankTol::default()).shape(), (3, 0));
    }

    #[test]
    fn pseudo_inverse_penrose_conditions() {
        let t = map(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]);
        let p = pseudo_inverse(&t, RankTol::default());
        let a = t.matrix();
        let x = &p;
        assert!(close(&(a * x * a), a, 1e-12));
        assert!(close(&(x * a * x), x, 1e-12));
        let ax = a * x;
        assert!(close(&ax, &ax.transpose(), 1e-12));
    }
}
