//! Conditioning `Y ~ N(μ, D)` on `TY`.
//!
//! With `S = T D^{1/2}` the whole construction reduces to the two
//! complementary projectors `Π_{R(S*)}` and `Π_{N(S)}` on `ℝ^n`:
//!
//! * `M = D^{1/2} Π_{N(S)} D^{-1/2}` gives the part `MY` independent of `TY`;
//! * `Y − MY` is an affine function of `TY`;
//! * the conditional law is `N(μ + K(Y − μ), G)` with gain
//!   `K = D^{1/2} Π_{R(S*)} D^{-1/2}` and covariance `G = D^{1/2} Π_{N(S)} D^{1/2}`.
//!
//! `T` may be rectangular and both `D` and `T` may be rank deficient.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::Gaussian;
use crate::spectral::{
    build_u, max_abs, null_projector, pseudo_inverse, range_adjoint_projector, LinearMap,
    Projector, SymOperator,
};

/// Default relative tolerance for the optional support check.
pub const SUPPORT_REL_TOL: f64 = 1e-8;

struct Factors {
    root: SymOperator,
    inv_root: SymOperator,
    s: LinearMap,
    range_s_adjoint: Projector,
    null_s: Projector,
    null_d: Projector,
}

fn factors(g: &Gaussian, t: &LinearMap) -> Result<Factors> {
    check_dim("transformation columns vs model dimension", g.dim(), t.cols())?;
    let tol = g.rank_tol();
    let root = g.cov().sqrt()?;
    let inv_root = g.cov().pinv_sqrt()?;
    let s = LinearMap::new(t.matrix() * root.matrix())?;
    let range_s_adjoint = range_adjoint_projector(&s, tol);
    let null_s = null_projector(&s, tol);
    let null_d = g.cov().null_projector();
    Ok(Factors {
        root,
        inv_root,
        s,
        range_s_adjoint,
        null_s,
        null_d,
    })
}

impl Factors {
    // D^{1/2} P D^{-1/2}
    fn similar(&self, p: &Projector) -> DMatrix<f64> {
        self.root.matrix() * p.matrix() * self.inv_root.matrix()
    }

    // D^{1/2} P D^{1/2}
    fn congruent(&self, p: &Projector) -> DMatrix<f64> {
        self.root.matrix() * p.matrix() * self.root.matrix()
    }
}

/// Splits `Y` into `MY`, independent of `TY`, and `Y − MY = A·TY + b`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    independent_part: DMatrix<f64>,
    affine_gain: DMatrix<f64>,
    affine_offset: DVector<f64>,
    s: LinearMap,
    null_projector_s: Projector,
    range_projector_s_adjoint: Projector,
    independence_residual: f64,
    via_build_u: bool,
}

impl Decomposition {
    /// `M = D^{1/2} Π_{N(S)} D^{-1/2}`.
    pub fn independent_part(&self) -> &DMatrix<f64> {
        &self.independent_part
    }

    /// `A` in `Y − MY = A·TY + b`; `n × m`.
    pub fn affine_gain(&self) -> &DMatrix<f64> {
        &self.affine_gain
    }

    pub fn affine_offset(&self) -> &DVector<f64> {
        &self.affine_offset
    }

    /// `S = T D^{1/2}`.
    pub fn s(&self) -> &LinearMap {
        &self.s
    }

    pub fn null_projector_s(&self) -> &Projector {
        &self.null_projector_s
    }

    pub fn range_projector_s_adjoint(&self) -> &Projector {
        &self.range_projector_s_adjoint
    }

    /// `‖T D M^T‖_max`, zero in exact arithmetic.
    pub fn independence_residual(&self) -> f64 {
        self.independence_residual
    }

    /// True when `A = D^{1/2} U` with `U S = Π_{R(S*)}` from [`build_u`];
    /// otherwise `A = D^{1/2} S^+`.
    pub fn via_build_u(&self) -> bool {
        self.via_build_u
    }

    /// `A·(TY) + b`, the part of `Y` determined by `TY`.
    pub fn reconstruct(&self, ty: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("observation length", self.affine_gain.ncols(), ty.len())?;
        Ok(&self.affine_gain * ty + &self.affine_offset)
    }
}

/// Splits `Y` into a part independent of `TY` plus an affine function of `TY`.
///
/// For square `T` the affine part uses an invertible `U` with
/// `Π_{R(S*)} = U S`, giving `Y − MY = D^{1/2} U T Y + (I − D^{1/2} U T) Π_{N(D)} μ`.
/// Rectangular `T` uses the pseudo-inverse `S^+` in place of `U`.
pub fn decompose(g: &Gaussian, t: &LinearMap) -> Result<Decomposition> {
    let f = factors(g, t)?;
    let n = g.dim();
    let m_map = f.similar(&f.null_s);

    let (left, via_build_u) = if t.is_square() {
        (build_u(&f.s, g.rank_tol())?, true)
    } else {
        (pseudo_inverse(&f.s, g.rank_tol()), false)
    };
    let affine_gain = f.root.matrix() * left;
    let offset_map = DMatrix::identity(n, n) - &affine_gain * t.matrix();
    let affine_offset = offset_map * f.null_d.apply(g.mean());

    let independence_residual = max_abs(&(t.matrix() * g.cov().matrix() * m_map.transpose()));

    Ok(Decomposition {
        independent_part: m_map,
        affine_gain,
        affine_offset,
        s: f.s,
        null_projector_s: f.null_s,
        range_projector_s_adjoint: f.range_s_adjoint,
        independence_residual,
        via_build_u,
    })
}

/// The conditional law of `Y` given `TY`: `N(μ + K(Y − μ), G)`.
#[derive(Debug, Clone)]
pub struct ConditionalLaw {
    mean_base: DVector<f64>,
    gain: DMatrix<f64>,
    cov: SymOperator,
    observation_map: LinearMap,
    observation_gain: DMatrix<f64>,
    observation_range: DMatrix<f64>,
    null_d: Projector,
}

impl ConditionalLaw {
    /// The prior mean `μ`.
    pub fn mean_base(&self) -> &DVector<f64> {
        &self.mean_base
    }

    /// `K = D^{1/2} Π_{R(S*)} D^{-1/2}`, acting on `Y − μ`.
    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// `G = D^{1/2} Π_{N(S)} D^{1/2}`.
    pub fn cov(&self) -> &SymOperator {
        &self.cov
    }

    /// `D^{1/2} S^+`, acting on `TY − Tμ`. Agrees with `K` on the support.
    pub fn observation_gain(&self) -> &DMatrix<f64> {
        &self.observation_gain
    }

    pub fn observation_map(&self) -> &LinearMap {
        &self.observation_map
    }

    pub fn dim(&self) -> usize {
        self.mean_base.len()
    }

    /// Conditional law at a full realization `y` of `Y`.
    pub fn evaluate(&self, y: &DVector<f64>) -> Result<Gaussian> {
        check_dim("realization length", self.dim(), y.len())?;
        let mean = &self.mean_base + &self.gain * (y - &self.mean_base);
        Gaussian::new(mean, self.cov.clone())
    }

    /// As [`evaluate`](Self::evaluate), but first requires
    /// `‖Π_{N(D)}(y − μ)‖ ≤ rel_tol · (1 + ‖y − μ‖)`.
    pub fn evaluate_checked(&self, y: &DVector<f64>, rel_tol: f64) -> Result<Gaussian> {
        check_dim("realization length", self.dim(), y.len())?;
        let centered = y - &self.mean_base;
        let residual = self.null_d.apply(&centered).norm();
        let tolerance = rel_tol * (1.0 + centered.norm());
        if residual > tolerance {
            return Err(Error::InconsistentObservation {
                residual,
                tolerance,
            });
        }
        self.evaluate(y)
    }

    /// Conditional law given the observed value `t` of `TY`.
    pub fn evaluate_observation(&self, t: &DVector<f64>) -> Result<Gaussian> {
        check_dim("observation length", self.observation_map.rows(), t.len())?;
        let innovation = t - self.observation_map.apply(&self.mean_base);
        let mean = &self.mean_base + &self.observation_gain * innovation;
        Gaussian::new(mean, self.cov.clone())
    }

    /// As [`evaluate_observation`](Self::evaluate_observation), but first
    /// requires `t − Tμ` to lie in `R(T D T^T)` up to
    /// `rel_tol · (1 + ‖t − Tμ‖)`.
    pub fn evaluate_observation_checked(&self, t: &DVector<f64>, rel_tol: f64) -> Result<Gaussian> {
        check_dim("observation length", self.observation_map.rows(), t.len())?;
        let (residual, tolerance) = self.observation_support_residual(t, rel_tol);
        if residual > tolerance {
            return Err(Error::InconsistentObservation {
                residual,
                tolerance,
            });
        }
        self.evaluate_observation(t)
    }

    fn observation_support_residual(&self, t: &DVector<f64>, rel_tol: f64) -> (f64, f64) {
        let innovation = t - self.observation_map.apply(&self.mean_base);
        let off = &innovation - &self.observation_range * &innovation;
        (off.norm(), rel_tol * (1.0 + innovation.norm()))
    }
}

/// Conditional law of `Y` given `TY` for any `m × n` map `T`.
pub fn condition(g: &Gaussian, t: &LinearMap) -> Result<ConditionalLaw> {
    let f = factors(g, t)?;
    let gain = f.similar(&f.range_s_adjoint);
    let cov = SymOperator::clamped_psd(f.congruent(&f.null_s), g.cov().norm(), g.rank_tol())?;

    let s_pinv = pseudo_inverse(&f.s, g.rank_tol());
    let observation_gain = f.root.matrix() * &s_pinv;
    let observation_range = f.s.matrix() * &s_pinv;

    Ok(ConditionalLaw {
        mean_base: g.mean().clone(),
        gain,
        cov,
        observation_map: t.clone(),
        observation_gain,
        observation_range,
        null_d: f.null_d,
    })
}

/// `T̂ = T^T T`, an endomorphism of `ℝ^n` with `N(T̂) = N(T)`; conditioning
/// on `T̂Y` and on `TY` gives the same law.
pub fn endomorphism_reduction(t: &LinearMap) -> LinearMap {
    LinearMap::new(t.matrix().transpose() * t.matrix())
        .expect("product of finite matrices is finite")
}

/// Both sides of `E(Cov(Y|TY)) + Cov(E(Y|TY)) = Cov(Y)`.
#[derive(Debug, Clone)]
pub struct AnovaReport {
    /// `D^{1/2} Π_{N(S)} D^{1/2}`
    pub e_cov_given: DMatrix<f64>,
    /// `D^{1/2} Π_{R(S*)} D^{1/2}`
    pub cov_of_mean: DMatrix<f64>,
    /// `‖e_cov_given + cov_of_mean − D‖_max`
    pub residual: f64,
}

pub fn anova_check(g: &Gaussian, t: &LinearMap) -> Result<AnovaReport> {
    let f = factors(g, t)?;
    let e_cov_given = f.congruent(&f.null_s);
    let cov_of_mean = f.congruent(&f.range_s_adjoint);
    let residual = max_abs(&(&e_cov_given + &cov_of_mean - g.cov().matrix()));
    Ok(AnovaReport {
        e_cov_given,
        cov_of_mean,
        residual,
    })
}
