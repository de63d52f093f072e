//! Exact conditional distributions of multivariate Normal vectors given a
//! linear transformation, valid for singular covariances and rank-deficient
//! transformations alike.
//!
//! The construction works entirely with orthogonal projectors and the
//! spectral calculus of the covariance `D`: with `S = T D^{1/2}`, the law of
//! `Y` given `TY` is Normal with mean `μ + D^{1/2} Π_{R(S*)} D^{-1/2} (Y − μ)`
//! and covariance `D^{1/2} Π_{N(S)} D^{1/2}`.

pub mod checks;
pub mod conditioning;
pub mod error;
pub mod gaussian;
pub mod instances;
pub mod io;
pub mod oracle;
pub mod regression;
pub mod rng;
pub mod spectral;

pub use conditioning::{anova_check, condition, decompose, endomorphism_reduction, AnovaReport, ConditionalLaw, Decomposition};
pub use error::{Error, Result};
pub use gaussian::{Gaussian, Independence, JointGaussian};
pub use spectral::{LinearMap, Projector, RankTol, SpectralDecomposition, SymOperator};
