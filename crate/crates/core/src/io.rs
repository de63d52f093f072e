//! JSON file formats. Matrices are row-major arrays of arrays.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conditioning::{ConditionalLaw, Decomposition};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::Gaussian;
use crate::regression::{IdentityCheck, PartialOutResult};
use crate::spectral::{LinearMap, RankTol, SymOperator};

pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Validates that `rows` is rectangular with `cols` columns (taken from the
/// first row when `None`), naming the offending row in the error.
pub fn matrix_from_rows(field: &str, rows: &[Vec<f64>], cols: Option<usize>) -> Result<DMatrix<f64>> {
    let cols = match (cols, rows.first()) {
        (Some(c), _) => c,
        (None, Some(r)) => r.len(),
        (None, None) => 0,
    };
    for (i, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::InvalidInput(format!(
                "{field}: row {i} has {} entries, expected {cols}",
                r.len()
            )));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("{field}: entry ({i}, {j}) is not finite")));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub mean: Vec<f64>,
    pub cov: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol_scale: Option<f64>,
    /// Roles for the partial-out command; defaults 0 and 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_index: Option<usize>,
}

impl ModelFile {
    pub fn from_gaussian(g: &Gaussian) -> Self {
        ModelFile {
            mean: g.mean().iter().copied().collect(),
            cov: to_rows(g.cov().matrix()),
            rank_tol_scale: None,
            x_index: None,
            y_index: None,
        }
    }

    /// `scale_override` wins over the file's `rank_tol_scale`.
    pub fn to_gaussian(&self, scale_override: Option<f64>) -> Result<Gaussian> {
        let n = self.mean.len();
        if n == 0 {
            return Err(Error::InvalidInput("mean: must have at least one entry".into()));
        }
        if let Some(i) = self.mean.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("mean: entry {i} is not finite")));
        }
        check_dim("cov rows vs mean length", n, self.cov.len())?;
        let cov = matrix_from_rows("cov", &self.cov, Some(n))?;
        if let Some((i, j)) = first_asymmetry(&cov) {
            return Err(Error::InvalidInput(format!(
                "cov: entries ({i}, {j}) = {} and ({j}, {i}) = {} differ",
                cov[(i, j)],
                cov[(j, i)]
            )));
        }
        let tol = match scale_override.or(self.rank_tol_scale) {
            Some(s) => RankTol::new(s)?,
            None => RankTol::default(),
        };
        let cov = SymOperator::new(cov)?.with_rank_tol(tol);
        Gaussian::new(DVector::from_vec(self.mean.clone()), cov)
            .map_err(|e| Error::InvalidInput(format!("cov: {e}")))
            .map(|g| g.with_rank_tol(tol))
    }
}

// Asymmetry beyond round-off is almost always a typo in the file.
fn first_asymmetry(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    let n = m.nrows();
    let scale = 1.0 + crate::spectral::max_abs(m);
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .find(|&(i, j)| (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale)
}

/// Transformation file: an array of rows, or `{"matrix": rows}`. An empty
/// array is the map to `R^0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransformFile {
    Rows(Rows),
    Object { matrix: Rows },
}

impl TransformFile {
    pub fn rows(&self) -> &Rows {
        match self {
            TransformFile::Rows(r) | TransformFile::Object { matrix: r } => r,
        }
    }

    pub fn to_map(&self, n: usize) -> Result<LinearMap> {
        let rows = self.rows();
        if let Some(first) = rows.first() {
            check_dim("transform columns vs model dimension", n, first.len())?;
        }
        LinearMap::new(matrix_from_rows("transform", rows, Some(n))?)
    }
}

/// Vector file: an array of numbers, or `{"values": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorFile {
    Values(Vec<f64>),
    Object { values: Vec<f64> },
}

impl VectorFile {
    pub fn to_vector(&self, field: &str) -> Result<DVector<f64>> {
        let v = match self {
            VectorFile::Values(v) | VectorFile::Object { values: v } => v,
        };
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("{field}: entry {i} is not finite")));
        }
        Ok(DVector::from_column_slice(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianJson {
    pub mean: Vec<f64>,
    pub cov: Rows,
}

impl From<&Gaussian> for GaussianJson {
    fn from(g: &Gaussian) -> Self {
        GaussianJson {
            mean: g.mean().iter().copied().collect(),
            cov: to_rows(g.cov().matrix()),
        }
    }
}

/// The law as a function of `y`: mean `mean_base + gain (y − mean_base)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawJson {
    pub mean_base: Vec<f64>,
    pub gain: Rows,
    pub cov: Rows,
}

impl From<&ConditionalLaw> for LawJson {
    fn from(law: &ConditionalLaw) -> Self {
        LawJson {
            mean_base: law.mean_base().iter().copied().collect(),
            gain: to_rows(law.gain()),
            cov: to_rows(law.cov().matrix()),
        }
    }
}

/// `Y = M Y + A (T Y) + b` with `M Y` independent of `T Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionJson {
    #[serde(rename = "M")]
    pub m: Rows,
    #[serde(rename = "A")]
    pub a: Rows,
    pub b: Vec<f64>,
    /// `‖T D M^T‖_max`
    pub independence_residual: f64,
    /// `"build_u"` for square `T`, `"pseudo_inverse"` otherwise.
    pub affine_method: String,
}

impl From<&Decomposition> for DecompositionJson {
    fn from(d: &Decomposition) -> Self {
        DecompositionJson {
            m: to_rows(d.independent_part()),
            a: to_rows(d.affine_gain()),
            b: d.affine_offset().iter().copied().collect(),
            independence_residual: d.independence_residual(),
            affine_method: if d.via_build_u() { "build_u" } else { "pseudo_inverse" }.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialOutJson {
    pub x_index: usize,
    pub y_index: usize,
    /// Original coordinate placed at each position of the reordered vector.
    pub order: Vec<usize>,
    #[serde(flatten)]
    pub result: PartialOutResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identity: Option<IdentityCheck>,
}
