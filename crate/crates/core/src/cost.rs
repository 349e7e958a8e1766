//! Ground costs between feature vectors and the pairwise cost matrix.

use std::ops::Deref;

use thiserror::Error;

use crate::matrix::Matrix;
use crate::measures::WeightedMeasure;

/// Below this norm a vector is treated as zero by the cosine cost.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cost vectors must have at least one component")]
    EmptyVector,
    #[error("cost entry ({row}, {col}) is negative: {value}")]
    NegativeCost { row: usize, col: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostKind {
    #[default]
    Cosine,
    SquaredEuclidean,
}

impl std::str::FromStr for CostKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cosine" => Ok(CostKind::Cosine),
            "sqeuclidean" | "squared-euclidean" => Ok(CostKind::SquaredEuclidean),
            _ => Err(format!("unknown cost `{s}` (expected cosine or sqeuclidean)")),
        }
    }
}

impl CostKind {
    pub fn eval(self, x: &[f64], y: &[f64]) -> Result<f64, CostError> {
        match self {
            CostKind::Cosine => cosine_cost(x, y),
            CostKind::SquaredEuclidean => squared_euclidean_cost(x, y),
        }
    }
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<(), CostError> {
    if x.len() != y.len() {
        return Err(CostError::DimensionMismatch(x.len(), y.len()));
    }
    Ok(())
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
fn cosine_from_parts(dot: f64, nx: f64, ny: f64) -> f64 {
    if nx < ZERO_NORM || ny < ZERO_NORM {
        return 1.0;
    }
    (1.0 - dot / (nx * ny)).clamp(0.0, 2.0)
}

/// `1 - <x, y> / (|x| |y|)`, clamped to `[0, 2]`. A zero vector is at distance 1
/// from everything.
pub fn cosine_cost(x: &[f64], y: &[f64]) -> Result<f64, CostError> {
    check_dims(x, y)?;
    if x.is_empty() {
        return Err(CostError::EmptyVector);
    }
    Ok(cosine_from_parts(dot(x, y), norm(x), norm(y)))
}

pub fn squared_euclidean_cost(x: &[f64], y: &[f64]) -> Result<f64, CostError> {
    check_dims(x, y)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Nonnegative `T x T'` matrix of pairwise costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Matrix);

impl CostMatrix {
    /// Wraps a matrix, rejecting negative entries. Non-finite entries are
    /// let through and reported by the solvers.
    pub fn new(m: Matrix) -> Result<Self, CostError> {
        for i in 0..m.rows() {
            for (j, &value) in m.row(i).iter().enumerate() {
                if value < 0.0 {
                    return Err(CostError::NegativeCost { row: i, col: j, value });
                }
            }
        }
        Ok(CostMatrix(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, CostError> {
        let m = Matrix::from_rows(rows).ok_or(CostError::DimensionMismatch(0, 0))?;
        CostMatrix::new(m)
    }

    pub fn row_len(&self) -> usize {
        self.0.rows()
    }

    pub fn col_len(&self) -> usize {
        self.0.cols()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Multiplies every entry by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> CostMatrix {
        let data = self.0.as_slice().iter().map(|c| c * factor).collect();
        CostMatrix(Matrix::from_vec(self.0.rows(), self.0.cols(), data).unwrap())
    }
}

impl Deref for CostMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// `C[t][t'] = cost(a_t, b_t')`.
pub fn pairwise_costs(
    a: &WeightedMeasure,
    b: &WeightedMeasure,
    cost: CostKind,
) -> Result<CostMatrix, CostError> {
    if a.dim() != b.dim() {
        return Err(CostError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (rows, cols) = (a.len(), b.len());
    let mut m = Matrix::zeros(rows, cols);
    match cost {
        CostKind::Cosine => {
            if a.dim() == 0 {
                return Err(CostError::EmptyVector);
            }
            let nb: Vec<f64> = b.points().iter().map(|p| norm(p)).collect();
            for (i, x) in a.points().iter().enumerate() {
                let nx = norm(x);
                for (j, (y, &ny)) in b.points().iter().zip(&nb).enumerate() {
                    m[(i, j)] = cosine_from_parts(dot(x, y), nx, ny);
                }
            }
        }
        CostKind::SquaredEuclidean => {
            for (i, x) in a.points().iter().enumerate() {
                for (j, y) in b.points().iter().enumerate() {
                    m[(i, j)] = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
                }
            }
        }
    }
    Ok(CostMatrix(m))
}
