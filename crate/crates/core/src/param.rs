//! Value types shared by every module: parameter points, feeds and Fisher matrices.

use std::ops::{Add, Index, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the parameter space of a model family.
///
/// The vector itself carries no family; membership in the family's parameter
/// space is checked by [`crate::family::Family::check_interior`] wherever it matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn scalar(value: f64) -> Self {
        ParamVector(vec![value])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn midpoint(&self, other: &ParamVector) -> ParamVector {
        ParamVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        )
    }

    pub fn scaled(&self, factor: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|v| v * factor).collect())
    }

    pub(crate) fn expect_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected,
                got: self.dim(),
            })
        }
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        ParamVector(values)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for &ParamVector {
    type Output = ParamVector;

    fn add(self, rhs: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &ParamVector {
    type Output = ParamVector;

    fn sub(self, rhs: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl std::fmt::Display for ParamVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// An ordered collection of `m` content vectors of common length `n`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feed {
    content_dim: usize,
    data: Vec<f64>,
}

impl Feed {
    pub fn new(content_dim: usize, data: Vec<f64>) -> Result<Self> {
        if content_dim == 0 {
            return Err(Error::Domain("content dimension must be at least 1".into()));
        }
        if data.is_empty() {
            return Err(Error::Domain("a feed needs at least one item".into()));
        }
        if !data.len().is_multiple_of(content_dim) {
            return Err(Error::Domain(format!(
                "{} values do not split into items of length {content_dim}",
                data.len()
            )));
        }
        Ok(Feed { content_dim, data })
    }

    /// Feed of scalar content items.
    pub fn scalars(values: Vec<f64>) -> Result<Self> {
        Feed::new(1, values)
    }

    pub fn from_items(items: &[Vec<f64>]) -> Result<Self> {
        let n = items.first().map(Vec::len).unwrap_or(0);
        if items.iter().any(|item| item.len() != n) {
            return Err(Error::Domain("feed items have unequal lengths".into()));
        }
        Feed::new(n, items.concat())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.content_dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn content_dim(&self) -> usize {
        self.content_dim
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.data[i * self.content_dim..(i + 1) * self.content_dim]
    }

    pub fn items(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.content_dim)
    }

    /// Raw row-major values; for scalar feeds this is the list of items.
    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

/// Symmetric positive semi-definite `r x r` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix(DMatrix<f64>);

impl FisherMatrix {
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        FisherMatrix::new(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
            diag,
        )))
    }

    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Domain("Fisher matrix must be square".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("Fisher matrix has non-finite entries".into()));
        }
        let norm = entries.norm();
        let r = entries.nrows();
        for i in 0..r {
            for j in 0..i {
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
                    return Err(Error::Domain(format!(
                        "Fisher matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let min_eig = entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 * norm {
            return Err(Error::Domain(format!(
                "Fisher matrix not positive semi-definite (eigenvalue {min_eig})"
            )));
        }
        Ok(FisherMatrix(entries))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `vᵀ I v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let r = self.dim();
        let mut acc = 0.0;
        for i in 0..r {
            for j in 0..r {
                acc += v[i] * self.0[(i, j)] * v[j];
            }
        }
        acc
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }
}
