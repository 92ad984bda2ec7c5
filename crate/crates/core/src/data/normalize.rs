use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Per-feature affine map sending the training range onto `[-1, 1]`.
///
/// A constant training column maps every value to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
}

impl<T: Scalar> Normalizer<T> {
    pub fn fit(x: &Matrix<T>) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::Data(
                "cannot fit a normalizer on an empty set".into(),
            ));
        }
        let mut min = x.row(0).to_vec();
        let mut max = x.row(0).to_vec();
        for row in x.iter_rows() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max })
    }

    /// Identity map over `d` features.
    pub fn identity(d: usize) -> Self {
        Self {
            min: vec![-T::one(); d],
            max: vec![T::one(); d],
        }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    #[inline]
    fn map(&self, j: usize, v: T) -> T {
        let (lo, hi) = (self.min[j], self.max[j]);
        if hi == lo {
            T::zero()
        } else if lo == -T::one() && hi == T::one() {
            v
        } else {
            // Written so that lo ↦ -1 and hi ↦ 1 exactly.
            T::two() * (v - lo) / (hi - lo) - T::one()
        }
    }

    pub fn apply_row(&self, row: &[T]) -> Result<Vec<T>> {
        if row.len() != self.dim() {
            return Err(Error::Shape {
                context: "normalizer input",
                expected: self.dim(),
                actual: row.len(),
            });
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &v)| self.map(j, v))
            .collect())
    }

    pub fn apply(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.dim() {
            return Err(Error::Shape {
                context: "normalizer input",
                expected: self.dim(),
                actual: x.cols(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = self.map(j, *v);
            }
        }
        Ok(out)
    }
}
