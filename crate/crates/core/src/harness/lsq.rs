//! Ordinary least squares with an intercept, used as the residual regressor
//! on the personalized anchoring path.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl LinearModel {
    /// Minimum-norm least-squares fit via SVD, so rank-deficient designs
    /// still yield a deterministic answer.
    pub fn fit(features: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        if features.is_empty() || features.len() != targets.len() {
            return Err(Error::input(format!(
                "least squares needs equal nonempty inputs, got {} rows and {} targets",
                features.len(),
                targets.len()
            )));
        }
        let d = features[0].len();
        if features.iter().any(|row| row.len() != d) {
            return Err(Error::input("feature rows have inconsistent widths"));
        }
        if features
            .iter()
            .flatten()
            .chain(targets)
            .any(|v| !v.is_finite())
        {
            return Err(Error::input("least squares inputs must be finite"));
        }
        let n = features.len();
        let x = DMatrix::from_fn(
            n,
            d + 1,
            |i, j| if j == 0 { 1.0 } else { features[i][j - 1] },
        );
        let y = DVector::from_column_slice(targets);
        let beta = x
            .svd(true, true)
            .solve(&y, 1e-12)
            .map_err(|e| Error::input(format!("least squares solve failed: {e}")))?;
        Ok(LinearModel {
            intercept: beta[0],
            weights: beta.iter().skip(1).copied().collect(),
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}
