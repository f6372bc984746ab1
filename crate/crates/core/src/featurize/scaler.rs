use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Column standardization fitted on training rows. Listed columns are
/// log1p-transformed first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub log1p_columns: Vec<usize>,
    pub mean: Vec<f64>,
    /// Population standard deviation; zero replaced by one.
    pub std: Vec<f64>,
}

fn log_transform(rows: &Matrix, columns: &[usize]) -> Matrix {
    let mut out = rows.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for &c in columns {
            row[c] = row[c].max(0.0).ln_1p();
        }
    }
    out
}

impl FeatureScaler {
    pub fn fit(rows: &Matrix, log1p_columns: &[usize]) -> Result<Self> {
        if rows.rows() == 0 {
            return Err(Error::Empty("scaler fit rows".into()));
        }
        if let Some(&c) = log1p_columns.iter().find(|&&c| c >= rows.cols()) {
            return Err(Error::dim("log1p column", rows.cols(), c));
        }
        let x = log_transform(rows, log1p_columns);
        let n = x.rows() as f64;
        let mean: Vec<f64> = x.column_sums().data().iter().map(|s| s / n).collect();
        let mut var = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            for ((v, x), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            log1p_columns: log1p_columns.to_vec(),
            mean,
            std,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, rows: &Matrix) -> Result<Matrix> {
        if rows.cols() != self.dim() {
            return Err(Error::dim("scaler input columns", self.dim(), rows.cols()));
        }
        let mut x = log_transform(rows, &self.log1p_columns);
        for r in 0..x.rows() {
            for ((v, m), s) in x.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(x)
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply(&Matrix::row_vector(row.to_vec()))?.into_vec())
    }
}
