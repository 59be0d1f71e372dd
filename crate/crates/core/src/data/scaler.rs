use super::DataError;
use serde::{Deserialize, Serialize};

/// Below this the population std is treated as zero and clamped to 1.
const STD_FLOOR: f64 = 1e-12;

/// Per-column z-score scaling with columns that pass through untouched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScoreScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `true` for columns left as they are (the cyclic encodings).
    pub excluded: Vec<bool>,
}

impl ZScoreScaler {
    /// Fits on row-major `rows` of `width` columns, using the population
    /// standard deviation.
    pub fn fit(rows: &[f64], width: usize, excluded: &[bool]) -> Result<Self, DataError> {
        if width == 0 || excluded.len() != width || rows.len() % width != 0 {
            return Err(DataError::Invalid(format!(
                "cannot fit a {width}-column scaler on {} values with a {}-column mask",
                rows.len(),
                excluded.len()
            )));
        }
        let n = rows.len() / width;
        if n == 0 {
            return Err(DataError::Invalid("cannot fit a scaler on zero rows".into()));
        }
        let mut mean = vec![0.0; width];
        for row in rows.chunks(width) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; width];
        for row in rows.chunks(width) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut std: Vec<f64> = var.iter().map(|s| (s / n as f64).sqrt()).collect();
        for (j, (s, m)) in std.iter_mut().zip(mean.iter_mut()).enumerate() {
            if excluded[j] {
                *m = 0.0;
                *s = 1.0;
            } else if *s < STD_FLOOR {
                *s = 1.0;
            }
        }
        Ok(Self {
            mean,
            std,
            excluded: excluded.to_vec(),
        })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, rows: &[f64]) -> Result<(), DataError> {
        if rows.len() % self.width() != 0 {
            return Err(DataError::Invalid(format!(
                "{} values do not form {}-column rows",
                rows.len(),
                self.width()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, rows: &mut [f64]) -> Result<(), DataError> {
        self.check(rows)?;
        for row in rows.chunks_mut(self.width()) {
            for (j, v) in row.iter_mut().enumerate() {
                if !self.excluded[j] {
                    *v = (*v - self.mean[j]) / self.std[j];
                }
            }
        }
        Ok(())
    }

    pub fn inverse(&self, rows: &mut [f64]) -> Result<(), DataError> {
        self.check(rows)?;
        for row in rows.chunks_mut(self.width()) {
            for (j, v) in row.iter_mut().enumerate() {
                if !self.excluded[j] {
                    *v = *v * self.std[j] + self.mean[j];
                }
            }
        }
        Ok(())
    }
}
