use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Result, ScoreError};

/// An `M x d` sample set; rows are samples. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: Array2<f64>,
}

impl SampleMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (m, d) = data.dim();
        if m == 0 || d == 0 {
            return Err(ScoreError::input(format!(
                "sample matrix must be non-empty, got {m}x{d}"
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(ScoreError::input(format!(
                "non-finite sample entry at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(SampleMatrix {
            data: data.as_standard_layout().into_owned(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(ScoreError::input("ragged sample rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((m, d), flat)
            .map_err(|e| ScoreError::input(e.to_string()))?;
        Self::new(data)
    }

    /// Number of samples `M`.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    /// Dimension `d`.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, m: usize) -> ArrayView1<'_, f64> {
        self.data.row(m)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<SampleMatrix> {
        if indices.is_empty() {
            return Err(ScoreError::input("subset must be non-empty"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(ScoreError::input(format!(
                "subset index {bad} out of range for {} samples",
                self.len()
            )));
        }
        Ok(SampleMatrix {
            data: self.data.select(ndarray::Axis(0), indices),
        })
    }
}
