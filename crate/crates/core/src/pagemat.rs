//! Page matrices: non-overlapping length-`L` segments of each series laid out as columns,
//! with the per-series blocks concatenated column-wise in series order.
//!
//! All indices here are 0-based positions within the panel. When `L` does not divide `T`
//! the leading `T mod L` observations are dropped and recorded as `origin`, so the matrix
//! always covers the most recent `L * floor(T / L)` observations.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::TimePanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageShape {
    /// Segment length `L` (rows).
    pub rows: usize,
    /// Columns contributed by each series, `floor(T / L)`.
    pub cols_per_series: usize,
    pub n_series: usize,
    /// Observations used per series, `rows * cols_per_series`.
    pub t_eff: usize,
}

impl PageShape {
    pub fn new(n_series: usize, len: usize, rows: usize) -> Result<Self> {
        if rows == 0 || rows > len {
            return Err(Error::Shape(format!(
                "segment length L={rows} must satisfy 1 <= L <= T={len}"
            )));
        }
        if n_series == 0 {
            return Err(Error::Shape("no series".into()));
        }
        let cols_per_series = len / rows;
        Ok(Self {
            rows,
            cols_per_series,
            n_series,
            t_eff: rows * cols_per_series,
        })
    }

    pub fn total_cols(&self) -> usize {
        self.n_series * self.cols_per_series
    }
}

/// Stacked Page matrix `[Z(y_1) Z(y_2) ... Z(y_N)]`.
#[derive(Debug, Clone)]
pub struct StackedPage {
    pub shape: PageShape,
    pub data: Mat<f64>,
    /// Number of leading observations of each series left out of the matrix.
    pub origin: usize,
}

impl StackedPage {
    /// Position in the matrix of observation `t` (0-based, relative to the panel start) of series `n`.
    pub fn cell_of(&self, t: usize, n: usize) -> Result<(usize, usize)> {
        cell_of(t, n, &self.shape, self.origin)
    }

    pub fn time_of(&self, row: usize, col: usize) -> Result<(usize, usize)> {
        time_of(row, col, &self.shape, self.origin)
    }

    /// Reads series `n` back out of the matrix over the retained window.
    pub fn series(&self, n: usize) -> Vec<f64> {
        read_series(&self.data, &self.shape, n)
    }
}

pub(crate) fn read_series(data: &Mat<f64>, shape: &PageShape, n: usize) -> Vec<f64> {
    let m = shape.cols_per_series;
    let mut out = Vec::with_capacity(shape.t_eff);
    for j in 0..m {
        out.extend_from_slice(data.col_as_slice(n * m + j));
    }
    out
}

/// Page matrix of a single series.
pub fn page_matrix(series: &[f64], rows: usize) -> Result<StackedPage> {
    build(&[series], rows)
}

/// Stacked Page matrix of every series in the panel.
pub fn stack(panel: &TimePanel, rows: usize) -> Result<StackedPage> {
    let series: Vec<&[f64]> = panel.values().iter().map(Vec::as_slice).collect();
    build(&series, rows)
}

pub(crate) fn build(series: &[&[f64]], rows: usize) -> Result<StackedPage> {
    let len = series.first().map_or(0, |s| s.len());
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::Shape("series have different lengths".into()));
    }
    let shape = PageShape::new(series.len(), len, rows)?;
    let origin = len - shape.t_eff;
    let m = shape.cols_per_series;
    let mut data = Mat::<f64>::zeros(rows, shape.total_cols());
    for (n, s) in series.iter().enumerate() {
        let kept = &s[origin..];
        for j in 0..m {
            data.col_as_slice_mut(n * m + j)
                .copy_from_slice(&kept[j * rows..(j + 1) * rows]);
        }
    }
    Ok(StackedPage {
        shape,
        data,
        origin,
    })
}

/// `(row, col)` holding observation `t` of series `n`.
pub fn cell_of(t: usize, n: usize, shape: &PageShape, origin: usize) -> Result<(usize, usize)> {
    if n >= shape.n_series {
        return Err(Error::Index(format!(
            "series {n} out of range for {} series",
            shape.n_series
        )));
    }
    if t < origin || t >= origin + shape.t_eff {
        return Err(Error::Index(format!(
            "t={t} outside retained window [{origin}, {})",
            origin + shape.t_eff
        )));
    }
    let tau = t - origin;
    Ok((tau % shape.rows, n * shape.cols_per_series + tau / shape.rows))
}

/// Inverse of [`cell_of`]: `(t, n)` stored at `(row, col)`.
pub fn time_of(row: usize, col: usize, shape: &PageShape, origin: usize) -> Result<(usize, usize)> {
    if row >= shape.rows || col >= shape.total_cols() {
        return Err(Error::Index(format!(
            "cell ({row}, {col}) outside {}x{} matrix",
            shape.rows,
            shape.total_cols()
        )));
    }
    let m = shape.cols_per_series;
    Ok((origin + (col % m) * shape.rows + row, col / m))
}

/// Default segment length `floor(sqrt(N T / ratio))`, clamped to `[1, T]`.
///
/// `ratio` is the target columns-to-rows ratio of the stacked matrix; `1` gives the square
/// layout `L = sqrt(N T)`.
pub fn default_l(n_series: usize, len: usize, ratio: f64) -> usize {
    let ratio = if ratio.is_finite() && ratio > 0.0 { ratio } else { 1.0 };
    let nt = (n_series * len) as f64;
    let mut l = (nt / ratio).sqrt().floor() as usize;
    // guard against sqrt rounding just below an exact square
    while ((l + 1) as f64) * ((l + 1) as f64) * ratio <= nt {
        l += 1;
    }
    l.clamp(1, len.max(1))
}
