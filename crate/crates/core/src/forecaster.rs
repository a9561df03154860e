//! Linear recurrence for the deterministic component.
//!
//! The last row of the stacked Page matrix is regressed on a rank-`k` estimate of the
//! rows above it. The resulting coefficient vector forecasts the next value of any series
//! from its `L - 1` most recent observations.
//!
//! Coefficients are stored most-recent-first: `beta[i]` multiplies `y(t - 1 - i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowrank::{self, RankRule};
use crate::pagemat::{self, StackedPage};
use crate::panel::TimePanel;

/// Relative cutoff on singular values used by the minimum-norm solve.
const PINV_RCOND: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaModel {
    /// Length `L - 1`, most recent lag first.
    pub beta: Vec<f64>,
    pub l: usize,
    /// Rank actually used for the feature matrix.
    pub k_hat: usize,
    /// Root mean square of the in-sample regression residual.
    pub residual_rms: f64,
}

impl BetaModel {
    pub fn n_lags(&self) -> usize {
        self.beta.len()
    }
}

/// Fits `beta` with the rank chosen by `rule` on the full stacked matrix.
pub fn fit_beta(panel: &TimePanel, l: usize, rule: RankRule) -> Result<BetaModel> {
    if l < 2 {
        return Err(Error::Fit(format!("segment length L={l} must be >= 2")));
    }
    let stacked = pagemat::stack(panel, l)?;
    let s = lowrank::singular_values(stacked.data.as_ref())?;
    let k = lowrank::select_rank(&s, rule, (l, stacked.shape.total_cols()))?;
    fit_beta_stacked(&stacked, k)
}

/// Fits `beta` on an already-built stacked matrix with a fixed rank `k`.
pub fn fit_beta_stacked(stacked: &StackedPage, k: usize) -> Result<BetaModel> {
    let l = stacked.shape.rows;
    if l < 2 {
        return Err(Error::Fit(format!("segment length L={l} must be >= 2")));
    }
    if k == 0 {
        return Err(Error::Rank("rank must be >= 1".into()));
    }
    let cols = stacked.data.ncols();
    let top = stacked.data.subrows(0, l - 1);
    let target: Vec<f64> = (0..cols).map(|j| stacked.data[(l - 1, j)]).collect();

    let svd = lowrank::svd(top)?;
    let s = &svd.singular_values;
    let s1 = s.first().copied().unwrap_or(0.0);
    if s1.is_nan() || s1 <= 0.0 {
        return Err(Error::Fit("feature matrix is identically zero".into()));
    }
    let k = k.min(s.len());
    let used = s[..k].iter().take_while(|&&x| x > PINV_RCOND * s1).count();

    // F = U_k S_k V_k^T, the regression is target ~ F^T beta, whose minimum-norm solution
    // is beta = U_k S_k^{-1} V_k^T target. The fitted values are V_k V_k^T target.
    let mut beta_rows = vec![0.0; l - 1];
    let mut fitted = vec![0.0; cols];
    for (c, &sc) in s.iter().enumerate().take(used) {
        let v = svd.right.col(c);
        let proj: f64 = (0..cols).map(|j| v[j] * target[j]).sum();
        let coef = proj / sc;
        for (i, b) in beta_rows.iter_mut().enumerate() {
            *b += coef * svd.left[(i, c)];
        }
        for (j, f) in fitted.iter_mut().enumerate() {
            *f += proj * v[j];
        }
    }
    let sse: f64 = target.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum();
    let beta: Vec<f64> = beta_rows.into_iter().rev().collect();
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Fit("non-finite coefficients".into()));
    }
    Ok(BetaModel {
        beta,
        l,
        k_hat: used,
        residual_rms: (sse / cols as f64).sqrt(),
    })
}

/// `beta . lags` with `lags[0] = y(t - 1)`.
pub fn forecast_f(model: &BetaModel, lags: &[f64]) -> Result<f64> {
    if lags.len() != model.beta.len() {
        return Err(Error::Shape(format!(
            "expected {} lags, got {}",
            model.beta.len(),
            lags.len()
        )));
    }
    Ok(dot(&model.beta, lags))
}

/// Multi-step forecast that feeds its own predictions back as lags.
/// `history` is oldest-first and must hold at least `L - 1` values.
pub fn forecast_recursive(model: &BetaModel, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let p = model.beta.len();
    if history.len() < p {
        return Err(Error::Shape(format!(
            "need at least {p} past values, got {}",
            history.len()
        )));
    }
    let mut buf: Vec<f64> = history[history.len() - p..].to_vec();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let next: f64 = model
            .beta
            .iter()
            .zip(buf.iter().rev())
            .map(|(b, y)| b * y)
            .sum();
        out.push(next);
        buf.remove(0);
        buf.push(next);
    }
    Ok(out)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series() {
        let panel = TimePanel::from_series(vec![vec![1.0; 20]]).unwrap();
        let m = fit_beta(&panel, 2, RankRule::Fixed(1)).unwrap();
        assert!((m.beta[0] - 1.0).abs() < 1e-12);
        assert!((forecast_f(&m, &[1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(m.residual_rms < 1e-12);
    }

    #[test]
    fn geometric_series() {
        let lambda = 0.9f64;
        let panel = TimePanel::from_series(vec![(1..=40).map(|t| lambda.powi(t)).collect()])
            .unwrap();
        let m = fit_beta(&panel, 2, RankRule::Fixed(1)).unwrap();
        assert!((m.beta[0] - lambda).abs() < 1e-12);
        assert!(m.residual_rms < 1e-12);
    }

    #[test]
    fn lag_ordering_is_most_recent_first() {
        // y(t) = 2 y(t-1) - y(t-2) reproduces a straight line.
        let panel =
            TimePanel::from_series(vec![(0..60).map(|t| 0.5 * t as f64 + 1.0).collect()]).unwrap();
        let m = fit_beta(&panel, 3, RankRule::Fixed(2)).unwrap();
        let pred = forecast_f(&m, &[30.5, 30.0]).unwrap();
        assert!((pred - 31.0).abs() < 1e-9, "{pred}");
        let reversed = forecast_f(&m, &[30.0, 30.5]).unwrap();
        assert!((reversed - 31.0).abs() > 0.1);
    }

    #[test]
    fn forecast_arithmetic() {
        let m = |beta: Vec<f64>| BetaModel {
            l: beta.len() + 1,
            beta,
            k_hat: 1,
            residual_rms: 0.0,
        };
        assert_eq!(forecast_f(&m(vec![1.0]), &[3.7]).unwrap(), 3.7);
        assert_eq!(forecast_f(&m(vec![0.0; 4]), &[1., 2., 3., 4.]).unwrap(), 0.0);
        assert_eq!(forecast_f(&m(vec![0.5, 0.5]), &[2., 4.]).unwrap(), 3.0);
        assert!(matches!(forecast_f(&m(vec![0.5, 0.5]), &[2.]), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_design_is_rejected() {
        let panel = TimePanel::from_series(vec![vec![0.0; 12]]).unwrap();
        let stacked = pagemat::stack(&panel, 3).unwrap();
        assert!(matches!(fit_beta_stacked(&stacked, 1), Err(Error::Fit(_))));
    }

    #[test]
    fn short_segment_rejected() {
        let panel = TimePanel::from_series(vec![vec![1.0; 12]]).unwrap();
        assert!(matches!(fit_beta(&panel, 1, RankRule::Fixed(1)), Err(Error::Fit(_))));
    }

    #[test]
    fn recursive_continues_linear_trend() {
        let m = BetaModel {
            beta: vec![2.0, -1.0],
            l: 3,
            k_hat: 2,
            residual_rms: 0.0,
        };
        let out = forecast_recursive(&m, &[1.0, 2.0, 3.0], 3).unwrap();
        assert_eq!(out, vec![4.0, 5.0, 6.0]);
    }
}
