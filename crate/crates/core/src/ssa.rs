//! Stage one: estimate the deterministic component of every series by hard-thresholding the
//! stacked Page matrix, and take the remainder as the stationary residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowrank::{self, RankRule};
use crate::pagemat::{self, StackedPage};
use crate::panel::TimePanel;

/// Per-series split `y = f_hat + x_hat` over the retained window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Decomposition {
    /// `N x T_eff` estimates of the deterministic component.
    pub f_hat: Vec<Vec<f64>>,
    /// `N x T_eff` residuals `y - f_hat`.
    pub x_hat: Vec<Vec<f64>>,
    pub l: usize,
    pub k_hat: usize,
    /// Leading observations left out because `L` does not divide `T`.
    pub origin: usize,
    /// Absolute time index of the first retained observation.
    pub t_start: i64,
    /// Full spectrum of the stacked observation matrix.
    pub singular_values: Vec<f64>,
}

impl Decomposition {
    pub fn n_series(&self) -> usize {
        self.f_hat.len()
    }

    /// Retained observations per series.
    pub fn t_eff(&self) -> usize {
        self.f_hat[0].len()
    }

    /// `s_k * sqrt(k) / sqrt(N T)`, a data-side proxy for how balanced the kept spectrum is.
    pub fn spectrum_balance(&self) -> f64 {
        let k = self.k_hat;
        let nt = (self.n_series() * self.t_eff()) as f64;
        self.singular_values[k - 1] * (k as f64).sqrt() / nt.sqrt()
    }
}

pub fn decompose(panel: &TimePanel, l: usize, rule: RankRule) -> Result<Decomposition> {
    let stacked = pagemat::stack(panel, l)?;
    decompose_stacked(&stacked, panel.t0(), rule)
}

pub(crate) fn decompose_stacked(
    stacked: &StackedPage,
    t0: i64,
    rule: RankRule,
) -> Result<Decomposition> {
    let shape = stacked.shape;
    if shape.cols_per_series == 0 {
        return Err(Error::Shape("no complete segment".into()));
    }
    let svd = lowrank::svd(stacked.data.as_ref())?;
    let k_hat = lowrank::select_rank(
        &svd.singular_values,
        rule,
        (shape.rows, shape.total_cols()),
    )?;
    let zf = svd.reconstruct(k_hat);

    let mut f_hat = Vec::with_capacity(shape.n_series);
    let mut x_hat = Vec::with_capacity(shape.n_series);
    for n in 0..shape.n_series {
        let f = pagemat::read_series(&zf, &shape, n);
        let y = stacked.series(n);
        x_hat.push(y.iter().zip(&f).map(|(y, f)| y - f).collect());
        f_hat.push(f);
    }
    Ok(Decomposition {
        f_hat,
        x_hat,
        l: shape.rows,
        k_hat,
        origin: stacked.origin,
        t_start: t0 + stacked.origin as i64,
        singular_values: svd.singular_values,
    })
}

/// Mean squared error of `f_hat` for series `n` against the true component, over the
/// retained window. `truth` must cover that window on the same absolute time axis.
pub fn est_err(decomp: &Decomposition, truth: &TimePanel, n: usize) -> Result<f64> {
    if n >= decomp.n_series() || truth.n_series() != decomp.n_series() {
        return Err(Error::Shape(format!(
            "series {n} / truth with {} series vs decomposition with {}",
            truth.n_series(),
            decomp.n_series()
        )));
    }
    let t_eff = decomp.t_eff();
    let start = decomp.t_start - truth.t0();
    if start < 0 || start as usize + t_eff > truth.len() {
        return Err(Error::Shape(format!(
            "truth covers t in [{}, {}) but the decomposition window is [{}, {})",
            truth.t0(),
            truth.t_end(),
            decomp.t_start,
            decomp.t_start + t_eff as i64
        )));
    }
    let start = start as usize;
    let f = &truth.series(n)[start..start + t_eff];
    let sse: f64 = decomp.f_hat[n]
        .iter()
        .zip(f)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sse / t_eff as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn toy_decomp(f_hat: Vec<f64>) -> Decomposition {
        let n = f_hat.len();
        Decomposition {
            x_hat: vec![vec![0.0; n]],
            f_hat: vec![f_hat],
            l: 1,
            k_hat: 1,
            origin: 0,
            t_start: 1,
            singular_values: vec![1.0],
        }
    }

    #[test]
    fn est_err_arithmetic() {
        let truth = TimePanel::from_series(vec![vec![0.0; 4]]).unwrap();
        assert_eq!(est_err(&toy_decomp(vec![0.0; 4]), &truth, 0).unwrap(), 0.0);
        assert_eq!(est_err(&toy_decomp(vec![1., -1., 0., 0.]), &truth, 0).unwrap(), 0.5);
        let truth = TimePanel::from_series(vec![vec![2.0; 100]]).unwrap();
        let e = est_err(&toy_decomp(vec![2.1; 100]), &truth, 0).unwrap();
        assert!((e - 0.01).abs() < 1e-12);
    }

    #[test]
    fn est_err_misaligned() {
        let truth = TimePanel::from_series(vec![vec![0.0; 3]]).unwrap();
        assert!(matches!(
            est_err(&toy_decomp(vec![0.0; 4]), &truth, 0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn constant_panel_recovered() {
        let panel = TimePanel::from_series(vec![vec![3.5; 40], vec![3.5; 40]]).unwrap();
        let d = decompose(&panel, 5, RankRule::Fixed(1)).unwrap();
        for n in 0..2 {
            assert!(d.f_hat[n].iter().all(|v| (v - 3.5).abs() < 1e-12));
            assert!(d.x_hat[n].iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn noiseless_sinusoid_mixture_is_exact() {
        let t_len = 512;
        let g = |w: f64, ph: f64| (1..=t_len).map(move |t| (w * t as f64 + ph).sin());
        let g1: Vec<f64> = g(2.0 * PI / 37.0, 0.3).collect();
        let g2: Vec<f64> = g(2.0 * PI / 11.0, 1.7).collect();
        let s1: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| 1.3 * a - 0.4 * b).collect();
        let s2: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| -0.2 * a + 2.0 * b).collect();
        let panel = TimePanel::from_series(vec![s1, s2]).unwrap();
        let l = pagemat::default_l(2, t_len, 1.0);
        let d = decompose(&panel, l, RankRule::Fixed(4)).unwrap();
        assert_eq!(d.k_hat, 4);
        for n in 0..2 {
            let err = est_err(&d, &panel, n).unwrap();
            assert!(err.sqrt() < 1e-8, "series {n}: rmse {}", err.sqrt());
        }
    }

    #[test]
    fn residual_plus_estimate_reproduces_retained_window() {
        let y: Vec<f64> = (0..37).map(|t| ((t * 7919) % 13) as f64 - 6.0).collect();
        let panel = TimePanel::from_series(vec![y.clone()]).unwrap();
        let d = decompose(&panel, 4, RankRule::Fixed(2)).unwrap();
        assert_eq!(d.origin, 1);
        assert_eq!(d.t_start, 2);
        for (i, (f, x)) in d.f_hat[0].iter().zip(&d.x_hat[0]).enumerate() {
            assert!((f + x - y[i + 1]).abs() < 1e-12);
        }
    }
}
