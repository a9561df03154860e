//! End-to-end pipeline: stacked-Page decomposition, linear recurrence for the deterministic
//! part, per-series AR models on the residuals, and the rolling one-step forecasting state.
//!
//! Forecasting is a two-call protocol per series and time step. [`SamossaModel::forecast_step`]
//! is pure and returns a [`StepForecast`] for the next time index; [`SamossaModel::observe`]
//! consumes that forecast together with the realized value, which advances the series by one
//! step. Observing with a stale forecast fails with [`Error::State`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ar::{self, ArModel};
use crate::error::{Error, Result};
use crate::forecaster::{self, BetaModel};
use crate::lowrank::RankRule;
use crate::pagemat;
use crate::panel::TimePanel;
use crate::ssa::{self, Decomposition};

pub const MODEL_VERSION: &str = "1";

/// Segment length: explicit, or derived from the panel size and shape ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SegmentLength {
    #[default]
    Auto,
    Fixed(usize),
}

impl SegmentLength {
    pub fn resolve(self, n_series: usize, len: usize, shape_ratio: f64) -> usize {
        match self {
            SegmentLength::Auto => pagemat::default_l(n_series, len, shape_ratio),
            SegmentLength::Fixed(l) => l,
        }
    }
}

impl FromStr for SegmentLength {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(SegmentLength::Auto);
        }
        match s.parse::<usize>() {
            Ok(l) if l >= 2 => Ok(SegmentLength::Fixed(l)),
            _ => Err(Error::Config(format!(
                "segment length must be 'auto' or an integer >= 2, got '{s}'"
            ))),
        }
    }
}

impl fmt::Display for SegmentLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentLength::Auto => f.write_str("auto"),
            SegmentLength::Fixed(l) => write!(f, "{l}"),
        }
    }
}

/// AR order for every series: fixed, or chosen on a validation window from a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArOrder {
    Fixed(usize),
    Grid(Vec<usize>),
}

impl Default for ArOrder {
    fn default() -> Self {
        ArOrder::Fixed(1)
    }
}

impl FromStr for ArOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("AR order must be an integer, 'grid' or 'grid:a,b,..', got '{s}'"));
        if s == "grid" {
            return Ok(ArOrder::Grid(vec![0, 1, 2, 3]));
        }
        if let Some(list) = s.strip_prefix("grid:") {
            let grid = list
                .split(',')
                .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            if grid.is_empty() {
                return Err(bad());
            }
            return Ok(ArOrder::Grid(grid));
        }
        s.parse().map(ArOrder::Fixed).map_err(|_| bad())
    }
}

impl fmt::Display for ArOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArOrder::Fixed(p) => write!(f, "{p}"),
            ArOrder::Grid(g) => {
                let list: Vec<String> = g.iter().map(ToString::to_string).collect();
                write!(f, "grid:{}", list.join(","))
            }
        }
    }
}

macro_rules! serde_via_str {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                #[derive(Deserialize)]
                #[serde(untagged)]
                enum Repr {
                    Num(u64),
                    Str(String),
                }
                let s = match Repr::deserialize(d)? {
                    Repr::Num(n) => n.to_string(),
                    Repr::Str(s) => s,
                };
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_via_str!(SegmentLength);
serde_via_str!(ArOrder);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamossaConfig {
    #[serde(default)]
    pub l: SegmentLength,
    pub rank: RankRule,
    #[serde(default)]
    pub order: ArOrder,
    /// Columns-to-rows ratio used when `l` is `Auto`.
    #[serde(default = "one")]
    pub shape_ratio: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for SamossaConfig {
    fn default() -> Self {
        Self {
            l: SegmentLength::Auto,
            rank: RankRule::Energy(0.9),
            order: ArOrder::default(),
            shape_ratio: 1.0,
        }
    }
}

impl SamossaConfig {
    pub fn validate(&self) -> Result<()> {
        self.rank.validate()?;
        if !(self.shape_ratio > 0.0 && self.shape_ratio.is_finite()) {
            return Err(Error::Config(format!(
                "shape ratio {} must be positive",
                self.shape_ratio
            )));
        }
        if let SegmentLength::Fixed(l) = self.l {
            if l < 2 {
                return Err(Error::Config(format!("segment length {l} must be >= 2")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SamossaConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "L={} rank={} p={} ratio={}",
            self.l, self.rank, self.order, self.shape_ratio
        )
    }
}

/// Resolved configuration recorded with a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedConfig {
    pub l: usize,
    pub rank: RankRule,
    pub k_hat: usize,
    pub order: ArOrder,
    pub shape_ratio: f64,
}

/// Rolling state of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesState {
    /// Absolute time index of the latest observation.
    pub last_t: i64,
    /// Last `L - 1` observations, most recent first.
    pub obs_lags: Vec<f64>,
    /// Last `max p` residuals `y - f_hat`, most recent first.
    pub resid_lags: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamossaModel {
    pub version: String,
    pub names: Vec<String>,
    pub config: FittedConfig,
    pub beta: BetaModel,
    pub ar: Vec<ArModel>,
    pub state: Vec<SeriesState>,
}

/// One-step forecast for `series` at absolute time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepForecast {
    pub series: usize,
    pub t: i64,
    pub y_hat: f64,
    pub f_hat: f64,
    pub x_hat: f64,
}

/// Decomposition and linear recurrence, shared by every AR order fitted on the same panel.
#[derive(Debug, Clone)]
pub struct BaseFit {
    pub decomposition: Decomposition,
    pub beta: BetaModel,
    pub rank: RankRule,
    pub shape_ratio: f64,
    names: Vec<String>,
    obs_tail: Vec<Vec<f64>>,
    last_t: i64,
}

impl BaseFit {
    pub fn new(panel: &TimePanel, l: SegmentLength, rank: RankRule, shape_ratio: f64) -> Result<Self> {
        let l = l.resolve(panel.n_series(), panel.len(), shape_ratio);
        if l < 2 {
            return Err(Error::Config(format!(
                "segment length L={l} must be >= 2 (panel has T={})",
                panel.len()
            )));
        }
        let stacked = pagemat::stack(panel, l)?;
        let decomposition = ssa::decompose_stacked(&stacked, panel.t0(), rank)?;
        let beta = forecaster::fit_beta_stacked(&stacked, decomposition.k_hat)?;
        let obs_tail = panel
            .values()
            .iter()
            .map(|s| s[s.len() - (l - 1)..].iter().rev().copied().collect())
            .collect();
        Ok(Self {
            decomposition,
            beta,
            rank,
            shape_ratio,
            names: panel.names().to_vec(),
            obs_tail,
            last_t: panel.t_end() - 1,
        })
    }

    /// Completes the model with AR(`p`) residual models for every series.
    pub fn with_order(&self, p: usize) -> Result<SamossaModel> {
        let ar = self
            .decomposition
            .x_hat
            .par_iter()
            .map(|x| ar::fit_ar(x, p))
            .collect::<Result<Vec<_>>>()?;
        let state = self
            .decomposition
            .x_hat
            .iter()
            .zip(&self.obs_tail)
            .map(|(x, obs)| SeriesState {
                last_t: self.last_t,
                obs_lags: obs.clone(),
                resid_lags: x[x.len() - p..].iter().rev().copied().collect(),
            })
            .collect();
        Ok(SamossaModel {
            version: MODEL_VERSION.to_owned(),
            names: self.names.clone(),
            config: FittedConfig {
                l: self.decomposition.l,
                rank: self.rank,
                k_hat: self.decomposition.k_hat,
                order: ArOrder::Fixed(p),
                shape_ratio: self.shape_ratio,
            },
            beta: self.beta.clone(),
            ar,
            state,
        })
    }
}

impl SamossaModel {
    /// Fits on the whole panel. Requires a fixed AR order; use [`fit_with_validation`]
    /// to choose it from a grid.
    pub fn fit(panel: &TimePanel, config: &SamossaConfig) -> Result<Self> {
        config.validate()?;
        let p = match &config.order {
            ArOrder::Fixed(p) => *p,
            ArOrder::Grid(_) => {
                return Err(Error::Config(
                    "an AR order grid needs a validation window".into(),
                ))
            }
        };
        BaseFit::new(panel, config.l, config.rank, config.shape_ratio)?.with_order(p)
    }

    pub fn n_series(&self) -> usize {
        self.state.len()
    }

    /// Same deterministic part with every AR model replaced by the order-0 model.
    pub fn without_ar(&self) -> Self {
        let mut m = self.clone();
        for (ar, st) in m.ar.iter_mut().zip(&mut m.state) {
            *ar = ArModel::zero(ar.noise_var);
            st.resid_lags.clear();
        }
        m.config.order = ArOrder::Fixed(0);
        m
    }

    fn check_state(&self, n: usize) -> Result<&SeriesState> {
        let st = self.state.get(n).ok_or_else(|| {
            Error::State(format!("series {n} out of range ({} series)", self.state.len()))
        })?;
        let ar = &self.ar[n];
        if st.obs_lags.len() != self.beta.n_lags() || st.resid_lags.len() < ar.p {
            return Err(Error::State(format!(
                "series {n} forecasting state is not initialized"
            )));
        }
        Ok(st)
    }

    /// Forecast for the next time step of series `n`. Does not change the model.
    pub fn forecast_step(&self, n: usize) -> Result<StepForecast> {
        let st = self.check_state(n)?;
        let ar = &self.ar[n];
        let f_hat = forecaster::forecast_f(&self.beta, &st.obs_lags)?;
        let x_hat = ar::forecast_ar(ar, &st.resid_lags[..ar.p])?;
        Ok(StepForecast {
            series: n,
            t: st.last_t + 1,
            y_hat: f_hat + x_hat,
            f_hat,
            x_hat,
        })
    }

    /// Feeds the realized value for the step `forecast` was issued for.
    pub fn observe(&mut self, forecast: &StepForecast, y: f64) -> Result<()> {
        let n = forecast.series;
        self.check_state(n)?;
        let st = &mut self.state[n];
        if forecast.t != st.last_t + 1 {
            return Err(Error::State(format!(
                "series {n}: forecast for t={} but next step is t={}",
                forecast.t,
                st.last_t + 1
            )));
        }
        if !y.is_finite() {
            return Err(Error::State(format!("series {n}: non-finite observation")));
        }
        push_front(&mut st.obs_lags, y);
        push_front(&mut st.resid_lags, y - forecast.f_hat);
        st.last_t += 1;
        Ok(())
    }

    /// Forecasts every series, then observes `ys`. Returns the forecasts.
    pub fn step_all(&mut self, ys: &[f64]) -> Result<Vec<StepForecast>> {
        if ys.len() != self.n_series() {
            return Err(Error::Shape(format!(
                "{} values for {} series",
                ys.len(),
                self.n_series()
            )));
        }
        let forecasts = (0..self.n_series())
            .map(|n| self.forecast_step(n))
            .collect::<Result<Vec<_>>>()?;
        for (fc, y) in forecasts.iter().zip(ys) {
            self.observe(fc, *y)?;
        }
        Ok(forecasts)
    }

    /// `h`-step forecast that feeds predictions back in place of observations.
    pub fn forecast_recursive(&self, n: usize, horizon: usize) -> Result<Vec<f64>> {
        let st = self.check_state(n)?;
        let ar = &self.ar[n];
        let mut obs = st.obs_lags.clone();
        let mut resid = st.resid_lags[..ar.p].to_vec();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let f = forecaster::forecast_f(&self.beta, &obs)?;
            let x = ar::forecast_ar(ar, &resid)?;
            out.push(f + x);
            push_front(&mut obs, f + x);
            push_front(&mut resid, x);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Persist(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            row: e.line(),
            msg: e.to_string(),
        })?;
        match value.get("version") {
            Some(serde_json::Value::String(v)) if v == MODEL_VERSION => {}
            Some(v) => {
                return Err(Error::Persist(format!(
                    "unsupported model version {v} (expected \"{MODEL_VERSION}\")"
                )))
            }
            None => return Err(Error::Persist("model file has no version field".into())),
        }
        let model: SamossaModel = serde_json::from_value(value).map_err(|e| Error::Parse {
            row: 0,
            msg: e.to_string(),
        })?;
        model.check_consistency()?;
        Ok(model)
    }

    fn check_consistency(&self) -> Result<()> {
        let n = self.names.len();
        if self.ar.len() != n || self.state.len() != n {
            return Err(Error::Persist(format!(
                "{} names, {} AR models, {} states",
                n,
                self.ar.len(),
                self.state.len()
            )));
        }
        if self.beta.beta.len() + 1 != self.config.l {
            return Err(Error::Persist(format!(
                "beta has {} coefficients for L={}",
                self.beta.beta.len(),
                self.config.l
            )));
        }
        for (i, (ar, st)) in self.ar.iter().zip(&self.state).enumerate() {
            if ar.alpha.len() != ar.p
                || st.obs_lags.len() != self.beta.beta.len()
                || st.resid_lags.len() < ar.p
            {
                return Err(Error::Persist(format!("series {i}: lag lengths do not match model")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn push_front(buf: &mut Vec<f64>, v: f64) {
    if buf.is_empty() {
        return;
    }
    buf.pop();
    buf.insert(0, v);
}

/// Fits on `train`, picks the AR order from `config.order` by mean R^2 of rolling one-step
/// forecasts over `valid` (smaller order wins ties), then refits on `train + valid`.
pub fn fit_with_validation(
    train: &TimePanel,
    valid: &TimePanel,
    config: &SamossaConfig,
) -> Result<(SamossaModel, usize)> {
    config.validate()?;
    let grid = match &config.order {
        ArOrder::Fixed(p) => vec![*p],
        ArOrder::Grid(g) => g.clone(),
    };
    let base = BaseFit::new(train, config.l, config.rank, config.shape_ratio)?;
    let mut best: Option<(f64, usize)> = None;
    let mut failures = Vec::new();
    let mut sorted = grid.clone();
    sorted.sort_unstable();
    sorted.dedup();
    for p in sorted {
        let score = base
            .with_order(p)
            .and_then(|mut m| crate::eval::rolling_eval(&mut m, valid, None))
            .map(|r| r.mean_r2);
        match score {
            Ok(s) if best.is_none_or(|(b, _)| s > b) => best = Some((s, p)),
            Ok(_) => {}
            Err(e) => failures.push((format!("p={p}"), e.to_string())),
        }
    }
    let (_, p) = best.ok_or(Error::Search { failures })?;
    let full = train.concat(valid)?;
    let fixed = SamossaConfig {
        order: ArOrder::Fixed(p),
        ..config.clone()
    };
    Ok((SamossaModel::fit(&full, &fixed)?, p))
}
