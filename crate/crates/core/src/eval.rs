//! Metrics, rolling one-step evaluation, configuration search and the synthetic experiment
//! drivers.
//!
//! `ForErr` is scored against the conditional mean `f(t) + alpha . X(t - 1)` when the
//! generating components are supplied, and against the realized values otherwise.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ar;
use crate::error::{Error, Result};
use crate::lowrank::RankRule;
use crate::pagemat;
use crate::panel::TimePanel;
use crate::samossa::{ArOrder, BaseFit, SamossaConfig, SamossaModel, SegmentLength};
use crate::ssa;
use crate::synth::{self, GeneratorSpec, SyntheticPanel};

/// `1 - SSE / SST`, with `SST` taken about the mean of `actual`.
pub fn r_squared(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() || actual.len() < 2 {
        return Err(Error::Metric(format!(
            "need two equal-length vectors of length >= 2, got {} and {}",
            pred.len(),
            actual.len()
        )));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let sst: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::Metric("actual values have zero variance".into()));
    }
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// Generating components of a synthetic panel, used to score against conditional means.
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub f: &'a TimePanel,
    pub x: &'a TimePanel,
    pub alphas: &'a [Vec<f64>],
}

impl<'a> Truth<'a> {
    pub fn of(synthetic: &'a SyntheticPanel) -> Self {
        Self {
            f: &synthetic.f,
            x: &synthetic.x,
            alphas: &synthetic.alphas,
        }
    }

    /// `E[y_n(t) | past] = f_n(t) + sum_i alpha_i x_n(t - i)`.
    pub fn conditional_mean(&self, n: usize, t: i64) -> Result<f64> {
        let missing = || Error::Shape(format!("truth does not cover series {n} at t={t}"));
        let mut m = self.f.at(n, t).ok_or_else(missing)?;
        let alpha = self.alphas.get(n).ok_or_else(missing)?;
        for (i, a) in alpha.iter().enumerate() {
            m += a * self.x.at(n, t - 1 - i as i64).ok_or_else(missing)?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_series_r2: Vec<f64>,
    pub mean_r2: f64,
    /// Per-series in-sample estimation error, when known.
    pub est_err: Option<Vec<f64>>,
    /// Mean squared one-step error over all series and steps.
    pub for_err: f64,
    /// `conditional_mean` or `realized`.
    pub for_err_target: String,
    pub runtime_secs: f64,
    pub config: String,
    /// `N x H` one-step forecasts.
    pub forecasts: Vec<Vec<f64>>,
}

/// Rolling one-step evaluation over `test`: forecast every series, then reveal the realized
/// values. The model is never refitted; its state ends aligned with the end of `test`.
pub fn rolling_eval(
    model: &mut SamossaModel,
    test: &TimePanel,
    truth: Option<Truth<'_>>,
) -> Result<MetricReport> {
    let start = Instant::now();
    if test.n_series() != model.n_series() {
        return Err(Error::State(format!(
            "model has {} series, test panel has {}",
            model.n_series(),
            test.n_series()
        )));
    }
    for (n, st) in model.state.iter().enumerate() {
        if st.last_t + 1 != test.t0() {
            return Err(Error::State(format!(
                "series {n} expects t={} next but the test window starts at t={}",
                st.last_t + 1,
                test.t0()
            )));
        }
    }
    let (n_series, h) = (test.n_series(), test.len());
    let mut forecasts = vec![Vec::with_capacity(h); n_series];
    let mut sq = 0.0;
    for i in 0..h {
        for (n, out) in forecasts.iter_mut().enumerate() {
            let fc = model.forecast_step(n)?;
            let y = test.series(n)[i];
            let target = match truth {
                Some(tr) => tr.conditional_mean(n, fc.t)?,
                None => y,
            };
            sq += (fc.y_hat - target).powi(2);
            out.push(fc.y_hat);
            model.observe(&fc, y)?;
        }
    }
    let per_series_r2 = forecasts
        .iter()
        .zip(test.values())
        .map(|(p, a)| r_squared(p, a))
        .collect::<Result<Vec<_>>>()?;
    let mean_r2 = per_series_r2.iter().sum::<f64>() / n_series as f64;
    Ok(MetricReport {
        per_series_r2,
        mean_r2,
        est_err: None,
        for_err: sq / (n_series * h) as f64,
        for_err_target: if truth.is_some() { "conditional_mean" } else { "realized" }.into(),
        runtime_secs: start.elapsed().as_secs_f64(),
        config: model.config_summary(),
        forecasts,
    })
}

impl SamossaModel {
    pub fn config_summary(&self) -> String {
        let c = &self.config;
        format!(
            "L={} rank={} k_hat={} p={} ratio={}",
            c.l, c.rank, c.k_hat, c.order, c.shape_ratio
        )
    }
}

/// Lattice of candidate configurations: every rank rule x shape ratio x AR order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigGrid {
    pub ranks: Vec<RankRule>,
    pub shape_ratios: Vec<f64>,
    pub orders: Vec<usize>,
    #[serde(default)]
    pub l: SegmentLength,
}

impl Default for ConfigGrid {
    /// Universal threshold, 90% energy and five components; ratios 1, 3, 5; orders 0 to 3.
    fn default() -> Self {
        Self {
            ranks: vec![RankRule::Universal, RankRule::Energy(0.9), RankRule::Fixed(5)],
            shape_ratios: vec![1.0, 3.0, 5.0],
            orders: vec![0, 1, 2, 3],
            l: SegmentLength::Auto,
        }
    }
}

impl ConfigGrid {
    pub fn single(config: &SamossaConfig, p: usize) -> Self {
        Self {
            ranks: vec![config.rank],
            shape_ratios: vec![config.shape_ratio],
            orders: vec![p],
            l: config.l,
        }
    }

    /// Lattice points in evaluation order (rank, then ratio, then order).
    pub fn configs(&self) -> Vec<SamossaConfig> {
        let mut out = Vec::new();
        for &rank in &self.ranks {
            for &shape_ratio in &self.shape_ratios {
                for &p in &self.orders {
                    out.push(SamossaConfig {
                        l: self.l,
                        rank,
                        order: ArOrder::Fixed(p),
                        shape_ratio,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEntry {
    pub config: SamossaConfig,
    pub k_hat: Option<usize>,
    pub mean_r2: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOutcome {
    /// One entry per lattice point, in lattice order.
    pub entries: Vec<GridEntry>,
}

impl GridOutcome {
    /// Best successful entry among those accepted by `filter`. Ties on validation R^2 go to
    /// the smaller `k_hat`, then smaller order, then smaller shape ratio, then lattice order.
    pub fn best_where(&self, filter: impl Fn(&SamossaConfig) -> bool) -> Result<&GridEntry> {
        let key = |e: &GridEntry| {
            let p = match e.config.order {
                ArOrder::Fixed(p) => p,
                ArOrder::Grid(_) => usize::MAX,
            };
            (e.k_hat.unwrap_or(usize::MAX), p, e.config.shape_ratio)
        };
        let mut best: Option<&GridEntry> = None;
        for e in self.entries.iter().filter(|e| filter(&e.config)) {
            let Some(score) = e.mean_r2 else { continue };
            best = match best {
                None => Some(e),
                Some(b) => {
                    let bs = b.mean_r2.unwrap_or(f64::NEG_INFINITY);
                    let (kb, pb, rb) = key(b);
                    let (ke, pe, re) = key(e);
                    let better = score > bs
                        || (score == bs && (ke, pe).cmp(&(kb, pb)).then(re.total_cmp(&rb)).is_lt());
                    Some(if better { e } else { b })
                }
            };
        }
        best.ok_or_else(|| Error::Search {
            failures: self
                .entries
                .iter()
                .filter(|e| filter(&e.config))
                .map(|e| {
                    (
                        e.config.to_string(),
                        e.error.clone().unwrap_or_else(|| "no score".into()),
                    )
                })
                .collect(),
        })
    }

    pub fn best(&self) -> Result<&GridEntry> {
        self.best_where(|_| true)
    }
}

/// Fits every lattice point on `train` and scores it by mean R^2 of rolling one-step forecasts
/// over `valid`. The decomposition is shared by all orders with the same rank rule and ratio.
pub fn grid_search(train: &TimePanel, valid: &TimePanel, grid: &ConfigGrid) -> Result<GridOutcome> {
    let configs = grid.configs();
    if configs.is_empty() {
        return Err(Error::Config("empty configuration grid".into()));
    }
    let groups: Vec<(RankRule, f64)> = grid
        .ranks
        .iter()
        .flat_map(|&r| grid.shape_ratios.iter().map(move |&s| (r, s)))
        .collect();
    let scored: Vec<Vec<GridEntry>> = groups
        .par_iter()
        .map(|&(rank, ratio)| {
            let base = rank
                .validate()
                .and_then(|_| BaseFit::new(train, grid.l, rank, ratio))
                .map_err(|e| e.to_string());
            grid.orders
                .iter()
                .map(|&p| {
                    let config = SamossaConfig {
                        l: grid.l,
                        rank,
                        order: ArOrder::Fixed(p),
                        shape_ratio: ratio,
                    };
                    let result = base.as_ref().map_err(Clone::clone).and_then(|b| {
                        b.with_order(p)
                            .and_then(|mut m| rolling_eval(&mut m, valid, None))
                            .map(|r| (b.decomposition.k_hat, r.mean_r2))
                            .map_err(|e| e.to_string())
                    });
                    match result {
                        Ok((k, r2)) => GridEntry {
                            config,
                            k_hat: Some(k),
                            mean_r2: Some(r2),
                            error: None,
                        },
                        Err(e) => GridEntry {
                            config,
                            k_hat: None,
                            mean_r2: None,
                            error: Some(e),
                        },
                    }
                })
                .collect()
        })
        .collect();
    Ok(GridOutcome {
        entries: scored.into_iter().flatten().collect(),
    })
}

/// One seed of the forecasting benchmark: select on validation, refit on train + validation,
/// score on test. The order-0 baseline is selected from the same lattice restricted to p = 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastComparison {
    pub seed: u64,
    pub samossa_config: SamossaConfig,
    pub samossa: MetricReport,
    pub mssa_config: SamossaConfig,
    pub mssa: MetricReport,
}

pub fn forecast_comparison(
    panel: &SyntheticPanel,
    train_len: usize,
    valid_len: usize,
    test_len: usize,
    grid: &ConfigGrid,
) -> Result<ForecastComparison> {
    let y = &panel.y;
    let train = y.slice(0, train_len)?;
    let valid = y.slice(train_len, train_len + valid_len)?;
    let test = y.slice(train_len + valid_len, train_len + valid_len + test_len)?;
    let outcome = grid_search(&train, &valid, grid)?;
    let full = train.concat(&valid)?;
    let run = |entry: &GridEntry| -> Result<(SamossaConfig, MetricReport)> {
        let report = refit_and_score(&full, &test, &entry.config, Some(Truth::of(panel)))?;
        Ok((entry.config.clone(), report))
    };
    let (samossa_config, samossa) = run(outcome.best()?)?;
    let (mssa_config, mssa) =
        run(outcome.best_where(|c| c.order == ArOrder::Fixed(0))?)?;
    Ok(ForecastComparison {
        seed: panel.spec.seed,
        samossa_config,
        samossa,
        mssa_config,
        mssa,
    })
}

/// Fits `config` on `history` and scores rolling one-step forecasts over `test`.
pub fn refit_and_score(
    history: &TimePanel,
    test: &TimePanel,
    config: &SamossaConfig,
    truth: Option<Truth<'_>>,
) -> Result<MetricReport> {
    let mut model = SamossaModel::fit(history, config)?;
    rolling_eval(&mut model, test, truth)
}

/// One run of the estimation experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationRow {
    pub lambda_star: f64,
    pub sqrt_nt: f64,
    pub n_series: usize,
    pub len: usize,
    pub seed: u64,
    pub est_err: f64,
    pub alpha_err: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeFit {
    pub lambda_star: f64,
    /// Slope of `log median EstErr` against `log NT`.
    pub est_err_slope: f64,
    /// Slope of `log median ||alpha_hat - alpha||` against `log NT`.
    pub alpha_err_slope: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationReport {
    pub rows: Vec<EstimationRow>,
    pub slopes: Vec<SlopeFit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationSetup {
    pub lambda_stars: Vec<f64>,
    /// `(N, T)` pairs.
    pub sweep: Vec<(usize, usize)>,
    pub seeds: Vec<u64>,
    pub rank: RankRule,
    pub ar_order: usize,
}

impl Default for EstimationSetup {
    /// `N = 10` with `sqrt(NT)` near 17, 77, 424 and 1732; three harmonics, so rank six.
    fn default() -> Self {
        Self {
            lambda_stars: vec![0.3],
            sweep: vec![(10, 30), (10, 600), (10, 18_000), (10, 300_000)],
            seeds: (1..=10).collect(),
            rank: RankRule::Fixed(6),
            ar_order: 2,
        }
    }
}

/// Estimation error of the first series and AR coefficient error, for every
/// `(lambda*, size, seed)` combination.
pub fn estimation_experiment(setup: &EstimationSetup) -> Result<EstimationReport> {
    let mut jobs = Vec::new();
    for &ls in &setup.lambda_stars {
        for &(n, t) in &setup.sweep {
            for &seed in &setup.seeds {
                jobs.push((ls, n, t, seed));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(ls, n, t, seed)| estimation_run(ls, n, t, seed, setup.rank, setup.ar_order))
        .collect::<Result<Vec<_>>>()?;

    let mut slopes = Vec::new();
    for &ls in &setup.lambda_stars {
        let mut xs = Vec::new();
        let mut est = Vec::new();
        let mut alp = Vec::new();
        for &(n, t) in &setup.sweep {
            let sel: Vec<&EstimationRow> = rows
                .iter()
                .filter(|r| r.lambda_star == ls && r.n_series == n && r.len == t)
                .collect();
            xs.push(((n * t) as f64).ln());
            est.push(median(sel.iter().map(|r| r.est_err)).ln());
            alp.push(median(sel.iter().map(|r| r.alpha_err)).ln());
        }
        slopes.push(SlopeFit {
            lambda_star: ls,
            est_err_slope: ols_slope(&xs, &est),
            alpha_err_slope: ols_slope(&xs, &alp),
        });
    }
    Ok(EstimationReport { rows, slopes })
}

pub fn estimation_run(
    lambda_star: f64,
    n_series: usize,
    len: usize,
    seed: u64,
    rank: RankRule,
    ar_order: usize,
) -> Result<EstimationRow> {
    let panel = synth::generate(&GeneratorSpec::estimation(lambda_star, n_series, len, seed))?;
    let l = pagemat::default_l(n_series, len, 1.0);
    let decomp = ssa::decompose(&panel.y, l, rank)?;
    let est_err = ssa::est_err(&decomp, &panel.f, 0)?;
    let fit = ar::fit_ar(&decomp.x_hat[0], ar_order)?;
    let alpha_err = l2_dist(&fit.alpha, &panel.alphas[0]);
    Ok(EstimationRow {
        lambda_star,
        sqrt_nt: ((n_series * len) as f64).sqrt(),
        n_series,
        len,
        seed,
        est_err,
        alpha_err,
    })
}

impl EstimationReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Persist(e.to_string());
        w.write_record(["lambda_star", "sqrt_nt", "n", "t", "seed", "est_err", "alpha_err"])
            .map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.lambda_star.to_string(),
                r.sqrt_nt.to_string(),
                r.n_series.to_string(),
                r.len.to_string(),
                r.seed.to_string(),
                r.est_err.to_string(),
                r.alpha_err.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Persist(e.to_string()))
    }

    /// Median of `field` over seeds at one `(lambda*, N, T)` point.
    pub fn median_at(
        &self,
        lambda_star: f64,
        n_series: usize,
        len: usize,
        field: impl Fn(&EstimationRow) -> f64,
    ) -> f64 {
        median(
            self.rows
                .iter()
                .filter(|r| r.lambda_star == lambda_star && r.n_series == n_series && r.len == len)
                .map(field),
        )
    }
}

/// Median of a non-empty sample (mean of the middle pair for even sizes). NaN when empty.
pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_squared_examples() {
        let a = [1.0, 2.0, 4.0];
        assert_eq!(r_squared(&a, &a).unwrap(), 1.0);
        assert_eq!(r_squared(&[7.0 / 3.0; 3], &a).unwrap(), 0.0);
        assert_eq!(r_squared(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(r_squared(&[1.0, 1.0], &[3.0, 3.0]), Err(Error::Metric(_))));
        assert!(matches!(r_squared(&[1.0], &[3.0]), Err(Error::Metric(_))));
    }

    #[test]
    fn zero_forecast_on_zero_mean_data() {
        let a = [1.0, -1.0, 2.0, -2.0];
        assert!(r_squared(&[0.0; 4], &a).unwrap() <= 0.0);
    }

    #[test]
    fn median_and_slope() {
        assert_eq!(median([3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median([4.0, 1.0, 2.0, 3.0]), 2.5);
        let xs = [0.0, 1.0, 2.0];
        assert!((ols_slope(&xs, &[1.0, -1.0, -3.0]) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_order_and_ties() {
        let grid = ConfigGrid::default();
        let configs = grid.configs();
        assert_eq!(configs.len(), 36);
        assert_eq!(configs[1].order, ArOrder::Fixed(1));
        let entry = |rank, p, ratio, k, r2| GridEntry {
            config: SamossaConfig {
                l: SegmentLength::Auto,
                rank,
                order: ArOrder::Fixed(p),
                shape_ratio: ratio,
            },
            k_hat: Some(k),
            mean_r2: Some(r2),
            error: None,
        };
        let out = GridOutcome {
            entries: vec![
                entry(RankRule::Fixed(3), 1, 3.0, 3, 0.5),
                entry(RankRule::Fixed(2), 2, 1.0, 2, 0.5),
                entry(RankRule::Fixed(2), 1, 5.0, 2, 0.5),
                entry(RankRule::Fixed(2), 1, 3.0, 2, 0.5),
                entry(RankRule::Fixed(2), 1, 3.0, 2, 0.5),
                entry(RankRule::Fixed(9), 0, 1.0, 9, 0.4),
            ],
        };
        let best = out.best().unwrap();
        assert_eq!(best as *const _, &out.entries[3] as *const _);
        assert_eq!(out.best_where(|c| c.order == ArOrder::Fixed(0)).unwrap().k_hat, Some(9));
    }

    #[test]
    fn all_failures_reported() {
        let failed = GridOutcome {
            entries: vec![GridEntry {
                config: SamossaConfig::default(),
                k_hat: None,
                mean_r2: None,
                error: Some("boom".into()),
            }],
        };
        match failed.best() {
            Err(Error::Search { failures }) => assert_eq!(failures[0].1, "boom"),
            other => panic!("{other:?}"),
        }
    }
}
