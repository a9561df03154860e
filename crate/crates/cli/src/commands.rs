use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use samossa::eval::{self, ConfigGrid, EstimationSetup, MetricReport, Truth};
use samossa::samossa::fit_with_validation;
use samossa::synth::{self, GeneratorSpec};
use samossa::{
    panel, ssa, ArOrder, Error, Layout, RankRule, SamossaConfig, SamossaModel, SplitSpec,
    TimePanel,
};
use serde::{Deserialize, Serialize};

use crate::config::{pick, require, FileConfig, Preset};
use crate::{
    Cli, CliError, Command, DecomposeArgs, EvalArgs, Fig2Args, FitArgs, ForecastArgs, GridArgs,
    InputArgs, ModelArgs, ObserveArgs, SplitArgs, SynthArgs,
};

type CliResult<T = ()> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult {
    let section = match &cli.command {
        Command::Synth(_) => "synth",
        Command::Fit(_) => "fit",
        Command::Decompose(_) => "decompose",
        Command::Forecast(_) => "forecast",
        Command::ObserveForecast(_) => "observe-forecast",
        Command::Eval(_) => "eval",
        Command::Grid(_) => "grid",
        Command::Fig2(_) => "fig2",
    };
    let file = match &cli.config {
        Some(path) => FileConfig::load(path, section)?,
        None => FileConfig::default(),
    };
    let threads = pick(cli.threads, file.threads, 0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;

    match cli.command {
        Command::Synth(a) => synth(a, file),
        Command::Fit(a) => fit(a, file),
        Command::Decompose(a) => decompose(a, file),
        Command::Forecast(a) => forecast(a, file),
        Command::ObserveForecast(a) => observe_forecast(a, file),
        Command::Eval(a) => evaluate(a, file),
        Command::Grid(a) => grid(a, file),
        Command::Fig2(a) => fig2(a, file),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| {
        CliError::Core(Error::Io {
            path: path.to_owned(),
            source,
        })
    }
}

fn out_dir(flag: Option<PathBuf>, file: &FileConfig) -> CliResult<PathBuf> {
    let dir = pick(flag, file.output.clone(), PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Core(Error::Persist(e.to_string())))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn read_input(args: &InputArgs, file: &FileConfig) -> CliResult<(TimePanel, Layout)> {
    let path = require(args.input.clone(), file.input.clone(), "input")?;
    let layout = pick(args.layout, file.layout, Layout::Wide);
    Ok((panel::load_csv(path, layout)?, layout))
}

fn model_config(args: &ModelArgs, p: Option<ArOrder>, file: &FileConfig, default_p: ArOrder) -> CliResult<SamossaConfig> {
    let base = SamossaConfig::default();
    let config = SamossaConfig {
        l: pick(args.l, file.l, base.l),
        rank: pick(args.rank, file.rank, base.rank),
        order: pick(p, file.p.clone(), default_p),
        shape_ratio: pick(args.shape_ratio, file.shape_ratio, base.shape_ratio),
    };
    config.validate()?;
    Ok(config)
}

#[derive(Serialize, Deserialize)]
struct TruthFile {
    spec: GeneratorSpec,
    alphas: Vec<Vec<f64>>,
}

fn synth(a: SynthArgs, file: FileConfig) -> CliResult {
    let preset = pick(a.preset, file.preset, Preset::Fig2);
    let lambda_star = match (a.lambda_star, file.lambda_star.clone()) {
        (Some(v), _) => v,
        (None, Some(v)) => match v.into_vec().as_slice() {
            [one] => *one,
            _ => return Err(CliError::Usage("synth takes a single lambda_star".into())),
        },
        (None, None) => 0.3,
    };
    let seed = pick(a.seed, file.seed, 1);
    let (n_default, len_default) = match preset {
        Preset::Table1 => (25, 10_050),
        Preset::Fig2 | Preset::PureAr => (10, 2500),
    };
    let n = pick(a.n_series, file.n_series, n_default);
    let len = pick(a.len, file.len, len_default);
    let mut spec = match preset {
        Preset::Fig2 => GeneratorSpec::estimation(lambda_star, n, len, seed),
        Preset::Table1 => GeneratorSpec::forecasting(n, len, seed),
        Preset::PureAr => {
            let alpha = synth::ar_from_lambda_star(2, lambda_star)?;
            GeneratorSpec::pure_ar(alpha, 1.0, n, len, seed)
        }
    };
    if let Some(v) = a.noise_var.or(file.noise_var) {
        spec.noise_var = v;
    }
    spec.validate()?;
    let data = synth::generate(&spec)?;

    let layout = pick(a.layout, file.layout, Layout::Wide);
    let dir = out_dir(a.output, &file)?;
    panel::save_csv(&data.y, dir.join("y.csv"), layout)?;
    panel::save_csv(&data.f, dir.join("f.csv"), layout)?;
    panel::save_csv(&data.x, dir.join("x.csv"), layout)?;
    write_json(
        &dir.join("truth.json"),
        &TruthFile {
            spec: data.spec.clone(),
            alphas: data.alphas.clone(),
        },
    )
}

fn fit(a: FitArgs, file: FileConfig) -> CliResult {
    let (panel, _) = read_input(&a.input, &file)?;
    let config = model_config(&a.model, a.p, &file, ArOrder::default())?;
    let model = match &config.order {
        ArOrder::Fixed(_) => SamossaModel::fit(&panel, &config)?,
        ArOrder::Grid(_) => {
            let v = pick(a.valid_len, file.valid_len, 25);
            if v == 0 || v >= panel.len() {
                return Err(CliError::Usage(format!(
                    "--valid-len {v} must be in [1, {})",
                    panel.len()
                )));
            }
            let cut = panel.len() - v;
            fit_with_validation(&panel.slice(0, cut)?, &panel.slice(cut, panel.len())?, &config)?.0
        }
    };
    let path = pick(a.output, file.output, PathBuf::from("model.json"));
    model.save(&path)?;
    println!("{}", model.config_summary());
    Ok(())
}

fn decompose(a: DecomposeArgs, file: FileConfig) -> CliResult {
    let (panel, layout) = read_input(&a.input, &file)?;
    let config = model_config(&a.model, None, &file, ArOrder::Fixed(0))?;
    let l = config.l.resolve(panel.n_series(), panel.len(), config.shape_ratio);
    let d = ssa::decompose(&panel, l, config.rank)?;
    let names = panel.names().to_vec();
    let dir = out_dir(a.output, &file)?;
    let f_hat = TimePanel::new(names.clone(), d.f_hat.clone(), d.t_start)?;
    let x_hat = TimePanel::new(names, d.x_hat.clone(), d.t_start)?;
    panel::save_csv(&f_hat, dir.join("f_hat.csv"), layout)?;
    panel::save_csv(&x_hat, dir.join("x_hat.csv"), layout)?;
    println!("L={} k_hat={} dropped_rows={}", d.l, d.k_hat, d.origin);
    Ok(())
}

fn forecast(a: ForecastArgs, file: FileConfig) -> CliResult {
    let model = SamossaModel::load(require(a.model, file.model, "model")?)?;
    let horizon = pick(a.horizon, file.horizon, 1);
    if horizon == 0 {
        return Err(CliError::Usage("--horizon must be at least 1".into()));
    }
    let paths = (0..model.n_series())
        .map(|n| model.forecast_recursive(n, horizon))
        .collect::<Result<Vec<_>, _>>()?;
    let t0 = model.state[0].last_t + 1;
    let out = TimePanel::new(model.names.clone(), paths, t0)?;
    let layout = pick(a.layout, file.layout, Layout::Wide);
    match a.output.or(file.output) {
        Some(path) => panel::save_csv(&out, path, layout)?,
        None => panel::write_csv(&out, std::io::stdout().lock(), layout)?,
    }
    Ok(())
}

/// Metrics written to `summary.json`; wall-clock time is left out so reruns are identical.
#[derive(Serialize)]
struct Summary {
    config: String,
    mean_r2: f64,
    per_series_r2: Vec<f64>,
    for_err: f64,
    for_err_target: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    est_err: Option<Vec<f64>>,
}

impl From<&MetricReport> for Summary {
    fn from(r: &MetricReport) -> Self {
        Self {
            config: r.config.clone(),
            mean_r2: r.mean_r2,
            per_series_r2: r.per_series_r2.clone(),
            for_err: r.for_err,
            for_err_target: r.for_err_target.clone(),
            est_err: r.est_err.clone(),
        }
    }
}

fn write_forecasts(dir: &Path, test: &TimePanel, report: &MetricReport, layout: Layout) -> CliResult {
    let fc = test.with_values(report.forecasts.clone())?;
    panel::save_csv(&fc, dir.join("forecasts.csv"), layout)?;
    Ok(())
}

fn observe_forecast(a: ObserveArgs, file: FileConfig) -> CliResult {
    let mut model = SamossaModel::load(require(a.model, file.model.clone(), "model")?)?;
    let (mut test, layout) = read_input(&a.input, &file)?;
    if layout == Layout::Wide {
        let t0 = model.state[0].last_t + 1;
        test = TimePanel::new(test.names().to_vec(), test.values().to_vec(), t0)?;
    }
    let report = eval::rolling_eval(&mut model, &test, None)?;
    let dir = out_dir(a.output, &file)?;
    write_forecasts(&dir, &test, &report, layout)?;
    write_json(&dir.join("summary.json"), &Summary::from(&report))?;
    if let Some(path) = a.save_model.or(file.save_model) {
        model.save(path)?;
    }
    println!("mean_r2={}", report.mean_r2);
    Ok(())
}

struct Windows {
    train: TimePanel,
    valid: TimePanel,
    test: TimePanel,
}

fn windows(panel: &TimePanel, a: &SplitArgs, file: &FileConfig) -> CliResult<Windows> {
    let valid = pick(a.valid_len, file.valid_len, 25);
    let test = pick(a.test_len, file.test_len, 25);
    let train = match a.train_len.or(file.train_len) {
        Some(t) => t,
        None => panel.len().checked_sub(valid + test).ok_or_else(|| {
            CliError::Core(Error::Split(format!(
                "panel has {} rows, fewer than validation + test = {}",
                panel.len(),
                valid + test
            )))
        })?,
    };
    let spec = SplitSpec::new(train, train + valid, train + valid + test);
    spec.validate(panel.len())?;
    if test == 0 {
        return Err(CliError::Usage("--test-len must be at least 1".into()));
    }
    Ok(Windows {
        train: panel.slice(0, spec.train_end)?,
        valid: panel.slice(spec.train_end, spec.valid_end)?,
        test: panel.slice(spec.valid_end, spec.test_end)?,
    })
}

struct TruthData {
    f: TimePanel,
    x: TimePanel,
    alphas: Vec<Vec<f64>>,
}

impl TruthData {
    fn load(dir: Option<PathBuf>, layout: Layout) -> CliResult<Option<Self>> {
        let Some(dir) = dir else { return Ok(None) };
        let path = dir.join("truth.json");
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let meta: TruthFile =
            serde_json::from_str(&text).map_err(|e| CliError::Core(Error::Persist(e.to_string())))?;
        Ok(Some(Self {
            f: panel::load_csv(dir.join("f.csv"), layout)?,
            x: panel::load_csv(dir.join("x.csv"), layout)?,
            alphas: meta.alphas,
        }))
    }

    fn view(&self) -> Truth<'_> {
        Truth {
            f: &self.f,
            x: &self.x,
            alphas: &self.alphas,
        }
    }
}

fn evaluate(a: EvalArgs, file: FileConfig) -> CliResult {
    let (panel, layout) = read_input(&a.input, &file)?;
    let config = model_config(&a.model, a.p, &file, ArOrder::Grid(vec![0, 1, 2, 3]))?;
    let w = windows(&panel, &a.split, &file)?;
    let truth = TruthData::load(a.split.truth.or(file.truth.clone()), layout)?;

    let (mut model, _) = fit_with_validation(&w.train, &w.valid, &config)?;
    let mut report = eval::rolling_eval(&mut model, &w.test, truth.as_ref().map(TruthData::view))?;
    if let Some(t) = &truth {
        let history = w.train.concat(&w.valid)?;
        let d = ssa::decompose(&history, model.config.l, model.config.rank)?;
        let errs = (0..d.n_series())
            .map(|n| ssa::est_err(&d, &t.f, n))
            .collect::<Result<Vec<_>, _>>()?;
        report.est_err = Some(errs);
    }

    let dir = out_dir(a.output, &file)?;
    write_forecasts(&dir, &w.test, &report, layout)?;
    write_json(&dir.join("summary.json"), &Summary::from(&report))?;
    println!("{} mean_r2={}", report.config, report.mean_r2);
    if let Some(min) = a.min_r2.or(file.min_r2) {
        if report.mean_r2 < min {
            return Err(CliError::Acceptance(format!(
                "mean R^2 {} below --min-r2 {min}",
                report.mean_r2
            )));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct GridSummary {
    samossa: Summary,
    mssa: Summary,
    gap: f64,
}

fn grid(a: GridArgs, file: FileConfig) -> CliResult {
    let (panel, layout) = read_input(&a.input, &file)?;
    let w = windows(&panel, &a.split, &file)?;
    let truth = TruthData::load(a.split.truth.or(file.truth.clone()), layout)?;
    let lattice = ConfigGrid {
        l: pick(a.l, file.l, ConfigGrid::default().l),
        ..ConfigGrid::default()
    };

    let outcome = eval::grid_search(&w.train, &w.valid, &lattice)?;
    let dir = out_dir(a.output, &file)?;
    let path = dir.join("grid.csv");
    let mut out = String::from("rank,shape_ratio,p,k_hat,mean_r2,error\n");
    for e in &outcome.entries {
        let opt = |v: Option<String>| v.unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.config.rank,
            e.config.shape_ratio,
            e.config.order,
            opt(e.k_hat.map(|k| k.to_string())),
            opt(e.mean_r2.map(|r| r.to_string())),
            opt(e.error.as_ref().map(|m| format!("\"{}\"", m.replace('"', "\"\"")))),
        ));
    }
    fs::File::create(&path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(io_err(&path))?;

    let history = w.train.concat(&w.valid)?;
    let score = |config: &SamossaConfig| {
        eval::refit_and_score(&history, &w.test, config, truth.as_ref().map(TruthData::view))
    };
    let best = score(&outcome.best()?.config)?;
    let base = score(&outcome.best_where(|c| c.order == ArOrder::Fixed(0))?.config)?;
    let summary = GridSummary {
        gap: best.mean_r2 - base.mean_r2,
        samossa: Summary::from(&best),
        mssa: Summary::from(&base),
    };
    write_forecasts(&dir, &w.test, &best, layout)?;
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "selected {} mean_r2={} | order 0: {} mean_r2={}",
        best.config, best.mean_r2, base.config, base.mean_r2
    );
    if let Some(min) = a.min_r2.or(file.min_r2) {
        if best.mean_r2 < min {
            return Err(CliError::Acceptance(format!("mean R^2 {} below --min-r2 {min}", best.mean_r2)));
        }
    }
    if let Some(min) = a.min_gap.or(file.min_gap) {
        if summary.gap < min {
            return Err(CliError::Acceptance(format!("R^2 gain {} below --min-gap {min}", summary.gap)));
        }
    }
    Ok(())
}

fn parse_size(s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::Usage(format!("sweep entry '{s}' is not NxT"));
    let (n, t) = s.trim().split_once('x').ok_or_else(bad)?;
    Ok((n.parse().map_err(|_| bad())?, t.parse().map_err(|_| bad())?))
}

#[derive(Serialize)]
struct Fig2Point {
    lambda_star: f64,
    n: usize,
    t: usize,
    sqrt_nt: f64,
    median_est_err: f64,
    median_alpha_err: f64,
}

#[derive(Serialize)]
struct Fig2Summary {
    points: Vec<Fig2Point>,
    slopes: Vec<eval::SlopeFit>,
}

fn fig2(a: Fig2Args, file: FileConfig) -> CliResult {
    let defaults = EstimationSetup::default();
    let lambda_stars = match (a.lambda_star.is_empty(), file.lambda_star.clone()) {
        (false, _) => a.lambda_star,
        (true, Some(v)) => v.into_vec(),
        (true, None) => defaults.lambda_stars,
    };
    let sweep = match (a.sweep.is_empty(), file.sweep.clone()) {
        (false, _) => a.sweep.iter().map(|s| parse_size(s)).collect::<CliResult<Vec<_>>>()?,
        (true, Some(v)) => v.iter().map(|s| parse_size(s)).collect::<CliResult<Vec<_>>>()?,
        (true, None) => defaults.sweep,
    };
    let first = pick(a.seed, file.seed, 1);
    let count = pick(a.seeds, file.seeds, 10);
    if count == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let ar_order = match (a.p, file.p.clone()) {
        (Some(p), _) | (None, Some(ArOrder::Fixed(p))) => p,
        (None, Some(ArOrder::Grid(_))) => {
            return Err(CliError::Usage("fig2 needs a fixed AR order".into()))
        }
        (None, None) => defaults.ar_order,
    };
    let rank: RankRule = pick(a.rank, file.rank, defaults.rank);
    let setup = EstimationSetup {
        lambda_stars,
        sweep,
        seeds: (first..first + count).collect(),
        rank,
        ar_order,
    };
    let report = eval::estimation_experiment(&setup)?;

    let dir = out_dir(a.output, &file)?;
    let path = dir.join("fig2.csv");
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    fs::write(&path, buf).map_err(io_err(&path))?;

    let mut points = Vec::new();
    for &ls in &setup.lambda_stars {
        for &(n, t) in &setup.sweep {
            points.push(Fig2Point {
                lambda_star: ls,
                n,
                t,
                sqrt_nt: ((n * t) as f64).sqrt(),
                median_est_err: report.median_at(ls, n, t, |r| r.est_err),
                median_alpha_err: report.median_at(ls, n, t, |r| r.alpha_err),
            });
        }
    }
    for p in &points {
        println!(
            "lambda*={} sqrt(NT)={:.0} est_err={:.3e} alpha_err={:.3e}",
            p.lambda_star, p.sqrt_nt, p.median_est_err, p.median_alpha_err
        );
    }
    let summary = Fig2Summary {
        points,
        slopes: report.slopes.clone(),
    };
    write_json(&dir.join("summary.json"), &summary)?;

    if a.check || file.check.unwrap_or(false) {
        let off: Vec<String> = report
            .slopes
            .iter()
            .filter(|s| !(-0.75..=-0.25).contains(&s.est_err_slope))
            .map(|s| format!("lambda*={} slope {:.3}", s.lambda_star, s.est_err_slope))
            .collect();
        if !off.is_empty() {
            return Err(CliError::Acceptance(format!(
                "estimation-error slope outside [-0.75, -0.25]: {}",
                off.join("; ")
            )));
        }
    }
    Ok(())
}
