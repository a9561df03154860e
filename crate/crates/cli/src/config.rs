use std::path::{Path, PathBuf};

use samossa::{ArOrder, Layout, RankRule, SegmentLength};
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Subcommand names that may appear as sections of a config file.
const SECTIONS: &[&str] = &[
    "synth",
    "fit",
    "decompose",
    "forecast",
    "observe-forecast",
    "eval",
    "grid",
    "fig2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Harmonics plus AR(2) noise (estimation sweep).
    Fig2,
    /// Harmonics with trends plus AR(1) noise (forecasting benchmark).
    Table1,
    /// Zero deterministic part, AR(2) noise only.
    PureAr,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Values read from `--config`. Top-level keys apply to every subcommand; a table named after
/// the subcommand overrides them.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub layout: Option<Layout>,
    #[serde(rename = "L")]
    pub l: Option<SegmentLength>,
    pub rank: Option<RankRule>,
    pub p: Option<ArOrder>,
    pub shape_ratio: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub preset: Option<Preset>,
    pub lambda_star: Option<OneOrMany>,
    pub n_series: Option<usize>,
    pub len: Option<usize>,
    pub noise_var: Option<f64>,
    pub model: Option<PathBuf>,
    pub save_model: Option<PathBuf>,
    pub horizon: Option<usize>,
    pub train_len: Option<usize>,
    pub valid_len: Option<usize>,
    pub test_len: Option<usize>,
    pub truth: Option<PathBuf>,
    pub seeds: Option<u64>,
    pub sweep: Option<Vec<String>>,
    pub min_r2: Option<f64>,
    pub min_gap: Option<f64>,
    pub check: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path, section: &str) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let root: Value = if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config: {e}")))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config: {e}")))?
        };
        let Value::Object(mut root) = root else {
            return Err(CliError::Usage("config: top level must be a table".into()));
        };
        let own = root.remove(section);
        let mut merged: Map<String, Value> = root
            .into_iter()
            .filter(|(k, _)| !SECTIONS.contains(&k.as_str()))
            .collect();
        match own {
            Some(Value::Object(table)) => merged.extend(table),
            Some(_) => return Err(CliError::Usage(format!("config: [{section}] must be a table"))),
            None => {}
        }
        serde_json::from_value(Value::Object(merged))
            .map_err(|e| CliError::Usage(format!("config: {e}")))
    }
}

/// Flag if given, else the config file value, else the default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn require<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T, CliError> {
    flag.or(file)
        .ok_or_else(|| CliError::Usage(format!("missing required option --{name}")))
}
