//! Multivariate singular spectrum analysis on stacked Page matrices, with per-series
//! autoregressive models for the residuals.
//!
//! The pipeline estimates the deterministic part of every series by hard singular value
//! thresholding, learns a shared linear recurrence for it, fits AR models to what is left,
//! and combines both into one-step forecasts.

pub mod ar;
pub mod error;
pub mod eval;
pub mod forecaster;
pub mod lowrank;
pub mod pagemat;
pub mod panel;
pub mod samossa;
pub mod ssa;
pub mod synth;

pub use ar::{ArDiagnostics, ArModel};
pub use error::{Error, Result};
pub use eval::{ConfigGrid, MetricReport, Truth};
pub use faer::Mat;
pub use forecaster::BetaModel;
pub use lowrank::RankRule;
pub use pagemat::{PageShape, StackedPage};
pub use panel::{Layout, SplitSpec, TimePanel};
pub use samossa::{ArOrder, SamossaConfig, SamossaModel, SegmentLength, StepForecast};
pub use ssa::Decomposition;
pub use synth::{GeneratorKind, GeneratorSpec, SyntheticPanel};
