//! Shared inputs for the criterion benchmarks.

use samossa::synth::{self, GeneratorSpec};
use samossa::{pagemat, Mat, TimePanel};

/// Observed panel from the estimation generator with `n` series of length `t`.
pub fn panel(n: usize, t: usize) -> TimePanel {
    synth::generate(&GeneratorSpec::estimation(0.3, n, t, 1))
        .expect("valid generator spec")
        .y
}

/// Stacked Page matrix of [`panel`] with the default segment length.
pub fn page(n: usize, t: usize) -> Mat<f64> {
    let l = pagemat::default_l(n, t, 1.0);
    pagemat::stack(&panel(n, t), l).expect("stackable panel").data
}
