//! Shared fixtures for the training benchmarks.

use thpi_core::data::zero_center;
use thpi_core::synth::{generate, SynthConfig};
use thpi_core::DataMatrix;

/// Centered target and source views of a synthetic parallel corpus.
pub fn fixture(n: usize, d_target: usize, d_source: usize, seed: u64) -> (DataMatrix, DataMatrix) {
    let data = generate(&SynthConfig {
        n_pairs: n,
        d_target,
        d_source,
        latent_dim: d_target.min(d_source).min(16),
        seed,
        ..SynthConfig::default()
    })
    .expect("fixture parameters are valid");
    let (t, _) = zero_center(&data.target).expect("non-empty");
    let (s, _) = zero_center(&data.source).expect("non-empty");
    (t, s)
}
