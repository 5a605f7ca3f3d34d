//! Shared fixtures for the kernel benchmarks in `benches/`.

use causalrank_core::pipeline::zscore;
use causalrank_core::synth::{sample_linear_sem, Noise, NoiseKind, SemSpec};
use nalgebra::DMatrix;

/// Standardized samples from a random linear SEM with uniform noise.
pub fn sem_matrix(nodes: usize, rows: usize, seed: u64) -> DMatrix<f64> {
    let noise = Noise {
        kind: NoiseKind::Uniform,
        scale: 1.0,
    };
    let spec = SemSpec::random_linear(nodes, 0.5, noise, seed).expect("valid SEM parameters");
    zscore(&sample_linear_sem(&spec, rows, seed).expect("linear SEM samples"))
}

/// Labels from the sign of the first two columns' sum.
pub fn threshold_labels(x: &DMatrix<f64>) -> Vec<u8> {
    (0..x.nrows())
        .map(|i| (x[(i, 0)] + x[(i, 1)] > 0.0) as u8)
        .collect()
}
