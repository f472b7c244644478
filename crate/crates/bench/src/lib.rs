//! Shared fixtures for the benchmarks.

use robagg_core::{Aggregator, CondIndepStructure, GridParams, Structure};

/// Homogeneous structures spread over the parameter cube.
pub fn structures(n: usize) -> Vec<Structure> {
    (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) / n as f64;
            let mu = 0.05 + 0.9 * x;
            let k = 0.4 * ((7.0 * x).fract());
            let l = 0.5 + 0.5 * ((13.0 * x).fract());
            CondIndepStructure::homogeneous(mu, k, l).expect("valid parameters").into()
        })
        .collect()
}

/// A grid that is neither constant nor symmetric.
pub fn tilted_grid() -> Aggregator {
    Aggregator::Grid(GridParams::from_fn(10, |p1, p2| (0.2 + 0.6 * p1 - 0.3 * p2).clamp(0.0, 1.0)))
}
