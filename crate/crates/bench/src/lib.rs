//! Shared fixtures for the kernel benchmarks.

use robevo::{Network, NetworkTopology};

/// Deterministic, non-trivial weights (no RNG so runs compare across
/// toolchains).
pub fn fixture_weights(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.8 * ((i as f64) * 1.618).sin()).collect()
}

pub fn fixture_network(topology: NetworkTopology) -> Network {
    Network::new(topology, fixture_weights(topology.param_count())).expect("fixture weights fit")
}
