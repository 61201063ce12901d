//! Shared fixtures for the benchmarks.

use balclust::mcf::FlowNetwork;
use balclust::{Instance, PointSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform points in the unit cube.
pub fn uniform_points(n: usize, dim: usize, seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * dim).map(|_| rng.gen::<f64>()).collect();
    PointSet::new(dim, data).expect("valid dimensions")
}

pub fn uniform_instance(n: usize, dim: usize, seed: u64) -> Instance {
    Instance::from_points(uniform_points(n, dim, seed)).expect("nonempty")
}

/// Bipartite transportation network: `n` sources of supply `p`, `k` sinks sharing the demand.
pub fn transport_network(n: usize, k: usize, p: i64, seed: u64) -> FlowNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = FlowNetwork::new(n + k);
    for j in 0..n {
        net.set_supply(j, p);
        for i in 0..k {
            net.add_edge(j, n + i, 1, rng.gen_range(0.0..10.0));
        }
    }
    let total = n as i64 * p;
    for i in 0..k {
        let share = total / k as i64 + i64::from((i as i64) < total % k as i64);
        net.set_supply(n + i, -share);
    }
    net
}
