//! Seeded synthetic networks for tests, benchmarks, and fuzzing.

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::netmodel::{Edge, PowerNetwork};

/// A connected random network: a ring through all nodes plus random
/// chords, random susceptances/damping, and heterogeneous per-mode
/// inertia. Deterministic in `seed`.
pub fn random_network(seed: u64, n: usize, modes: usize) -> PowerNetwork {
    assert!(n >= 1 && modes >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    if n > 1 {
        for i in 0..n {
            let j = (i + 1) % n;
            if i < j || n > 2 {
                edges.push(Edge { i, j, susceptance: rng.random_range(0.5..6.0) });
            }
        }
        // A few chords for irregular topology.
        for i in 0..n {
            for j in (i + 2)..n {
                if (i, j) != (0, n - 1) && rng.random_range(0.0..1.0) < 0.15 {
                    edges.push(Edge { i, j, susceptance: rng.random_range(0.5..6.0) });
                }
            }
        }
    }
    let damping = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let inertia = (0..modes)
        .map(|_| (0..n).map(|_| rng.random_range(0.2..9.0)).collect())
        .collect();
    PowerNetwork::new(n, edges, damping, inertia).expect("random network is valid")
}
