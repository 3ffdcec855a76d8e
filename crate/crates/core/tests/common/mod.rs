#![allow(dead_code)]

pub mod oracles;

use harmony_core::model::Component;
use harmony_core::{Basis, ErrorHypergraph, Mechanism, ObsMask};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sorted_subset(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<u32> {
    let mut v: Vec<u32> = sample(rng, n, k.min(n)).into_iter().map(|d| d as u32).collect();
    v.sort_unstable();
    v
}

fn random_obs(rng: &mut ChaCha8Rng, num_observables: usize, density: f64) -> ObsMask {
    let mut m = ObsMask::EMPTY;
    for j in 0..num_observables {
        if rng.random_bool(density) {
            m ^= ObsMask::single(j);
        }
    }
    m
}

/// Unstructured hypergraph: every mechanism flips 0..=4 detectors and a
/// random subset of the observables.
pub fn random_hypergraph(rng: &mut ChaCha8Rng, max_mechanisms: usize) -> ErrorHypergraph {
    let num_detectors = rng.random_range(1..=8);
    let num_observables = rng.random_range(0..=3);
    let count = rng.random_range(1..=max_mechanisms);
    let mut mechanisms = Vec::with_capacity(count);
    while mechanisms.len() < count {
        let k = rng.random_range(0..=4usize);
        let detectors = sorted_subset(rng, num_detectors, k);
        let observables = random_obs(rng, num_observables, 0.3);
        if detectors.is_empty() && observables.is_empty() {
            continue;
        }
        let probability = rng.random_range(0.01..0.3);
        mechanisms.push(Mechanism { probability, detectors, observables, decomposition: None });
    }
    ErrorHypergraph { mechanisms, num_detectors, num_observables, detector_basis: None, detector_coords: None }
}

fn component(rng: &mut ChaCha8Rng, pool: &[u32], num_observables: usize) -> Component {
    let k = if pool.len() >= 2 && rng.random_bool(0.6) { 2 } else { 1 };
    let mut detectors: Vec<u32> = sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    detectors.sort_unstable();
    Component { detectors, observables: random_obs(rng, num_observables, 0.25) }
}

/// Basis-annotated model of edge-like mechanisms plus `X ^ Z` hyperedges,
/// the shape consumed by matching.
pub fn random_matchable(rng: &mut ChaCha8Rng, max_mechanisms: usize) -> ErrorHypergraph {
    let nx = rng.random_range(1..=4);
    let nz = rng.random_range(1..=4);
    let num_detectors = nx + nz;
    let mut basis = vec![Basis::X; nx];
    basis.extend(vec![Basis::Z; nz]);
    let xs: Vec<u32> = (0..nx as u32).collect();
    let zs: Vec<u32> = (nx as u32..num_detectors as u32).collect();
    let num_observables = rng.random_range(1..=2);
    let count = rng.random_range(2..=max_mechanisms);
    let mut mechanisms = Vec::with_capacity(count);
    for _ in 0..count {
        let probability = rng.random_range(0.005..0.2);
        let m = match rng.random_range(0..3) {
            0 => Mechanism::from_components(probability, vec![component(rng, &xs, num_observables)]),
            1 => Mechanism::from_components(probability, vec![component(rng, &zs, num_observables)]),
            _ => {
                let x = component(rng, &xs, num_observables);
                let z = component(rng, &zs, num_observables);
                Mechanism::from_components(probability, vec![x, z])
            }
        };
        mechanisms.push(m);
    }
    ErrorHypergraph { mechanisms, num_detectors, num_observables, detector_basis: Some(basis), detector_coords: None }
}

/// Entrywise relative distance between two normalized likelihood tables.
/// Entries below the rounding floor of a unit-sum table count as zero.
pub fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    const FLOOR: f64 = 1e-12;
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale < FLOOR {
                0.0
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}
