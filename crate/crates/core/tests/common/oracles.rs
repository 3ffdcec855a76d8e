//! Brute-force references, written independently of the library's own
//! enumerators and matchers.

use harmony_core::correlated::{project_mechanisms, xor_prob, ProjectedModel};
use harmony_core::matching::{syndrome, ErrorGraph, WeightFn};
use harmony_core::{ErrorHypergraph, ObsMask, Shot};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Unnormalized L(l | d) by summing over all 2^M configurations.
pub fn reference_joint(h: &ErrorHypergraph, shot: &Shot) -> Vec<f64> {
    let m = h.mechanisms.len();
    let mut joint = vec![0.0; 1 << h.num_observables];
    for config in 0u64..(1 << m) {
        let mut dets = vec![false; h.num_detectors];
        let mut obs = 0u64;
        let mut prob = 1.0;
        for (i, mech) in h.mechanisms.iter().enumerate() {
            if config >> i & 1 == 1 {
                prob *= mech.probability;
                for &d in &mech.detectors {
                    dets[d as usize] ^= true;
                }
                obs ^= mech.observables.0;
            } else {
                prob *= 1.0 - mech.probability;
            }
        }
        if dets.iter().enumerate().all(|(d, &v)| v == shot.detection_events.contains(d)) {
            joint[obs as usize] += prob;
        }
    }
    joint
}

pub fn normalized(v: &[f64]) -> Vec<f64> {
    let t: f64 = v.iter().sum();
    if t > 0.0 {
        v.iter().map(|x| x / t).collect()
    } else {
        v.to_vec()
    }
}

/// Mostly syndromes of sampled errors, sometimes arbitrary ones.
pub fn random_shot(h: &ErrorHypergraph, rng: &mut ChaCha8Rng) -> Shot {
    if rng.random_bool(0.8) {
        let shot = harmony_core::bench::sample_shot(h, rng);
        Shot::new(shot.detection_events, None)
    } else {
        let events: Vec<u32> = (0..h.num_detectors as u32).filter(|_| rng.random_bool(0.4)).collect();
        Shot::from_events(h.num_detectors, &events)
    }
}

pub fn random_graph(rng: &mut ChaCha8Rng, max_detectors: usize, max_edges: usize) -> ErrorGraph {
    let n = rng.random_range(2..=max_detectors);
    let mut g = ErrorGraph::new(n, WeightFn::LogOdds);
    let count = rng.random_range(1..=max_edges);
    for _ in 0..count {
        let a = rng.random_range(0..n as u32);
        let b = if rng.random_bool(0.3) {
            None
        } else {
            let b = rng.random_range(0..n as u32 - 1);
            Some(if b >= a { b + 1 } else { b })
        };
        let p = rng.random_range(0.001..0.45);
        g.add_edge(a, b, p, ObsMask::EMPTY, Vec::new()).unwrap();
    }
    g
}

/// Cheapest edge subset with the given syndrome, by enumeration.
pub fn brute_force_matching(g: &ErrorGraph, events: &[u32]) -> Option<f64> {
    let e = g.num_edges();
    let mut best: Option<f64> = None;
    for subset in 0u64..(1 << e) {
        let edges: Vec<usize> = (0..e).filter(|&i| subset >> i & 1 == 1).collect();
        if syndrome(g, &edges) == events {
            let w: f64 = edges.iter().map(|&i| g.edges[i].weight).sum();
            if best.is_none_or(|b| w < b) {
                best = Some(w);
            }
        }
    }
    best
}

/// -ln of the combined probability of the single-edge mechanisms on edge
/// `e` of graph `g`.
pub fn boundary_cost(pm: &ProjectedModel, g: usize, e: usize) -> Option<f64> {
    let h = pm.hypergraph();
    let mut p = 0.0;
    let mut any = false;
    for (m, mech) in h.mechanisms.iter().enumerate() {
        let proj = project_mechanisms(pm, &[m]);
        if proj[g] == [e] && proj[1 - g].is_empty() {
            p = xor_prob(p, mech.probability);
            any = true;
        }
    }
    any.then(|| -p.ln())
}

/// Edges covered by the disjoint projections of a random mechanism subset,
/// at most `max_edges` in total.
pub fn random_chosen(rng: &mut ChaCha8Rng, pm: &ProjectedModel, max_edges: usize) -> [Vec<usize>; 2] {
    let mut chosen = [Vec::new(), Vec::new()];
    for m in 0..pm.hypergraph().mechanisms.len() {
        if !rng.random_bool(0.4) {
            continue;
        }
        let proj = project_mechanisms(pm, &[m]);
        let clash = (0..2).any(|g| proj[g].iter().any(|e| chosen[g].contains(e)));
        let size = chosen[0].len() + chosen[1].len() + proj[0].len() + proj[1].len();
        if !clash && size <= max_edges {
            for g in 0..2 {
                chosen[g].extend(proj[g].iter().copied());
            }
        }
    }
    chosen[0].sort_unstable();
    chosen[1].sort_unstable();
    chosen
}

/// Best explanation cost of the chosen edges by exhaustive assignment of
/// each edge to a single-edge explanation or a hyperedge partner.
pub fn exhaustive_recovery(pm: &ProjectedModel, chosen: &[Vec<usize>; 2]) -> Option<f64> {
    let vertices: Vec<(usize, usize)> = chosen[0].iter().map(|&e| (0, e)).chain(chosen[1].iter().map(|&e| (1, e))).collect();
    let h = pm.hypergraph();
    let n = vertices.len();
    let boundary: Vec<Option<f64>> = vertices.iter().map(|&(g, e)| boundary_cost(pm, g, e)).collect();
    let mut links = vec![Vec::new(); n];
    for (m, mech) in h.mechanisms.iter().enumerate() {
        let proj = project_mechanisms(pm, &[m]);
        if proj[0].len() == 1 && proj[1].len() == 1 {
            let a = vertices.iter().position(|&v| v == (0, proj[0][0]));
            let b = vertices.iter().position(|&v| v == (1, proj[1][0]));
            if let (Some(a), Some(b)) = (a, b) {
                links[a].push((b, -mech.probability.ln()));
            }
        }
    }
    fn go(i: usize, used: &mut [bool], boundary: &[Option<f64>], links: &[Vec<(usize, f64)>]) -> Option<f64> {
        let Some(i) = (i..used.len()).find(|&k| !used[k]) else { return Some(0.0) };
        used[i] = true;
        let mut best: Option<f64> = None;
        let mut consider = |c: Option<f64>| {
            if let Some(c) = c {
                if best.is_none_or(|b| c < b) {
                    best = Some(c);
                }
            }
        };
        if let Some(b) = boundary[i] {
            consider(go(i + 1, used, boundary, links).map(|r| r + b));
        }
        let mut partners: Vec<(usize, f64)> = links[i].clone();
        for (j, l) in links.iter().enumerate() {
            for &(k, w) in l {
                if k == i {
                    partners.push((j, w));
                }
            }
        }
        for (j, w) in partners {
            if !used[j] {
                used[j] = true;
                consider(go(i + 1, used, boundary, links).map(|r| r + w));
                used[j] = false;
            }
        }
        used[i] = false;
        best
    }
    go(0, &mut vec![false; n], &boundary, &links)
}

/// Cost of an explanation under the same objective as `exhaustive_recovery`.
pub fn explanation_cost(pm: &ProjectedModel, mechanisms: &[usize]) -> f64 {
    let h = pm.hypergraph();
    mechanisms
        .iter()
        .map(|&m| {
            let proj = project_mechanisms(pm, &[m]);
            if !proj[0].is_empty() && !proj[1].is_empty() {
                -h.mechanisms[m].probability.ln()
            } else {
                let g = if proj[0].is_empty() { 1 } else { 0 };
                boundary_cost(pm, g, proj[g][0]).unwrap()
            }
        })
        .sum()
}
