//! Exact minimum-weight perfect matching on single-basis error graphs.
//!
//! The solver runs Dijkstra from every defect to build the defect-complete
//! graph (pairwise path lengths plus the distance of each defect to the
//! boundary), then solves the pairing problem exactly: a subset dynamic
//! program for small defect counts, Edmonds' blossom algorithm above that.
//! The matched paths are XOR-ed into the returned edge set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use petgraph::graph::UnGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ObsMask;

/// Smallest probability admitted before weighting.
pub const P_MIN: f64 = 1e-10;
/// Largest probability admitted before weighting.
pub const P_MAX: f64 = 0.5 - 1e-10;

/// Defect counts up to this use the subset dynamic program.
const DP_LIMIT: usize = 12;
/// Fixed-point scale for the integer blossom solver.
const BLOSSOM_SCALE: f64 = 1e9;

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(P_MIN, P_MAX)
}

/// Map from edge probability to matching weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFn {
    /// `ln((1 - p) / p)`: minimum weight is the most likely error.
    #[default]
    LogOdds,
    /// `-ln(p)`.
    NegLog,
}

impl WeightFn {
    pub fn weight(self, p: f64) -> f64 {
        let p = clamp_probability(p);
        match self {
            WeightFn::LogOdds => ((1.0 - p) / p).ln(),
            WeightFn::NegLog => -p.ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: u32,
    /// `None` for an edge to the boundary.
    pub b: Option<u32>,
    pub probability: f64,
    pub weight: f64,
    pub observables: ObsMask,
    /// Contributing `(mechanism, component)` pairs.
    pub sources: Vec<(usize, usize)>,
}

/// A matching graph over global detector indices. Detectors of other bases
/// are simply isolated nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorGraph {
    pub num_detectors: usize,
    pub edges: Vec<GraphEdge>,
    pub weight_fn: WeightFn,
    adjacency: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Chosen edge indices, ascending.
    pub edges: Vec<usize>,
    pub total_weight: f64,
}

impl ErrorGraph {
    pub fn new(num_detectors: usize, weight_fn: WeightFn) -> Self {
        ErrorGraph { num_detectors, edges: Vec::new(), weight_fn, adjacency: vec![Vec::new(); num_detectors] }
    }

    /// Adds an edge and returns its index. The probability is clamped.
    pub fn add_edge(
        &mut self,
        a: u32,
        b: Option<u32>,
        probability: f64,
        observables: ObsMask,
        sources: Vec<(usize, usize)>,
    ) -> Result<usize> {
        let n = self.num_detectors;
        for d in std::iter::once(a).chain(b) {
            if d as usize >= n {
                return Err(Error::IndexOutOfRange { index: d as usize, len: n });
            }
        }
        if b == Some(a) {
            return Err(Error::InvalidModel(format!("self-loop on detector {a}")));
        }
        let probability = clamp_probability(probability);
        let weight = self.weight_fn.weight(probability);
        if weight < 0.0 || !weight.is_finite() {
            return Err(Error::NegativeWeight { edge: self.edges.len(), weight });
        }
        let (a, b) = match b {
            Some(b) if b < a => (b, Some(a)),
            other => (a, other),
        };
        let id = self.edges.len();
        self.adjacency[a as usize].push(id as u32);
        if let Some(b) = b {
            self.adjacency[b as usize].push(id as u32);
        }
        self.edges.push(GraphEdge { a, b, probability, weight, observables, sources });
        Ok(id)
    }

    /// Recomputes one edge's probability and weight.
    pub fn set_probability(&mut self, edge: usize, probability: f64) {
        let p = clamp_probability(probability);
        let e = &mut self.edges[edge];
        e.probability = p;
        e.weight = self.weight_fn.weight(p);
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.weight).collect()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn incident(&self, detector: usize) -> &[u32] {
        &self.adjacency[detector]
    }

    pub fn observables_of(&self, edges: &[usize]) -> ObsMask {
        edges.iter().fold(ObsMask::EMPTY, |acc, &e| acc ^ self.edges[e].observables)
    }
}

/// Non-boundary endpoints of odd degree in `edges`.
pub fn syndrome(g: &ErrorGraph, edges: &[usize]) -> Vec<u32> {
    let mut parity = vec![false; g.num_detectors];
    for &e in edges {
        let edge = &g.edges[e];
        parity[edge.a as usize] ^= true;
        if let Some(b) = edge.b {
            parity[b as usize] ^= true;
        }
    }
    parity.iter().enumerate().filter(|(_, &p)| p).map(|(d, _)| d as u32).collect()
}

pub fn mwpm(g: &ErrorGraph, events: &[u32]) -> Result<MatchResult> {
    let weights = g.weights();
    mwpm_weighted(g, &weights, events)
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: u32,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NO_EDGE: u32 = u32::MAX;

/// Shortest-path tree rooted at one defect. Node `n` is the boundary.
struct PathTree {
    dist: Vec<f64>,
    pred: Vec<u32>,
}

fn dijkstra(g: &ErrorGraph, weights: &[f64], source: u32, targets: &[u32]) -> PathTree {
    let n = g.num_detectors;
    let boundary = n as u32;
    let mut dist = vec![f64::INFINITY; n + 1];
    let mut pred = vec![NO_EDGE; n + 1];
    let mut done = vec![false; n + 1];
    let mut want = vec![false; n + 1];
    let mut remaining = 1;
    want[n] = true;
    for &t in targets {
        if !want[t as usize] {
            want[t as usize] = true;
            remaining += 1;
        }
    }
    dist[source as usize] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapItem { dist: 0.0, node: source });
    while let Some(HeapItem { dist: du, node: u }) = heap.pop() {
        let ui = u as usize;
        if done[ui] {
            continue;
        }
        done[ui] = true;
        if want[ui] {
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
        if u == boundary {
            continue;
        }
        for &e in &g.adjacency[ui] {
            let edge = &g.edges[e as usize];
            let v = match edge.b {
                None => boundary,
                Some(b) if b == u => edge.a,
                Some(b) => {
                    if edge.a == u {
                        b
                    } else {
                        edge.a
                    }
                }
            };
            let nd = du + weights[e as usize];
            if nd < dist[v as usize] {
                dist[v as usize] = nd;
                pred[v as usize] = e;
                heap.push(HeapItem { dist: nd, node: v });
            }
        }
    }
    PathTree { dist, pred }
}

fn walk_back(g: &ErrorGraph, tree: &PathTree, mut node: u32, chosen: &mut [bool]) {
    let boundary = g.num_detectors as u32;
    loop {
        let e = tree.pred[node as usize];
        if e == NO_EDGE {
            return;
        }
        chosen[e as usize] ^= true;
        let edge = &g.edges[e as usize];
        node = if node == boundary {
            edge.a
        } else if edge.b == Some(node) {
            edge.a
        } else {
            edge.b.unwrap_or(boundary)
        };
    }
}

/// Minimum-weight edge set whose syndrome equals `events`, using the given
/// per-edge weights in place of the graph's own.
pub fn mwpm_weighted(g: &ErrorGraph, weights: &[f64], events: &[u32]) -> Result<MatchResult> {
    debug_assert_eq!(weights.len(), g.edges.len());
    if let Some((edge, &weight)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
        return Err(Error::NegativeWeight { edge, weight });
    }
    let mut defects: Vec<u32> = events.to_vec();
    defects.sort_unstable();
    defects.dedup();
    if let Some(&d) = defects.iter().find(|&&d| d as usize >= g.num_detectors) {
        return Err(Error::IndexOutOfRange { index: d as usize, len: g.num_detectors });
    }
    if defects.is_empty() {
        return Ok(MatchResult { edges: Vec::new(), total_weight: 0.0 });
    }
    let k = defects.len();
    let boundary = g.num_detectors;
    let trees: Vec<PathTree> = (0..k).map(|i| dijkstra(g, weights, defects[i], &defects[i + 1..])).collect();
    let mut pair = vec![f64::INFINITY; k * k];
    for i in 0..k {
        for j in i + 1..k {
            let c = trees[i].dist[defects[j] as usize];
            pair[i * k + j] = c;
            pair[j * k + i] = c;
        }
    }
    let to_boundary: Vec<f64> = trees.iter().map(|t| t.dist[boundary]).collect();
    let pairing = min_weight_pairing(k, &pair, &to_boundary)?;

    let mut chosen = vec![false; g.edges.len()];
    for p in pairing {
        match p {
            Pairing::Pair(i, j) => walk_back(g, &trees[i], defects[j], &mut chosen),
            Pairing::Boundary(i) => walk_back(g, &trees[i], boundary as u32, &mut chosen),
        }
    }
    let edges: Vec<usize> = chosen.iter().enumerate().filter(|(_, &c)| c).map(|(e, _)| e).collect();
    let total_weight = edges.iter().map(|&e| weights[e]).sum();
    Ok(MatchResult { edges, total_weight })
}

/// One element of a solution to the pairing problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    Pair(usize, usize),
    Boundary(usize),
}

/// Exact minimum-cost assignment of `n` nodes into pairs or single
/// boundary matches.
///
/// `pair` is a row-major `n x n` cost matrix and `boundary[i]` the cost of
/// matching node `i` alone; infinite entries are forbidden. Ties resolve
/// toward the boundary, then toward the lowest partner index.
pub fn min_weight_pairing(n: usize, pair: &[f64], boundary: &[f64]) -> Result<Vec<Pairing>> {
    assert_eq!(pair.len(), n * n);
    assert_eq!(boundary.len(), n);
    if n == 0 {
        return Ok(Vec::new());
    }
    if n <= DP_LIMIT {
        pairing_dp(n, pair, boundary)
    } else {
        pairing_blossom(n, pair, boundary)
    }
}

const BOUNDARY_CHOICE: u8 = u8::MAX;

fn pairing_dp(n: usize, pair: &[f64], boundary: &[f64]) -> Result<Vec<Pairing>> {
    let full = (1usize << n) - 1;
    let mut cost = vec![f64::INFINITY; full + 1];
    let mut choice = vec![BOUNDARY_CHOICE; full + 1];
    cost[0] = 0.0;
    for mask in 1..=full {
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << i);
        let mut best = boundary[i] + cost[rest];
        let mut pick = BOUNDARY_CHOICE;
        let mut bits = rest;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let c = pair[i * n + j] + cost[rest & !(1 << j)];
            if c < best {
                best = c;
                pick = j as u8;
            }
        }
        cost[mask] = best;
        choice[mask] = pick;
    }
    if !cost[full].is_finite() {
        return Err(Error::InfeasibleSyndrome);
    }
    let mut out = Vec::with_capacity(n);
    let mut mask = full;
    while mask != 0 {
        let i = mask.trailing_zeros() as usize;
        mask &= !(1 << i);
        match choice[mask | (1 << i)] {
            BOUNDARY_CHOICE => out.push(Pairing::Boundary(i)),
            j => {
                mask &= !(1 << j);
                out.push(Pairing::Pair(i, j as usize));
            }
        }
    }
    Ok(out)
}

fn pairing_blossom(n: usize, pair: &[f64], boundary: &[f64]) -> Result<Vec<Pairing>> {
    // Nodes 0..n are real, n..2n their boundary copies. Boundary copies are
    // mutually connected at zero cost so any subset of real nodes may pair.
    let scaled = |c: f64| (c * BLOSSOM_SCALE).round() as i128;
    let finite_max = pair
        .iter()
        .chain(boundary)
        .filter(|c| c.is_finite())
        .fold(0.0f64, |m, &c| m.max(c));
    let offset = scaled(finite_max) * 2 + 1;
    let mut graph: UnGraph<(), i128> = UnGraph::with_capacity(2 * n, n * n * 2);
    let nodes: Vec<_> = (0..2 * n).map(|_| graph.add_node(())).collect();
    for i in 0..n {
        for j in i + 1..n {
            let c = pair[i * n + j];
            if c.is_finite() {
                graph.add_edge(nodes[i], nodes[j], offset - scaled(c));
            }
        }
        if boundary[i].is_finite() {
            graph.add_edge(nodes[i], nodes[n + i], offset - scaled(boundary[i]));
        }
        for j in i + 1..n {
            graph.add_edge(nodes[n + i], nodes[n + j], offset);
        }
    }
    let matched = rustworkx_core::max_weight_matching::max_weight_matching(
        &graph,
        true,
        |e: petgraph::graph::EdgeReference<'_, i128>| Ok::<i128, std::convert::Infallible>(*e.weight()),
        false,
    )
    .unwrap_or_else(|never| match never {});
    let mut mate = vec![usize::MAX; 2 * n];
    for (a, b) in matched {
        mate[a] = b;
        mate[b] = a;
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let m = mate[i];
        if m == usize::MAX {
            return Err(Error::InfeasibleSyndrome);
        }
        if m == n + i {
            out.push(Pairing::Boundary(i));
        } else if m < n {
            if i < m {
                out.push(Pairing::Pair(i, m));
            }
        } else {
            return Err(Error::InfeasibleSyndrome);
        }
    }
    if mate[n..].iter().any(|&m| m == usize::MAX) {
        return Err(Error::InfeasibleSyndrome);
    }
    Ok(out)
}
