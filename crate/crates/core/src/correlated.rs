//! Projection of a hypergraph onto X- and Z-type matching graphs, two-pass
//! correlated matching, and recovery of mechanism sets from matched edges.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matching::{self, clamp_probability, min_weight_pairing, ErrorGraph, Pairing, WeightFn};
use crate::model::{Basis, ErrorHypergraph, ObsMask, Shot};

/// `p ⊕ q`: probability that exactly one of two independent events fires.
pub fn xor_prob(p: f64, q: f64) -> f64 {
    p * (1.0 - q) + q * (1.0 - p)
}

/// A two-component mechanism joining one X-graph edge and one Z-graph edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperPair {
    pub x_edge: usize,
    pub z_edge: usize,
    pub mechanism: usize,
}

/// Structure shared by the unperturbed model and every ensemble member.
#[derive(Debug)]
pub struct Projection {
    pub hypergraph: Arc<ErrorHypergraph>,
    /// Indexed by [`Basis::index`].
    pub graphs: [ErrorGraph; 2],
    /// `S(e)` for each edge: targets in the opposite graph with their
    /// conditional probabilities.
    pub reweight_sets: [Vec<Vec<(usize, f64)>>; 2],
    pub hyper_pairs: Vec<HyperPair>,
    /// Per edge, the mechanisms whose only matching component is that edge.
    pub singles: [Vec<Vec<usize>>; 2],
    /// Per X-graph edge: `(z_edge, mechanism, probability)` of the most
    /// probable hyperedge joining them.
    partners: Vec<Vec<(usize, usize, f64)>>,
    detector_basis: Vec<Basis>,
    base_log_likelihood: f64,
    log_odds: Vec<f64>,
}

/// Edge probabilities handed to the matcher. The unperturbed model uses the
/// projected probabilities for both passes.
#[derive(Debug, Clone)]
pub struct EdgePriors {
    pub pass1: [Vec<f64>; 2],
    pub pass2: [Vec<f64>; 2],
    /// Parallel to `Projection::reweight_sets`.
    pub reweight_q: [Vec<Vec<f64>>; 2],
    weights1: [Vec<f64>; 2],
    weights2: [Vec<f64>; 2],
}

impl EdgePriors {
    pub fn new(pass1: [Vec<f64>; 2], pass2: [Vec<f64>; 2], reweight_q: [Vec<Vec<f64>>; 2], weight_fn: WeightFn) -> Self {
        let w = |ps: &[f64]| ps.iter().map(|&p| weight_fn.weight(p)).collect::<Vec<_>>();
        let weights1 = [w(&pass1[0]), w(&pass1[1])];
        let weights2 = [w(&pass2[0]), w(&pass2[1])];
        EdgePriors { pass1, pass2, reweight_q, weights1, weights2 }
    }
}

/// A projected model together with the priors one decoder uses.
#[derive(Debug, Clone)]
pub struct ProjectedModel {
    pub structure: Arc<Projection>,
    pub priors: EdgePriors,
}

/// One decoder's answer.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorHypothesis {
    /// Ascending mechanism indices.
    pub mechanisms: Vec<usize>,
    pub observables: ObsMask,
    /// Log-likelihood under the unperturbed prior.
    pub log_likelihood: f64,
}

impl ProjectedModel {
    pub fn graph_x(&self) -> &ErrorGraph {
        &self.structure.graphs[Basis::X.index()]
    }

    pub fn graph_z(&self) -> &ErrorGraph {
        &self.structure.graphs[Basis::Z.index()]
    }

    pub fn hypergraph(&self) -> &ErrorHypergraph {
        &self.structure.hypergraph
    }

    pub fn weight_fn(&self) -> WeightFn {
        self.structure.graphs[0].weight_fn
    }
}

/// Builds the X/Z matching graphs from a basis-annotated hypergraph.
///
/// Parallel components merge into one edge with `⊕`-combined probability.
/// For each hyperedge mechanism `m` touching edge `e` and edge `e'`,
/// `q(e'|e) = p_m / P(e)`; repeated implications keep the largest value.
pub fn project(h: ErrorHypergraph) -> Result<ProjectedModel> {
    project_with(h, WeightFn::default())
}

pub fn project_with(h: ErrorHypergraph, weight_fn: WeightFn) -> Result<ProjectedModel> {
    h.validate()?;
    let basis = h.detector_basis.clone().ok_or(Error::MissingBasis)?;
    let n = h.num_detectors;

    struct Draft {
        a: u32,
        b: Option<u32>,
        prob: f64,
        sources: Vec<(usize, usize, f64, ObsMask)>,
    }
    let mut drafts: [Vec<Draft>; 2] = [Vec::new(), Vec::new()];
    let mut index: HashMap<(usize, u32, Option<u32>), usize> = HashMap::new();
    // (mechanism, [(graph, edge)])
    let mut placements: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();

    for (mi, m) in h.mechanisms.iter().enumerate() {
        if m.detectors.is_empty() {
            // Undetectable: invisible to matching.
            continue;
        }
        let Some(parts) = m.components() else {
            return Err(Error::Projection {
                mechanism: mi,
                reason: format!("{} detectors and no decomposition into edges", m.detectors.len()),
            });
        };
        if parts.len() > 2 {
            return Err(Error::Projection { mechanism: mi, reason: "more than two decomposition components".into() });
        }
        let mut placed = Vec::with_capacity(2);
        for (ci, c) in parts.iter().enumerate() {
            let b0 = basis[c.detectors[0] as usize];
            if c.detectors.iter().any(|&d| basis[d as usize] != b0) {
                return Err(Error::Projection { mechanism: mi, reason: "component mixes X and Z detectors".into() });
            }
            let g = b0.index();
            if placed.iter().any(|&(pg, _)| pg == g) {
                return Err(Error::Projection {
                    mechanism: mi,
                    reason: format!("two components in the {} graph", b0.letter()),
                });
            }
            let (a, b) = (c.detectors[0], c.detectors.get(1).copied());
            let key = (g, a, b);
            let e = *index.entry(key).or_insert_with(|| {
                drafts[g].push(Draft { a, b, prob: 0.0, sources: Vec::new() });
                drafts[g].len() - 1
            });
            let draft = &mut drafts[g][e];
            draft.prob = xor_prob(draft.prob, m.probability);
            draft.sources.push((mi, ci, m.probability, c.observables));
            placed.push((g, e));
        }
        placements.push((mi, placed));
    }

    let mut graphs = [ErrorGraph::new(n, weight_fn), ErrorGraph::new(n, weight_fn)];
    let mut combined: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for g in 0..2 {
        for d in &drafts[g] {
            // Observable mask of the most probable contributor.
            let mut best = &d.sources[0];
            for s in &d.sources[1..] {
                if s.2 > best.2 {
                    best = s;
                }
            }
            let sources = d.sources.iter().map(|s| (s.0, s.1)).collect();
            graphs[g].add_edge(d.a, d.b, d.prob, best.3, sources)?;
            combined[g].push(d.prob);
        }
    }

    let mut reweight: [Vec<HashMap<usize, f64>>; 2] =
        [vec![HashMap::new(); drafts[0].len()], vec![HashMap::new(); drafts[1].len()]];
    let mut singles: [Vec<Vec<usize>>; 2] = [vec![Vec::new(); drafts[0].len()], vec![Vec::new(); drafts[1].len()]];
    let mut hyper_pairs = Vec::new();
    let mut best_pair: HashMap<(usize, usize), (usize, f64)> = HashMap::new();
    for (mi, placed) in &placements {
        let p = h.mechanisms[*mi].probability;
        match placed[..] {
            [(g, e)] => singles[g][e].push(*mi),
            [(g0, e0), (g1, e1)] => {
                let q01 = p / combined[g0][e0];
                let q10 = p / combined[g1][e1];
                let slot = reweight[g0][e0].entry(e1).or_insert(0.0);
                *slot = slot.max(q01);
                let slot = reweight[g1][e1].entry(e0).or_insert(0.0);
                *slot = slot.max(q10);
                let (x_edge, z_edge) = if g0 == Basis::X.index() { (e0, e1) } else { (e1, e0) };
                hyper_pairs.push(HyperPair { x_edge, z_edge, mechanism: *mi });
                let entry = best_pair.entry((x_edge, z_edge)).or_insert((*mi, p));
                if p > entry.1 {
                    *entry = (*mi, p);
                }
            }
            _ => unreachable!(),
        }
    }
    let reweight_sets: [Vec<Vec<(usize, f64)>>; 2] = reweight.map(|per_edge| {
        per_edge
            .into_iter()
            .map(|m| {
                let mut v: Vec<(usize, f64)> = m.into_iter().collect();
                v.sort_by_key(|&(t, _)| t);
                v
            })
            .collect()
    });
    let mut partners = vec![Vec::new(); drafts[Basis::X.index()].len()];
    let mut pairs: Vec<_> = best_pair.into_iter().collect();
    pairs.sort_by_key(|&((x, z), _)| (x, z));
    for ((x, z), (mi, p)) in pairs {
        partners[x].push((z, mi, p));
    }

    let base_log_likelihood = h.mechanisms.iter().map(|m| (1.0 - m.probability).ln()).sum();
    let log_odds = h.mechanisms.iter().map(|m| (m.probability / (1.0 - m.probability)).ln()).collect();
    let reweight_q = [
        reweight_sets[0].iter().map(|s| s.iter().map(|&(_, q)| q).collect()).collect(),
        reweight_sets[1].iter().map(|s| s.iter().map(|&(_, q)| q).collect()).collect(),
    ];
    let priors = EdgePriors::new(combined.clone(), combined, reweight_q, weight_fn);
    let structure = Projection {
        hypergraph: Arc::new(h),
        graphs,
        reweight_sets,
        hyper_pairs,
        singles,
        partners,
        detector_basis: basis,
        base_log_likelihood,
        log_odds,
    };
    Ok(ProjectedModel { structure: Arc::new(structure), priors })
}

/// `Σ_{m∈S} ln p_m + Σ_{m∉S} ln(1 - p_m)`.
pub fn log_likelihood(h: &ErrorHypergraph, mechanisms: &[usize]) -> Result<f64> {
    let mut member = vec![false; h.mechanisms.len()];
    for &m in mechanisms {
        *member.get_mut(m).ok_or(Error::IndexOutOfRange { index: m, len: h.mechanisms.len() })? = true;
    }
    Ok(h.mechanisms
        .iter()
        .zip(&member)
        .map(|(m, &on)| if on { m.probability.ln() } else { (1.0 - m.probability).ln() })
        .sum())
}

impl Projection {
    fn split_events(&self, shot: &Shot) -> [Vec<u32>; 2] {
        let mut out = [Vec::new(), Vec::new()];
        for d in shot.detection_events.ones() {
            out[self.detector_basis[d].index()].push(d as u32);
        }
        out
    }

    fn hypothesis(&self, mechanisms: Vec<usize>) -> ErrorHypothesis {
        let h = &self.hypergraph;
        let observables = mechanisms.iter().fold(ObsMask::EMPTY, |acc, &m| acc ^ h.mechanisms[m].observables);
        let log_likelihood = self.base_log_likelihood + mechanisms.iter().map(|&m| self.log_odds[m]).sum::<f64>();
        ErrorHypothesis { mechanisms, observables, log_likelihood }
    }
}

fn check_hypothesis(structure: &Projection, shot: &Shot, hyp: &ErrorHypothesis) {
    if cfg!(debug_assertions) {
        let triggered = structure
            .hypergraph
            .triggered_detectors(&hyp.mechanisms)
            .expect("recovered indices are valid");
        debug_assert_eq!(triggered, shot.detection_events, "hypothesis does not reproduce the detection events");
    }
}

/// Intermediate result of a correlated decode, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedTrace {
    pub first_pass: [Vec<usize>; 2],
    pub second_pass: [Vec<usize>; 2],
    pub hypothesis: ErrorHypothesis,
}

/// Single-pass matching on each graph, ignoring hyperedge correlations.
pub fn decode_uncorrelated(pm: &ProjectedModel, shot: &Shot) -> Result<ErrorHypothesis> {
    let s = &pm.structure;
    let events = s.split_events(shot);
    let mut chosen: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for g in 0..2 {
        chosen[g] = matching::mwpm_weighted(&s.graphs[g], &pm.priors.weights1[g], &events[g])?.edges;
    }
    let mechs = recover_mechanisms(pm, &chosen[0], &chosen[1])?;
    let hyp = s.hypothesis(mechs);
    check_hypothesis(s, shot, &hyp);
    Ok(hyp)
}

pub fn decode_correlated(pm: &ProjectedModel, shot: &Shot) -> Result<ErrorHypothesis> {
    decode_correlated_traced(pm, shot).map(|t| t.hypothesis)
}

/// Two-pass correlated matching.
///
/// Pass one matches both graphs with the first-pass priors. Every matched
/// edge is then taken as having fired and offers its conditional
/// probabilities to the opposite graph; each edge keeps the largest of its
/// second-pass prior and all offers. Pass two matches the reweighted graphs.
/// Matched edges themselves keep their second-pass prior: pinning them to
/// zero weight would make pass two reproduce pass one.
pub fn decode_correlated_traced(pm: &ProjectedModel, shot: &Shot) -> Result<CorrelatedTrace> {
    let s = &pm.structure;
    let pr = &pm.priors;
    let events = s.split_events(shot);
    let mut first: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for g in 0..2 {
        first[g] = matching::mwpm_weighted(&s.graphs[g], &pr.weights1[g], &events[g])?.edges;
    }

    let mut weights = pr.weights2.clone();
    let mut boosted: [Vec<(usize, f64)>; 2] = [Vec::new(), Vec::new()];
    for g in 0..2 {
        let other = 1 - g;
        for &e in &first[g] {
            for (k, &(target, _)) in s.reweight_sets[g][e].iter().enumerate() {
                boosted[other].push((target, pr.reweight_q[g][e][k]));
            }
        }
    }
    let weight_fn = pm.weight_fn();
    for g in 0..2 {
        for &(t, q) in &boosted[g] {
            if clamp_probability(q) > clamp_probability(pr.pass2[g][t]) {
                let w = weight_fn.weight(q);
                if w < weights[g][t] {
                    weights[g][t] = w;
                }
            }
        }
    }

    let mut second: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for g in 0..2 {
        second[g] = matching::mwpm_weighted(&s.graphs[g], &weights[g], &events[g])?.edges;
    }
    let mechs = recover_mechanisms(pm, &second[0], &second[1])?;
    let hypothesis = s.hypothesis(mechs);
    check_hypothesis(s, shot, &hypothesis);
    Ok(CorrelatedTrace { first_pass: first, second_pass: second, hypothesis })
}

/// Most probable mechanism set whose projection is exactly the chosen
/// edges.
///
/// Builds the edge decomposition graph: one vertex per chosen edge, a
/// pairing edge of weight `-ln p_m` for every hyperedge mechanism joining a
/// chosen X-edge to a chosen Z-edge, and a boundary option weighted by the
/// combined probability of the vertex's single-edge mechanisms, attributed
/// to the most probable of them. Each connected piece is solved by exact
/// minimum-weight matching.
pub fn recover_mechanisms(pm: &ProjectedModel, chosen_x: &[usize], chosen_z: &[usize]) -> Result<Vec<usize>> {
    let s = &pm.structure;
    let h = &s.hypergraph;
    let xi = Basis::X.index();
    let zi = Basis::Z.index();
    let best_single = |g: usize, e: usize| -> Option<usize> {
        let mut best: Option<usize> = None;
        for &m in &s.singles[g][e] {
            if best.is_none_or(|b| h.mechanisms[m].probability > h.mechanisms[b].probability) {
                best = Some(m);
            }
        }
        best
    };

    let mut out = Vec::with_capacity(chosen_x.len() + chosen_z.len());
    let mut z_pos: HashMap<usize, usize> = HashMap::with_capacity(chosen_z.len());
    for (k, &e) in chosen_z.iter().enumerate() {
        z_pos.insert(e, k);
    }
    // Vertex ids: x-edges 0..nx, z-edges nx..nx+nz.
    let nx = chosen_x.len();
    let nv = nx + chosen_z.len();
    let mut links: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); nv];
    for (k, &ex) in chosen_x.iter().enumerate() {
        for &(ez, m, p) in &s.partners[ex] {
            if let Some(&kz) = z_pos.get(&ez) {
                links[k].push((nx + kz, m, p));
                links[nx + kz].push((k, m, p));
            }
        }
    }
    let vertex = |v: usize| if v < nx { (xi, chosen_x[v]) } else { (zi, chosen_z[v - nx]) };

    let mut seen = vec![false; nv];
    for start in 0..nv {
        if seen[start] {
            continue;
        }
        let mut piece = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < piece.len() {
            let v = piece[head];
            head += 1;
            for &(u, _, _) in &links[v] {
                if !seen[u] {
                    seen[u] = true;
                    piece.push(u);
                }
            }
        }
        if piece.len() == 1 {
            let (g, e) = vertex(start);
            let m = best_single(g, e).ok_or(Error::InfeasibleRecovery { basis: if g == xi { 'X' } else { 'Z' }, edge: e })?;
            out.push(m);
            continue;
        }
        piece.sort_unstable();
        let k = piece.len();
        let local: HashMap<usize, usize> = piece.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut pair = vec![f64::INFINITY; k * k];
        let mut pair_mech = vec![usize::MAX; k * k];
        for (i, &v) in piece.iter().enumerate() {
            for &(u, m, p) in &links[v] {
                let j = local[&u];
                let c = -p.ln();
                if c < pair[i * k + j] {
                    pair[i * k + j] = c;
                    pair_mech[i * k + j] = m;
                }
            }
        }
        let singles: Vec<Option<usize>> = piece.iter().map(|&v| {
            let (g, e) = vertex(v);
            best_single(g, e)
        }).collect();
        let boundary: Vec<f64> = piece
            .iter()
            .map(|&v| {
                let (g, e) = vertex(v);
                let p = s.singles[g][e].iter().fold(0.0, |acc, &m| xor_prob(acc, h.mechanisms[m].probability));
                if p > 0.0 { -p.ln() } else { f64::INFINITY }
            })
            .collect();
        let solution = min_weight_pairing(k, &pair, &boundary).map_err(|_| {
            let (g, e) = vertex(piece[0]);
            Error::InfeasibleRecovery { basis: if g == xi { 'X' } else { 'Z' }, edge: e }
        })?;
        for p in solution {
            match p {
                Pairing::Boundary(i) => out.push(singles[i].expect("finite boundary cost")),
                Pairing::Pair(i, j) => out.push(pair_mech[i * k + j]),
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Projects a mechanism set back to its edges in each graph (XOR).
pub fn project_mechanisms(pm: &ProjectedModel, mechanisms: &[usize]) -> [Vec<usize>; 2] {
    let s = &pm.structure;
    let mut hit: [Vec<bool>; 2] = [vec![false; s.graphs[0].num_edges()], vec![false; s.graphs[1].num_edges()]];
    let mut lookup: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    for g in 0..2 {
        for (e, edge) in s.graphs[g].edges.iter().enumerate() {
            for &(m, c) in &edge.sources {
                lookup.insert((m, c), (g, e));
            }
        }
    }
    for &m in mechanisms {
        let parts = s.hypergraph.mechanisms[m].components().map_or(0, |c| c.len());
        for c in 0..parts {
            if let Some(&(g, e)) = lookup.get(&(m, c)) {
                hit[g][e] ^= true;
            }
        }
    }
    hit.map(|v| v.iter().enumerate().filter(|(_, &b)| b).map(|(e, _)| e).collect())
}
