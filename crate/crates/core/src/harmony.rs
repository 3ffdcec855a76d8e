//! Ensembles of correlated matchers built by perturbing edge priors, pooling
//! of their answers, and two-pass layered decoding.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codes::CodeFamily;
use crate::correlated::{decode_correlated, EdgePriors, ErrorHypothesis, ProjectedModel};
use crate::error::{Error, Result};
use crate::matching::{P_MAX, P_MIN};
use crate::model::{ObsMask, Shot};

/// Streams at or above this value are reserved for ensemble members, so
/// they never collide with per-shot sampling streams.
pub const MEMBER_STREAM_BASE: u64 = 1 << 62;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub seed: u64,
}

impl Default for PerturbationParams {
    fn default() -> Self {
        PerturbationParams { alpha1: 1.0, alpha2: 0.8, alpha3: 0.5, seed: 0 }
    }
}

impl PerturbationParams {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64, seed: u64) -> Result<Self> {
        let p = PerturbationParams { alpha1, alpha2, alpha3, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn unperturbed(seed: u64) -> Self {
        PerturbationParams { alpha1: 0.0, alpha2: 0.0, alpha3: 0.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("alpha1", self.alpha1), ("alpha2", self.alpha2), ("alpha3", self.alpha3)] {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("{name} = {a} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Vote,
    SumLikelihood,
    MostLikelyError,
}

impl Pooling {
    pub fn name(self) -> &'static str {
        match self {
            Pooling::Vote => "vote",
            Pooling::SumLikelihood => "sum_likelihood",
            Pooling::MostLikelyError => "most_likely_error",
        }
    }

    pub fn default_for(family: CodeFamily) -> Pooling {
        match family {
            CodeFamily::Repetition => Pooling::Vote,
            CodeFamily::RotatedSurface => Pooling::MostLikelyError,
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vote" => Ok(Pooling::Vote),
            "sum_likelihood" | "sum-likelihood" => Ok(Pooling::SumLikelihood),
            "most_likely_error" | "most-likely-error" | "mle" => Ok(Pooling::MostLikelyError),
            _ => Err(Error::Config(format!("unknown pooling `{s}` (vote, sum_likelihood, most_likely_error)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub size: usize,
    pub pooling: Pooling,
    pub params: PerturbationParams,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::Config("ensemble size must be at least 1".into()));
        }
        self.params.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolResult {
    pub prediction: ObsMask,
    /// Fraction of members agreeing with the vote winner.
    pub confidence: f64,
    pub member_hypotheses: Vec<ErrorHypothesis>,
}

fn draw(rng: &mut ChaCha8Rng, p: f64, alpha: f64) -> f64 {
    // Always consume one draw so the stream layout does not depend on alpha.
    let u: f64 = rng.random();
    if alpha == 0.0 {
        return p;
    }
    let lo = (1.0 - alpha) * p;
    let hi = (1.0 + alpha) * p;
    (lo + u * (hi - lo)).clamp(P_MIN, P_MAX)
}

fn member_rng(seed: u64, member: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(MEMBER_STREAM_BASE + member as u64);
    rng
}

/// Draws member `member`'s priors. Values are drawn in a fixed order (X
/// edges, Z edges for each pass, then every reweight entry), so each entry
/// depends only on `(seed, member, edge)`.
pub fn perturb(pm: &ProjectedModel, params: &PerturbationParams, member: usize) -> ProjectedModel {
    let mut rng = member_rng(params.seed, member);
    let base = &pm.priors;
    let mut pass1 = [Vec::new(), Vec::new()];
    let mut pass2 = [Vec::new(), Vec::new()];
    for g in 0..2 {
        pass1[g] = base.pass1[g].iter().map(|&p| draw(&mut rng, p, params.alpha1)).collect();
    }
    for g in 0..2 {
        pass2[g] = base.pass2[g].iter().map(|&p| draw(&mut rng, p, params.alpha2)).collect();
    }
    let mut reweight_q: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    for g in 0..2 {
        reweight_q[g] = base.reweight_q[g]
            .iter()
            .map(|qs| qs.iter().map(|&q| draw(&mut rng, q, params.alpha3)).collect())
            .collect();
    }
    ProjectedModel {
        structure: Arc::clone(&pm.structure),
        priors: EdgePriors::new(pass1, pass2, reweight_q, pm.weight_fn()),
    }
}

/// A fixed family of perturbed members. Member `k` is the same decoder in
/// every ensemble built from the same base model and parameters, so an
/// ensemble of size `n` is exactly members `0..n`.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<ProjectedModel>,
    pub params: PerturbationParams,
}

impl Ensemble {
    pub fn new(pm: &ProjectedModel, params: PerturbationParams, size: usize) -> Result<Self> {
        params.validate()?;
        if size == 0 {
            return Err(Error::Config("ensemble size must be at least 1".into()));
        }
        let members = (0..size).map(|k| perturb(pm, &params, k)).collect();
        Ok(Ensemble { members, params })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Hypotheses of the first `count` members, in member order.
    pub fn decode_members(&self, shot: &Shot, count: usize) -> Result<Vec<ErrorHypothesis>> {
        let count = count.min(self.members.len());
        self.members[..count].iter().map(|m| decode_correlated(m, shot)).collect()
    }

    pub fn decode(&self, shot: &Shot, size: usize, pooling: Pooling) -> Result<PoolResult> {
        Ok(pool(self.decode_members(shot, size)?, pooling))
    }
}

/// Decodes one shot with a freshly generated ensemble. Prefer building an
/// [`Ensemble`] once when decoding many shots.
pub fn decode_ensemble(pm: &ProjectedModel, shot: &Shot, cfg: &EnsembleConfig) -> Result<PoolResult> {
    cfg.validate()?;
    Ensemble::new(pm, cfg.params, cfg.size)?.decode(shot, cfg.size, cfg.pooling)
}

struct Tally {
    prediction: ObsMask,
    votes: usize,
    best: f64,
    best_member: usize,
}

fn tally(hyps: &[ErrorHypothesis]) -> Vec<Tally> {
    let mut out: Vec<Tally> = Vec::new();
    for (k, h) in hyps.iter().enumerate() {
        match out.iter_mut().find(|t| t.prediction == h.observables) {
            Some(t) => {
                t.votes += 1;
                if h.log_likelihood > t.best {
                    t.best = h.log_likelihood;
                    t.best_member = k;
                }
            }
            None => out.push(Tally { prediction: h.observables, votes: 1, best: h.log_likelihood, best_member: k }),
        }
    }
    out
}

fn better(a: &Tally, b: &Tally) -> bool {
    a.best > b.best || (a.best == b.best && a.best_member < b.best_member)
}

/// Vote winner; ties go to the prediction carrying the most likely member.
fn vote_winner(tallies: &[Tally]) -> &Tally {
    let mut win = &tallies[0];
    for t in &tallies[1..] {
        if t.votes > win.votes || (t.votes == win.votes && better(t, win)) {
            win = t;
        }
    }
    win
}

/// Reduces member hypotheses to one prediction.
///
/// Panics if `hyps` is empty.
pub fn pool(hyps: Vec<ErrorHypothesis>, pooling: Pooling) -> PoolResult {
    assert!(!hyps.is_empty(), "pooling needs at least one member");
    let tallies = tally(&hyps);
    let winner = vote_winner(&tallies);
    let confidence = winner.votes as f64 / hyps.len() as f64;
    let prediction = match pooling {
        Pooling::Vote => winner.prediction,
        Pooling::MostLikelyError => {
            let mut best = &tallies[0];
            for t in &tallies[1..] {
                if better(t, best) {
                    best = t;
                }
            }
            best.prediction
        }
        Pooling::SumLikelihood => {
            let top = hyps.iter().map(|h| h.log_likelihood).fold(f64::NEG_INFINITY, f64::max);
            let mut best: Option<(f64, &Tally)> = None;
            for t in &tallies {
                let s: f64 = hyps
                    .iter()
                    .filter(|h| h.observables == t.prediction)
                    .map(|h| (h.log_likelihood - top).exp())
                    .sum();
                if best.is_none_or(|(bs, bt)| s > bs || (s == bs && better(t, bt))) {
                    best = Some((s, t));
                }
            }
            best.expect("at least one tally").1.prediction
        }
    };
    PoolResult { prediction, confidence, member_hypotheses: hyps }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayeredResult {
    pub prediction: ObsMask,
    pub triggered: bool,
    pub instances_used: usize,
}

/// Layered decision from member hypotheses already computed for members
/// `0..max(n1, n2)`: the first pass votes over members `0..n1`; on any
/// dissent the second pass pools members `0..n2`.
pub fn layered_from_members(hyps: &[ErrorHypothesis], n1: usize, n2: usize, pooling2: Pooling) -> Result<LayeredResult> {
    if n1 == 0 || n2 < n1 {
        return Err(Error::Config(format!("layered decoding needs 1 <= n1 <= n2 (got n1 = {n1}, n2 = {n2})")));
    }
    if hyps.len() < n2 {
        return Err(Error::Config(format!("{} member hypotheses supplied, {n2} needed", hyps.len())));
    }
    let first = &hyps[..n1];
    let unanimous = first.iter().all(|h| h.observables == first[0].observables);
    if unanimous {
        return Ok(LayeredResult { prediction: first[0].observables, triggered: false, instances_used: n1 });
    }
    let second = pool(hyps[..n2].to_vec(), pooling2);
    Ok(LayeredResult { prediction: second.prediction, triggered: true, instances_used: n1 + n2 })
}

pub fn decode_layered(ensemble: &Ensemble, shot: &Shot, n1: usize, n2: usize, pooling2: Pooling) -> Result<LayeredResult> {
    if ensemble.len() < n2 {
        return Err(Error::Config(format!("ensemble has {} members, layered decoding needs {n2}", ensemble.len())));
    }
    let first = ensemble.decode_members(shot, n1)?;
    if first.iter().all(|h| h.observables == first[0].observables) {
        return Ok(LayeredResult { prediction: first[0].observables, triggered: false, instances_used: n1 });
    }
    let mut all = first;
    for m in &ensemble.members[n1..n2] {
        all.push(decode_correlated(m, shot)?);
    }
    layered_from_members(&all, n1, n2, pooling2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{generate, CodeSpec};
    use crate::correlated::project;

    fn hyp(obs: u64, ll: f64) -> ErrorHypothesis {
        ErrorHypothesis { mechanisms: vec![], observables: ObsMask(obs), log_likelihood: ll }
    }

    fn surface(p: f64) -> ProjectedModel {
        let spec = CodeSpec::new(CodeFamily::RotatedSurface, 3, 3, p).unwrap();
        project(generate(&spec).unwrap()).unwrap()
    }

    #[test]
    fn zero_alpha_is_identity() {
        let pm = surface(0.04);
        let m = perturb(&pm, &PerturbationParams::unperturbed(7), 3);
        assert_eq!(m.priors.pass1, pm.priors.pass1);
        assert_eq!(m.priors.pass2, pm.priors.pass2);
        assert_eq!(m.priors.reweight_q, pm.priors.reweight_q);
    }

    #[test]
    fn alpha_one_interval() {
        let pm = surface(0.01);
        let params = PerturbationParams::default();
        for k in 0..50 {
            let m = perturb(&pm, &params, k);
            for g in 0..2 {
                for (a, b) in m.priors.pass1[g].iter().zip(&pm.priors.pass1[g]) {
                    assert!(*a >= P_MIN && *a <= 2.0 * b + 1e-15);
                }
                for (a, b) in m.priors.pass2[g].iter().zip(&pm.priors.pass2[g]) {
                    assert!(*a >= 0.2 * b - 1e-15 && *a <= 1.8 * b + 1e-15);
                }
            }
        }
    }

    #[test]
    fn members_are_reproducible_in_any_order() {
        let pm = surface(0.04);
        let params = PerturbationParams { seed: 11, ..Default::default() };
        let forward: Vec<_> = (0..5).map(|k| perturb(&pm, &params, k).priors.pass1).collect();
        let backward: Vec<_> = (0..5).rev().map(|k| perturb(&pm, &params, k).priors.pass1).collect();
        for k in 0..5 {
            assert_eq!(forward[k], backward[4 - k]);
        }
        assert_ne!(forward[0], forward[1]);
    }

    #[test]
    fn membership_of_reweight_sets_is_unchanged() {
        let pm = surface(0.04);
        let m = perturb(&pm, &PerturbationParams::default(), 0);
        assert!(Arc::ptr_eq(&m.structure, &pm.structure));
        for g in 0..2 {
            for (a, b) in m.priors.reweight_q[g].iter().zip(&pm.priors.reweight_q[g]) {
                assert_eq!(a.len(), b.len());
            }
        }
    }

    #[test]
    fn perturbed_mean_matches_prior() {
        // Uniform on [0, 2p]: mean p, variance p^2 / 3.
        let pm = surface(0.01);
        let params = PerturbationParams::default();
        let n = 10_000;
        let p = pm.priors.pass1[0][0];
        let samples: Vec<f64> = (0..n).map(|k| perturb(&pm, &params, k).priors.pass1[0][0]).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sigma = (p * p / 3.0 / n as f64).sqrt();
        assert!((mean - p).abs() < 3.0 * sigma, "mean {mean} vs {p}");
        assert!(samples.iter().all(|&s| s >= P_MIN && s <= 2.0 * p));
    }

    #[test]
    fn single_member_pooling_agrees() {
        for pooling in [Pooling::Vote, Pooling::SumLikelihood, Pooling::MostLikelyError] {
            let r = pool(vec![hyp(1, -3.0)], pooling);
            assert_eq!(r.prediction, ObsMask(1));
            assert_eq!(r.confidence, 1.0);
        }
    }

    #[test]
    fn vote_counts() {
        let r = pool(vec![hyp(0, -5.0), hyp(0, -6.0), hyp(1, -1.0)], Pooling::Vote);
        assert_eq!(r.prediction, ObsMask(0));
        assert!((r.confidence - 2.0 / 3.0).abs() < 1e-15);
        let r = pool(vec![hyp(0, -5.0), hyp(0, -6.0), hyp(1, -1.0)], Pooling::MostLikelyError);
        assert_eq!(r.prediction, ObsMask(1));
        assert!((r.confidence - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn vote_tie_goes_to_most_likely() {
        let r = pool(vec![hyp(0, -5.0), hyp(1, -4.0)], Pooling::Vote);
        assert_eq!(r.prediction, ObsMask(1));
        assert_eq!(r.confidence, 0.5);
    }

    #[test]
    fn sum_likelihood_counts_mass() {
        // exp(-2) + exp(-2) > exp(-1.5)
        let hyps = vec![hyp(0, -2.0), hyp(0, -2.0), hyp(1, -1.5)];
        assert_eq!(pool(hyps.clone(), Pooling::SumLikelihood).prediction, ObsMask(0));
        assert_eq!(pool(hyps, Pooling::MostLikelyError).prediction, ObsMask(1));
    }

    #[test]
    fn layered_unanimous_and_dissent() {
        let agree = vec![hyp(1, -1.0), hyp(1, -2.0), hyp(0, -0.5)];
        let r = layered_from_members(&agree, 2, 3, Pooling::MostLikelyError).unwrap();
        assert_eq!(r, LayeredResult { prediction: ObsMask(1), triggered: false, instances_used: 2 });
        let r = layered_from_members(&agree, 3, 3, Pooling::MostLikelyError).unwrap();
        assert_eq!(r, LayeredResult { prediction: ObsMask(0), triggered: true, instances_used: 6 });
        assert!(layered_from_members(&agree, 0, 3, Pooling::Vote).is_err());
        assert!(layered_from_members(&agree, 3, 2, Pooling::Vote).is_err());
    }

    #[test]
    fn pooling_names_round_trip() {
        for p in [Pooling::Vote, Pooling::SumLikelihood, Pooling::MostLikelyError] {
            assert_eq!(p.name().parse::<Pooling>().unwrap(), p);
        }
        assert!("majority".parse::<Pooling>().is_err());
    }

    #[test]
    fn invalid_alpha_rejected() {
        assert!(PerturbationParams::new(1.5, 0.0, 0.0, 0).is_err());
        assert!(PerturbationParams::new(1.0, 0.8, 0.5, 0).is_ok());
    }
}
