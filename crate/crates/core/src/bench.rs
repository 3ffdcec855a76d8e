//! Seeded Monte Carlo sampling, logical-error-rate estimation, and paired
//! decoder comparisons.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codes::{generate, CodeSpec};
use crate::correlated::{decode_correlated, decode_uncorrelated, project, ErrorHypothesis, ProjectedModel};
use crate::error::{Error, Result};
use crate::harmony::{layered_from_members, pool, Ensemble, PerturbationParams, Pooling};
use crate::model::{ErrorHypergraph, ObsMask, Shot};
use crate::parallel;
use crate::tnml::{MlDecoder, Truncation};

/// Shots are decoded in blocks of this many, in parallel within a block.
pub const CHUNK: usize = 4096;

/// Independent random stream for shot `index`.
pub fn shot_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Indices of the mechanisms that fire, each independently with its
/// probability.
pub fn sample_active<R: Rng + ?Sized>(h: &ErrorHypergraph, rng: &mut R) -> Vec<usize> {
    let mut active = Vec::new();
    for (i, m) in h.mechanisms.iter().enumerate() {
        let u: f64 = rng.random();
        if u < m.probability {
            active.push(i);
        }
    }
    active
}

pub fn sample_shot<R: Rng + ?Sized>(h: &ErrorHypergraph, rng: &mut R) -> Shot {
    let active = sample_active(h, rng);
    let events = h.triggered_detectors(&active).expect("sampled indices are valid");
    let obs = h.predicted_observables(&active).expect("sampled indices are valid");
    Shot::new(events, Some(obs))
}

/// Shot `index` of the stream keyed by `seed`.
pub fn sample_indexed(h: &ErrorHypergraph, seed: u64, index: u64) -> Shot {
    sample_shot(h, &mut shot_rng(seed, index))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecoderSpec {
    /// Uncorrelated matching on each basis graph.
    Mwpm,
    Correlated,
    Ensemble { size: usize, pooling: Pooling, params: PerturbationParams },
    Layered { n1: usize, n2: usize, pooling: Pooling, params: PerturbationParams },
    Tnml { chi: usize },
    /// Lossless contraction.
    ExactMl,
}

impl DecoderSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DecoderSpec::Mwpm => "mwpm",
            DecoderSpec::Correlated => "correlated",
            DecoderSpec::Ensemble { .. } => "ensemble",
            DecoderSpec::Layered { .. } => "layered",
            DecoderSpec::Tnml { .. } => "tnml",
            DecoderSpec::ExactMl => "exact_ml",
        }
    }

    pub fn ensemble_size(&self) -> Option<usize> {
        match *self {
            DecoderSpec::Ensemble { size, .. } => Some(size),
            DecoderSpec::Layered { n2, .. } => Some(n2),
            _ => None,
        }
    }

    pub fn pooling(&self) -> Option<Pooling> {
        match *self {
            DecoderSpec::Ensemble { pooling, .. } | DecoderSpec::Layered { pooling, .. } => Some(pooling),
            _ => None,
        }
    }

    pub fn params(&self) -> Option<PerturbationParams> {
        match *self {
            DecoderSpec::Ensemble { params, .. } | DecoderSpec::Layered { params, .. } => Some(params),
            _ => None,
        }
    }

    pub fn chi(&self) -> Option<usize> {
        match *self {
            DecoderSpec::Tnml { chi } => Some(chi),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DecoderSpec::Ensemble { size, params, .. } => {
                if size == 0 {
                    return Err(Error::Config("ensemble size must be at least 1".into()));
                }
                params.validate()
            }
            DecoderSpec::Layered { n1, n2, params, .. } => {
                if n1 == 0 || n2 < n1 {
                    return Err(Error::Config(format!("layered decoding needs 1 <= n1 <= n2 (got {n1}, {n2})")));
                }
                params.validate()
            }
            DecoderSpec::Tnml { chi } if chi == 0 => Err(Error::InvalidBondDimension),
            _ => Ok(()),
        }
    }

    fn needs_projection(&self) -> bool {
        !matches!(self, DecoderSpec::Tnml { .. } | DecoderSpec::ExactMl)
    }
}

impl fmt::Display for DecoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecoderSpec::Ensemble { size, pooling, .. } => write!(f, "ensemble(N={size},{pooling})"),
            DecoderSpec::Layered { n1, n2, pooling, .. } => write!(f, "layered({n1},{n2},{pooling})"),
            DecoderSpec::Tnml { chi } => write!(f, "tnml(chi={chi})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LerEstimate {
    pub failures: u64,
    pub shots: u64,
    pub ler_per_shot: f64,
    pub ler_per_round: f64,
    pub stderr: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub trigger_rate: Option<f64>,
    pub mean_instances: Option<f64>,
    /// Summed decode time across workers.
    pub wall_ms: f64,
}

/// `(1 - (1 - 2 eps)^(1/r)) / 2`. Rates at or above one half map to one half.
pub fn per_round(ler_shot: f64, rounds: usize) -> f64 {
    let base = 1.0 - 2.0 * ler_shot;
    if base <= 0.0 {
        return 0.5;
    }
    (1.0 - base.powf(1.0 / rounds.max(1) as f64)) / 2.0
}

/// 95% Wilson score interval.
pub fn wilson(failures: u64, shots: u64) -> (f64, f64) {
    if shots == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = shots as f64;
    let p = failures as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    let low = if failures == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if failures == shots { 1.0 } else { (center + half).min(1.0) };
    (low, high)
}

impl LerEstimate {
    pub fn from_counts(failures: u64, shots: u64, rounds: usize) -> Self {
        let p = if shots == 0 { 0.0 } else { failures as f64 / shots as f64 };
        let stderr = if shots == 0 { 0.0 } else { (p * (1.0 - p) / shots as f64).sqrt() };
        let (wilson_low, wilson_high) = wilson(failures, shots);
        LerEstimate {
            failures,
            shots,
            ler_per_shot: p,
            ler_per_round: per_round(p, rounds),
            stderr,
            wilson_low,
            wilson_high,
            trigger_rate: None,
            mean_instances: None,
            wall_ms: 0.0,
        }
    }
}

/// Per-shot result of one decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub prediction: ObsMask,
    pub failed: bool,
    pub triggered: bool,
    pub instances: usize,
    pub nanos: u64,
}

enum Prepared {
    Mwpm,
    Correlated,
    Pooled { family: usize, size: usize, pooling: Pooling },
    Layered { family: usize, n1: usize, n2: usize, pooling: Pooling },
    Ml(usize),
}

/// Decoders ready to run on shots of one model. Ensemble decoders sharing
/// perturbation parameters share one member family, so every member is
/// decoded once per shot however many ensemble sizes are compared.
pub struct DecoderSet {
    pub model: Arc<ErrorHypergraph>,
    pub specs: Vec<DecoderSpec>,
    projected: Option<ProjectedModel>,
    families: Vec<Ensemble>,
    ml: Vec<MlDecoder>,
    prepared: Vec<Prepared>,
}

impl DecoderSet {
    pub fn new(model: Arc<ErrorHypergraph>, specs: &[DecoderSpec]) -> Result<Self> {
        for s in specs {
            s.validate()?;
        }
        let projected = if specs.iter().any(DecoderSpec::needs_projection) {
            Some(project((*model).clone())?)
        } else {
            None
        };
        let mut family_params: Vec<PerturbationParams> = Vec::new();
        let mut family_size: Vec<usize> = Vec::new();
        let mut ml_keys: Vec<Option<usize>> = Vec::new();
        let mut ml = Vec::new();
        let mut prepared = Vec::with_capacity(specs.len());
        let mut family_of = |params: PerturbationParams, size: usize| -> usize {
            let f = match family_params.iter().position(|p| *p == params) {
                Some(i) => i,
                None => {
                    family_params.push(params);
                    family_size.push(0);
                    family_params.len() - 1
                }
            };
            family_size[f] = family_size[f].max(size);
            f
        };
        for s in specs {
            let p = match *s {
                DecoderSpec::Mwpm => Prepared::Mwpm,
                DecoderSpec::Correlated => Prepared::Correlated,
                DecoderSpec::Ensemble { size, pooling, params } => {
                    Prepared::Pooled { family: family_of(params, size), size, pooling }
                }
                DecoderSpec::Layered { n1, n2, pooling, params } => {
                    Prepared::Layered { family: family_of(params, n2), n1, n2, pooling }
                }
                DecoderSpec::Tnml { .. } | DecoderSpec::ExactMl => {
                    let key = s.chi();
                    let i = match ml_keys.iter().position(|k| *k == key) {
                        Some(i) => i,
                        None => {
                            let t = key.map_or(Truncation::unbounded(), Truncation::bounded);
                            ml.push(MlDecoder::new(&model, t)?);
                            ml_keys.push(key);
                            ml.len() - 1
                        }
                    };
                    Prepared::Ml(i)
                }
            };
            prepared.push(p);
        }
        let families = match &projected {
            Some(pm) => family_params
                .iter()
                .zip(&family_size)
                .map(|(params, &size)| Ensemble::new(pm, *params, size))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        Ok(DecoderSet { model, specs: specs.to_vec(), projected, families, ml, prepared })
    }

    pub fn projected(&self) -> Option<&ProjectedModel> {
        self.projected.as_ref()
    }

    /// Decodes one shot with every decoder; shared members are decoded once.
    pub fn decode(&self, shot: &Shot) -> Result<Vec<Outcome>> {
        let truth = shot.true_observables.unwrap_or(ObsMask::EMPTY);
        // Per family: member hypotheses and prefix[k] = time to decode
        // members 0..k.
        let mut members: Vec<(Vec<ErrorHypothesis>, Vec<u64>)> = Vec::with_capacity(self.families.len());
        for fam in &self.families {
            let mut hyps = Vec::with_capacity(fam.len());
            let mut prefix = vec![0u64; fam.len() + 1];
            for (k, m) in fam.members.iter().enumerate() {
                let t = Instant::now();
                hyps.push(decode_correlated(m, shot)?);
                prefix[k + 1] = prefix[k] + t.elapsed().as_nanos() as u64;
            }
            members.push((hyps, prefix));
        }
        let mut out = Vec::with_capacity(self.prepared.len());
        for p in &self.prepared {
            let t = Instant::now();
            let (prediction, triggered, instances, extra) = match p {
                Prepared::Mwpm => {
                    let pm = self.projected.as_ref().expect("projected");
                    (decode_uncorrelated(pm, shot)?.observables, false, 1, 0)
                }
                Prepared::Correlated => {
                    let pm = self.projected.as_ref().expect("projected");
                    (decode_correlated(pm, shot)?.observables, false, 1, 0)
                }
                Prepared::Pooled { family, size, pooling } => {
                    let (hyps, prefix) = &members[*family];
                    let r = pool(hyps[..*size].to_vec(), *pooling);
                    (r.prediction, false, *size, prefix[*size])
                }
                Prepared::Layered { family, n1, n2, pooling } => {
                    let (hyps, prefix) = &members[*family];
                    let r = layered_from_members(hyps, *n1, *n2, *pooling)?;
                    let cost = if r.triggered { prefix[*n1] + prefix[*n2] } else { prefix[*n1] };
                    (r.prediction, r.triggered, r.instances_used, cost)
                }
                Prepared::Ml(i) => (self.ml[*i].decode(shot)?, false, 1, 0),
            };
            let own = match p {
                Prepared::Pooled { .. } | Prepared::Layered { .. } => 0,
                _ => t.elapsed().as_nanos() as u64,
            };
            out.push(Outcome { prediction, failed: prediction != truth, triggered, instances, nanos: own + extra });
        }
        Ok(out)
    }
}

/// Running totals for one decoder.
#[derive(Debug, Clone, Default)]
pub struct Tally {
    pub failures: u64,
    pub shots: u64,
    pub triggered: u64,
    pub instances: u64,
    pub nanos: u64,
}

impl Tally {
    pub fn add(&mut self, o: &Outcome) {
        self.shots += 1;
        self.failures += o.failed as u64;
        self.triggered += o.triggered as u64;
        self.instances += o.instances as u64;
        self.nanos += o.nanos;
    }

    pub fn estimate(&self, spec: &DecoderSpec, rounds: usize) -> LerEstimate {
        let mut e = LerEstimate::from_counts(self.failures, self.shots, rounds);
        if matches!(spec, DecoderSpec::Layered { .. }) && self.shots > 0 {
            e.trigger_rate = Some(self.triggered as f64 / self.shots as f64);
            e.mean_instances = Some(self.instances as f64 / self.shots as f64);
        }
        e.wall_ms = self.nanos as f64 / 1e6;
        e
    }
}

/// Decodes shots `0..shots` of the stream keyed by `seed` with every
/// decoder and returns the per-shot outcomes, `[shot][decoder]`. All
/// decoders see the same shots.
pub fn decode_stream(set: &DecoderSet, shots: u64, seed: u64) -> Result<Vec<Vec<Outcome>>> {
    let mut all = Vec::with_capacity(shots as usize);
    let mut start = 0u64;
    while start < shots {
        let n = CHUNK.min((shots - start) as usize);
        let block = parallel::map_indexed(n, |i| {
            let shot = sample_indexed(&set.model, seed, start + i as u64);
            set.decode(&shot)
        });
        for r in block {
            all.push(r?);
        }
        start += n as u64;
        log::debug!("decoded {start}/{shots} shots");
    }
    Ok(all)
}

/// Paired comparison: identical shot stream for every decoder.
pub fn run_comparison(
    model: Arc<ErrorHypergraph>,
    specs: &[DecoderSpec],
    shots: u64,
    seed: u64,
    rounds: usize,
) -> Result<Vec<LerEstimate>> {
    if shots == 0 {
        return Err(Error::Config("shots must be at least 1".into()));
    }
    let set = DecoderSet::new(model, specs)?;
    let mut tallies = vec![Tally::default(); specs.len()];
    let mut start = 0u64;
    while start < shots {
        let n = CHUNK.min((shots - start) as usize);
        let block = parallel::map_indexed(n, |i| {
            let shot = sample_indexed(&set.model, seed, start + i as u64);
            set.decode(&shot)
        });
        for r in block {
            for (t, o) in tallies.iter_mut().zip(r?) {
                t.add(&o);
            }
        }
        start += n as u64;
        log::debug!("decoded {start}/{shots} shots");
    }
    Ok(tallies.iter().zip(specs).map(|(t, s)| t.estimate(s, rounds)).collect())
}

/// Where the decoded model comes from.
#[derive(Debug, Clone)]
pub enum ModelSource {
    Code(CodeSpec),
    /// Ingested model with the number of rounds used for per-round rates.
    Model { model: Arc<ErrorHypergraph>, rounds: usize },
}

impl ModelSource {
    pub fn load(&self) -> Result<(Arc<ErrorHypergraph>, usize)> {
        match self {
            ModelSource::Code(spec) => Ok((Arc::new(generate(spec)?), spec.rounds)),
            ModelSource::Model { model, rounds } => Ok((Arc::clone(model), *rounds)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub source: ModelSource,
    pub decoder: DecoderSpec,
    pub shots: u64,
    pub seed: u64,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<LerEstimate> {
    let (model, rounds) = spec.source.load()?;
    Ok(run_comparison(model, &[spec.decoder], spec.shots, spec.seed, rounds)?.remove(0))
}

/// One output row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub family: String,
    pub d: Option<usize>,
    pub r: usize,
    pub p: Option<f64>,
    pub decoder: String,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub pooling: Option<String>,
    pub chi: Option<usize>,
    pub n1: Option<usize>,
    pub shots: u64,
    pub failures: u64,
    pub ler_shot: f64,
    pub ler_round: f64,
    pub stderr: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub trigger_rate: Option<f64>,
    pub mean_instances: Option<f64>,
    /// Baseline LER minus this row's LER, filled by layered sweeps.
    pub improvement: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub alpha3: Option<f64>,
    pub seed: u64,
    /// Left empty unless timing is requested, so outputs stay reproducible.
    pub wall_ms: Option<f64>,
}

impl Row {
    pub fn new(source: &ModelSource, spec: &DecoderSpec, est: &LerEstimate, seed: u64, timing: bool) -> Self {
        let (family, d, r, p) = match source {
            ModelSource::Code(c) => (c.family.name().to_string(), Some(c.distance), c.rounds, Some(c.p)),
            ModelSource::Model { rounds, .. } => ("model".to_string(), None, *rounds, None),
        };
        let params = spec.params();
        Row {
            family,
            d,
            r,
            p,
            decoder: spec.name().to_string(),
            n: spec.ensemble_size(),
            pooling: spec.pooling().map(|p| p.name().to_string()),
            chi: spec.chi(),
            n1: match spec {
                DecoderSpec::Layered { n1, .. } => Some(*n1),
                _ => None,
            },
            shots: est.shots,
            failures: est.failures,
            ler_shot: est.ler_per_shot,
            ler_round: est.ler_per_round,
            stderr: est.stderr,
            wilson_low: est.wilson_low,
            wilson_high: est.wilson_high,
            trigger_rate: est.trigger_rate,
            mean_instances: est.mean_instances,
            improvement: None,
            alpha1: params.map(|p| p.alpha1),
            alpha2: params.map(|p| p.alpha2),
            alpha3: params.map(|p| p.alpha3),
            seed,
            wall_ms: timing.then_some(est.wall_ms),
        }
    }
}

/// Cartesian sweep over model sources; each source runs one paired
/// comparison and its rows are handed to `emit` as soon as it finishes.
pub fn sweep<F>(sources: &[ModelSource], specs: &[DecoderSpec], shots: u64, seed: u64, timing: bool, mut emit: F) -> Result<()>
where
    F: FnMut(Row) -> Result<()>,
{
    for source in sources {
        let (model, rounds) = source.load()?;
        let ests = run_comparison(model, specs, shots, seed, rounds)?;
        for (spec, est) in specs.iter().zip(&ests) {
            emit(Row::new(source, spec, est, seed, timing))?;
        }
    }
    Ok(())
}

/// Per-shot failure indicators of two decoders on the same stream, for
/// paired statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairedDiff {
    pub shots: u64,
    /// Shots where only the first decoder failed.
    pub only_first: u64,
    /// Shots where only the second decoder failed.
    pub only_second: u64,
}

impl PairedDiff {
    pub fn from_outcomes(outcomes: &[Vec<Outcome>], a: usize, b: usize) -> Self {
        let mut d = PairedDiff::default();
        for o in outcomes {
            d.shots += 1;
            match (o[a].failed, o[b].failed) {
                (true, false) => d.only_first += 1,
                (false, true) => d.only_second += 1,
                _ => {}
            }
        }
        d
    }

    /// Estimated `LER(first) - LER(second)`.
    pub fn mean(&self) -> f64 {
        (self.only_first as f64 - self.only_second as f64) / self.shots as f64
    }

    /// Standard error of [`mean`](Self::mean) from the per-shot differences.
    pub fn stderr(&self) -> f64 {
        let n = self.shots as f64;
        let m = self.mean();
        let second_moment = (self.only_first + self.only_second) as f64 / n;
        ((second_moment - m * m).max(0.0) / n).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::CodeFamily;
    use crate::model::parse_dem;

    #[test]
    fn zero_probability_gives_empty_shot() {
        let mut h = parse_dem("error(0.5) D0 D1 L0\nerror(0.5) D1").unwrap();
        for m in &mut h.mechanisms {
            m.probability = 0.0;
        }
        for i in 0..100 {
            let s = sample_indexed(&h, 1, i);
            assert_eq!(s.detection_events.count_ones(..), 0);
            assert_eq!(s.true_observables, Some(ObsMask::EMPTY));
        }
    }

    #[test]
    fn unit_probability_gives_xor_of_all() {
        let mut h = parse_dem("error(0.5) D0 D1 L0\nerror(0.5) D1 D2").unwrap();
        for m in &mut h.mechanisms {
            m.probability = 1.0;
        }
        let s = sample_indexed(&h, 3, 0);
        assert_eq!(s.events(), vec![0, 2]);
        assert_eq!(s.true_observables, Some(ObsMask(1)));
    }

    #[test]
    fn shots_are_reproducible_by_index() {
        let spec = CodeSpec::new(CodeFamily::RotatedSurface, 3, 3, 0.1).unwrap();
        let h = generate(&spec).unwrap();
        let a: Vec<_> = (0..20).map(|i| sample_indexed(&h, 9, i)).collect();
        let b: Vec<_> = (0..20).rev().map(|i| sample_indexed(&h, 9, i)).collect();
        for i in 0..20 {
            assert_eq!(a[i], b[19 - i]);
        }
        assert_ne!(sample_indexed(&h, 9, 0), sample_indexed(&h, 10, 0));
    }

    #[test]
    fn activation_frequency() {
        let h = parse_dem("error(0.1) D0\nerror(0.3) D1\nerror(0.02) D0 D1").unwrap();
        let n = 100_000u64;
        let mut counts = [0u64; 3];
        for i in 0..n {
            for m in sample_active(&h, &mut shot_rng(5, i)) {
                counts[m] += 1;
            }
        }
        for (c, m) in counts.iter().zip(&h.mechanisms) {
            let p = m.probability;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn per_round_conversion() {
        assert_eq!(per_round(0.0, 5), 0.0);
        assert!((per_round(0.1, 1) - 0.1).abs() < 1e-15);
        // Composing r independent rounds of eps gives the shot rate back.
        let eps = 0.01f64;
        let r = 4;
        let shot = (1.0 - (1.0 - 2.0 * eps).powi(r)) / 2.0;
        assert!((per_round(shot, r as usize) - eps).abs() < 1e-15);
        assert_eq!(per_round(0.6, 3), 0.5);
    }

    #[test]
    fn estimate_formulas() {
        let e = LerEstimate::from_counts(25, 1000, 1);
        assert_eq!(e.ler_per_shot, 0.025);
        assert!((e.stderr - (0.025f64 * 0.975 / 1000.0).sqrt()).abs() < 1e-15);
        assert!(e.wilson_low < 0.025 && e.wilson_high > 0.025);
        let z = LerEstimate::from_counts(0, 100, 1);
        assert_eq!(z.wilson_low, 0.0);
        assert!(z.wilson_high > 0.0);
    }

    #[test]
    fn zero_noise_has_no_failures() {
        let spec = CodeSpec::new(CodeFamily::Repetition, 3, 3, 0.05).unwrap();
        let mut h = generate(&spec).unwrap();
        for m in &mut h.mechanisms {
            m.probability = 1e-300;
        }
        let ests = run_comparison(Arc::new(h), &[DecoderSpec::Mwpm, DecoderSpec::ExactMl], 200, 1, 3).unwrap();
        assert!(ests.iter().all(|e| e.failures == 0));
    }

    #[test]
    fn single_unperturbed_member_equals_correlated() {
        let spec = CodeSpec::new(CodeFamily::RotatedSurface, 3, 3, 0.06).unwrap();
        let h = Arc::new(generate(&spec).unwrap());
        let specs = [
            DecoderSpec::Correlated,
            DecoderSpec::Ensemble { size: 1, pooling: Pooling::Vote, params: PerturbationParams::unperturbed(4) },
        ];
        let set = DecoderSet::new(h, &specs).unwrap();
        let outcomes = decode_stream(&set, 500, 2).unwrap();
        for o in &outcomes {
            assert_eq!(o[0].prediction, o[1].prediction);
        }
    }

    #[test]
    fn paired_difference_statistics() {
        let mk = |f: bool| Outcome { prediction: ObsMask::EMPTY, failed: f, triggered: false, instances: 1, nanos: 0 };
        let outcomes = vec![vec![mk(true), mk(false)], vec![mk(false), mk(false)], vec![mk(true), mk(true)], vec![mk(false), mk(true)]];
        let d = PairedDiff::from_outcomes(&outcomes, 0, 1);
        assert_eq!((d.only_first, d.only_second, d.shots), (1, 1, 4));
        assert_eq!(d.mean(), 0.0);
        // Differences (1, 0, 0, -1): population variance 1/2.
        assert!((d.stderr() - (0.5f64 / 4.0).sqrt()).abs() < 1e-15);
    }
}
