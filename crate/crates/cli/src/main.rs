//! `harmony`: generate code models, sample shots, decode them, and run
//! seeded logical-error-rate sweeps.

mod io;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use harmony_core::bench::{self, DecoderSet, DecoderSpec, ModelSource, Row};
use harmony_core::codes::{generate, CodeFamily, CodeSpec};
use harmony_core::harmony::{PerturbationParams, Pooling};
use harmony_core::parallel;

use crate::io::{Format, RowSink};

#[derive(Parser, Debug)]
#[command(name = "harmony", version, about = "Matching, harmonized ensembles and tensor-network maximum-likelihood decoding")]
struct Cli {
    /// Master seed for shot sampling and ensemble perturbations
    #[arg(long, global = true, env = "HARMONY_SEED", default_value_t = 0)]
    seed: u64,

    /// Worker threads for decoding; 0 uses every core. Results do not depend on it
    #[arg(long, global = true, env = "HARMONY_THREADS", default_value_t = 0)]
    threads: usize,

    /// Output file (stdout when absent). A `.json` extension selects JSON, anything else CSV
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a generated model and its `<out>.basis` detector-basis sidecar
    Gen(GenArgs),
    /// Sample shots as bit-string lines: detector bits, a space, observable bits
    Sample(SampleArgs),
    /// Decode a shot file and write one observable bit-string per shot
    Decode(DecodeArgs),
    /// Paired logical-error-rate comparison of decoders over a code sweep
    Bench(BenchArgs),
    /// Logical error rate of tnml across bond dimensions on one shot stream
    ScanChi(ScanChiArgs),
    /// Layered ensemble sweep over the first-pass size n1
    Layered(LayeredArgs),
}

#[derive(Args, Debug, Clone)]
struct CodeArgs {
    /// Code family: repetition or rotated_surface
    #[arg(long, env = "HARMONY_FAMILY", default_value = "rotated_surface")]
    family: CodeFamily,

    /// Code distances, comma separated (odd, at least 3)
    #[arg(long = "d", value_delimiter = ',', default_value = "3")]
    d: Vec<usize>,

    /// Syndrome-measurement rounds [default: the distance]
    #[arg(long)]
    rounds: Option<usize>,

    /// Physical error rates per round, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0.04")]
    p: Vec<f64>,
}

#[derive(Args, Debug, Clone)]
struct SourceArgs {
    #[command(flatten)]
    code: CodeArgs,

    /// Model file in detector-error-model text; replaces the code flags
    #[arg(long)]
    model: Option<PathBuf>,

    /// Basis sidecar for --model [default: <model>.basis when it exists]
    #[arg(long, requires = "model")]
    basis: Option<PathBuf>,

    /// Infer detector bases from the decompositions when --model has no sidecar
    #[arg(long, requires = "model")]
    infer_basis: bool,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    code: CodeArgs,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    source: SourceArgs,

    /// Number of shots
    #[arg(long, env = "HARMONY_SHOTS", default_value_t = 1000)]
    shots: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum DecoderKind {
    Mwpm,
    Correlated,
    Ensemble,
    Layered,
    Tnml,
    ExactMl,
}

#[derive(Args, Debug, Clone)]
struct DecoderArgs {
    /// Decoders, comma separated
    #[arg(long, value_delimiter = ',', default_value = "mwpm")]
    decoder: Vec<DecoderKind>,

    /// Ensemble sizes N, comma separated
    #[arg(long = "ensemble-size", visible_alias = "n", value_delimiter = ',', default_value = "100")]
    ensemble_size: Vec<usize>,

    /// Pooling rules: vote, sum_likelihood, most_likely_error [default: vote for repetition, most_likely_error otherwise]
    #[arg(long, value_delimiter = ',', value_parser = parse_pooling)]
    pooling: Vec<Pooling>,

    /// Relative perturbation widths alpha1,alpha2,alpha3 (first pass, second pass, reweighting)
    #[arg(long, value_delimiter = ',', num_args = 1, default_value = "1,0.8,0.5")]
    alphas: Vec<f64>,

    /// Layered decoding as n1,n2 (used by --decoder layered)
    #[arg(long, value_delimiter = ',', default_value = "4,100")]
    layered: Vec<usize>,

    /// Bond dimensions for tnml, comma separated
    #[arg(long, value_delimiter = ',', default_value = "16")]
    chi: Vec<usize>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// Model file in detector-error-model text
    #[arg(long)]
    model: PathBuf,

    /// Basis sidecar [default: <model>.basis when it exists]
    #[arg(long)]
    basis: Option<PathBuf>,

    /// Infer detector bases from the decompositions when there is no sidecar
    #[arg(long)]
    infer_basis: bool,

    /// Shot file as written by `sample`
    #[arg(long)]
    shots: PathBuf,

    #[command(flatten)]
    decoders: DecoderArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Shots per configuration
    #[arg(long, env = "HARMONY_SHOTS", default_value_t = 10_000)]
    shots: u64,

    /// Fill the wall_ms column (makes output time dependent)
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    decoders: DecoderArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct ScanChiArgs {
    #[command(flatten)]
    source: SourceArgs,

    /// Bond dimensions, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    chis: Vec<usize>,

    /// Also run the lossless contraction
    #[arg(long)]
    exact: bool,

    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct LayeredArgs {
    #[command(flatten)]
    source: SourceArgs,

    /// First-pass sizes, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
    n1: Vec<usize>,

    /// Second-pass size
    #[arg(long, default_value_t = 100)]
    n2: usize,

    /// Second-pass pooling [default: vote for repetition, most_likely_error otherwise]
    #[arg(long, value_parser = parse_pooling)]
    pooling: Option<Pooling>,

    /// Relative perturbation widths alpha1,alpha2,alpha3
    #[arg(long, value_delimiter = ',', default_value = "1,0.8,0.5")]
    alphas: Vec<f64>,

    #[command(flatten)]
    run: RunArgs,
}

fn parse_pooling(s: &str) -> std::result::Result<Pooling, String> {
    s.parse().map_err(|e: harmony_core::Error| e.to_string())
}

/// Bad flag values or combinations; reported with exit code 1.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

fn params(alphas: &[f64], seed: u64) -> Result<PerturbationParams> {
    let [a1, a2, a3] = alphas[..] else {
        return usage(format!("--alphas needs three values, got {}", alphas.len()));
    };
    PerturbationParams::new(a1, a2, a3, seed).map_err(|e| Usage(e.to_string()).into())
}

fn family_of(source: &SourceArgs) -> Option<CodeFamily> {
    source.model.is_none().then_some(source.code.family)
}

fn default_pooling(family: Option<CodeFamily>) -> Pooling {
    family.map_or(Pooling::MostLikelyError, Pooling::default_for)
}

fn decoder_specs(args: &DecoderArgs, family: Option<CodeFamily>, seed: u64) -> Result<Vec<DecoderSpec>> {
    let params = params(&args.alphas, seed)?;
    let poolings = if args.pooling.is_empty() { vec![default_pooling(family)] } else { args.pooling.clone() };
    let mut specs = Vec::new();
    for &kind in &args.decoder {
        match kind {
            DecoderKind::Mwpm => specs.push(DecoderSpec::Mwpm),
            DecoderKind::Correlated => specs.push(DecoderSpec::Correlated),
            DecoderKind::Ensemble => {
                for &pooling in &poolings {
                    for &size in &args.ensemble_size {
                        specs.push(DecoderSpec::Ensemble { size, pooling, params });
                    }
                }
            }
            DecoderKind::Layered => {
                let [n1, n2] = args.layered[..] else {
                    return usage("--layered needs two values n1,n2");
                };
                for &pooling in &poolings {
                    specs.push(DecoderSpec::Layered { n1, n2, pooling, params });
                }
            }
            DecoderKind::Tnml => specs.extend(args.chi.iter().map(|&chi| DecoderSpec::Tnml { chi })),
            DecoderKind::ExactMl => specs.push(DecoderSpec::ExactMl),
        }
    }
    for s in &specs {
        s.validate().map_err(|e| Usage(format!("{s}: {e}")))?;
    }
    Ok(specs)
}

fn code_specs(code: &CodeArgs) -> Result<Vec<CodeSpec>> {
    let mut out = Vec::new();
    for &d in &code.d {
        for &p in &code.p {
            let r = code.rounds.unwrap_or(d);
            out.push(CodeSpec::new(code.family, d, r, p).map_err(|e| Usage(e.to_string()))?);
        }
    }
    Ok(out)
}

fn sources(args: &SourceArgs) -> Result<Vec<ModelSource>> {
    match &args.model {
        Some(path) => {
            let h = io::read_model(path, args.basis.as_deref(), args.infer_basis)?;
            let rounds = args.code.rounds.unwrap_or(1);
            Ok(vec![ModelSource::Model { model: Arc::new(h), rounds }])
        }
        None => Ok(code_specs(&args.code)?.into_iter().map(ModelSource::Code).collect()),
    }
}

fn check_out(out: Option<&Path>) -> Result<()> {
    if let Some(p) = out {
        let parent = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return usage(format!("--out directory {} does not exist", parent.display()));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let out = cli.out.as_deref();
    let seed = cli.seed;
    match cli.command {
        Command::Gen(args) => {
            let specs = code_specs(&args.code)?;
            let [spec] = specs[..] else {
                return usage("gen takes a single --d and --p");
            };
            let h = generate(&spec)?;
            if out.is_none() {
                log::warn!("no --out given; the basis sidecar is not written");
            }
            io::write_model(&h, out)
        }
        Command::Sample(args) => {
            let mut w = io::open_out(out)?;
            for source in sources(&args.source)? {
                let (h, _) = source.load()?;
                let lines = parallel::map_indexed(args.shots as usize, |i| {
                    io::format_shot(&bench::sample_indexed(&h, seed, i as u64), h.num_observables)
                });
                for l in lines {
                    writeln!(w, "{l}")?;
                }
            }
            w.flush()?;
            Ok(())
        }
        Command::Decode(args) => {
            let h = Arc::new(io::read_model(&args.model, args.basis.as_deref(), args.infer_basis)?);
            let specs = decoder_specs(&args.decoders, None, seed)?;
            let [spec] = specs[..] else {
                return usage("decode takes exactly one decoder configuration");
            };
            let shots = io::read_shots(&args.shots, &h)?;
            let set = DecoderSet::new(Arc::clone(&h), &[spec])?;
            let results = parallel::map_indexed(shots.len(), |i| set.decode(&shots[i]));
            let mut w = io::open_out(out)?;
            let (mut failures, mut known) = (0u64, 0u64);
            for (shot, r) in shots.iter().zip(results) {
                let o = r?.remove(0);
                writeln!(w, "{}", o.prediction.to_bit_string(h.num_observables))?;
                if shot.true_observables.is_some() {
                    known += 1;
                    failures += o.failed as u64;
                }
            }
            w.flush()?;
            if known > 0 {
                eprintln!("{spec}: {failures} failures in {known} shots");
            }
            Ok(())
        }
        Command::Bench(args) => {
            let specs = decoder_specs(&args.decoders, family_of(&args.source), seed)?;
            sweep(&args.source, &specs, &args.run, seed, out)
        }
        Command::ScanChi(args) => {
            let mut specs: Vec<DecoderSpec> = args.chis.iter().map(|&chi| DecoderSpec::Tnml { chi }).collect();
            if args.exact {
                specs.push(DecoderSpec::ExactMl);
            }
            for s in &specs {
                s.validate().map_err(|e| Usage(format!("{s}: {e}")))?;
            }
            sweep(&args.source, &specs, &args.run, seed, out)
        }
        Command::Layered(args) => {
            let params = params(&args.alphas, seed)?;
            let pooling = args.pooling.unwrap_or(default_pooling(family_of(&args.source)));
            let mut specs = vec![DecoderSpec::Correlated];
            for &n1 in &args.n1 {
                specs.push(DecoderSpec::Layered { n1, n2: args.n2, pooling, params });
            }
            for s in &specs {
                s.validate().map_err(|e| Usage(format!("{s}: {e}")))?;
            }
            let mut sink = RowSink::new(out, Format::for_path(out))?;
            let mut baseline = None;
            bench::sweep(&sources(&args.source)?, &specs, args.run.shots, seed, args.run.timing, |mut row: Row| {
                if row.decoder == "correlated" {
                    baseline = Some(row.ler_shot);
                } else if let Some(b) = baseline {
                    row.improvement = Some(b - row.ler_shot);
                }
                sink.push(row).map_err(|e| harmony_core::Error::Config(format!("{e:#}")))
            })?;
            sink.finish()
        }
    }
}

fn sweep(source: &SourceArgs, specs: &[DecoderSpec], run: &RunArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    if run.shots == 0 {
        return usage("--shots must be at least 1");
    }
    let mut sink = RowSink::new(out, Format::for_path(out))?;
    bench::sweep(&sources(source)?, specs, run.shots, seed, run.timing, |row| {
        sink.push(row).map_err(|e| harmony_core::Error::Config(format!("{e:#}")))
    })?;
    sink.finish()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = check_out(cli.out.as_deref()) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<Usage>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) if matches!(e.downcast_ref::<harmony_core::Error>(), Some(harmony_core::Error::MissingBasis)) => {
            eprintln!("error: {e}; pass --basis <file> or --infer-basis");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
