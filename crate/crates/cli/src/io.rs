use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use harmony_core::bench::Row;
use harmony_core::model::{parse_basis, parse_dem, serialize_basis, serialize_dem};
use harmony_core::{Basis, ErrorHypergraph, ObsMask, Shot};

pub fn sidecar_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".basis");
    PathBuf::from(s)
}

/// Reads a model and its basis sidecar (explicit, or `<model>.basis` when
/// that file exists). With `infer` and no sidecar the bases are inferred
/// from the decompositions.
pub fn read_model(path: &Path, basis: Option<&Path>, infer: bool) -> Result<ErrorHypergraph> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    let mut h = parse_dem(&text).with_context(|| format!("parsing model {}", path.display()))?;
    let implied = sidecar_path(path);
    let sidecar = match basis {
        Some(b) => Some(b.to_path_buf()),
        None if implied.exists() => Some(implied),
        None => None,
    };
    if let Some(b) = sidecar {
        let text = std::fs::read_to_string(&b).with_context(|| format!("reading basis sidecar {}", b.display()))?;
        h.detector_basis = Some(parse_basis(&text, h.num_detectors).with_context(|| format!("parsing basis sidecar {}", b.display()))?);
    } else if infer {
        h.detector_basis = Some(h.infer_basis().context("inferring detector bases")?);
    }
    h.validate()?;
    Ok(h)
}

pub fn write_model(h: &ErrorHypergraph, out: Option<&Path>) -> Result<()> {
    let text = serialize_dem(h);
    match out {
        Some(p) => {
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            if let Some(b) = &h.detector_basis {
                write_basis(b, &sidecar_path(p))?;
            }
        }
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn write_basis(basis: &[Basis], path: &Path) -> Result<()> {
    std::fs::write(path, serialize_basis(basis)).with_context(|| format!("writing {}", path.display()))
}

pub fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn bits(n: usize, on: impl Fn(usize) -> bool) -> String {
    (0..n).map(|i| if on(i) { '1' } else { '0' }).collect()
}

/// `<detector bits> <observable bits>`, one shot per line.
pub fn format_shot(shot: &Shot, num_observables: usize) -> String {
    let dets = bits(shot.detection_events.len(), |d| shot.detection_events.contains(d));
    match shot.true_observables {
        Some(obs) => format!("{dets} {}", obs.to_bit_string(num_observables)),
        None => dets,
    }
}

fn parse_bits(s: &str, line: usize) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => bail!("shot file line {line}: unexpected character `{other}`"),
        })
        .collect()
}

/// Reads a shot file. Each line holds the detector bits, optionally
/// followed by the observable bits (separated by whitespace or simply
/// appended). Blank lines and `#` comments are skipped.
pub fn read_shots(path: &Path, h: &ErrorHypergraph) -> Result<Vec<Shot>> {
    let file = File::open(path).with_context(|| format!("opening shot file {}", path.display()))?;
    let (nd, no) = (h.num_detectors, h.num_observables);
    let mut shots = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let all: String = body.split_whitespace().collect();
        let v = parse_bits(&all, i + 1)?;
        let truth = if v.len() == nd + no && no > 0 {
            let mut m = ObsMask::EMPTY;
            for (j, &b) in v[nd..].iter().enumerate() {
                if b {
                    m ^= ObsMask::single(j);
                }
            }
            Some(m)
        } else if v.len() == nd {
            None
        } else {
            bail!("shot file line {}: {} bits, expected {nd} detectors (plus {no} observables)", i + 1, v.len());
        };
        let events: Vec<u32> = (0..nd as u32).filter(|&d| v[d as usize]).collect();
        let mut shot = Shot::from_events(nd, &events);
        shot.true_observables = truth;
        shots.push(shot);
    }
    Ok(shots)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn for_path(out: Option<&Path>) -> Format {
        match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// Emits rows as they arrive (CSV) or as one array at the end (JSON).
pub enum RowSink {
    Csv(csv::Writer<Box<dyn Write>>),
    Json(Box<dyn Write>, Vec<Row>),
}

impl RowSink {
    pub fn new(out: Option<&Path>, format: Format) -> Result<Self> {
        let w = open_out(out)?;
        Ok(match format {
            Format::Csv => RowSink::Csv(csv::Writer::from_writer(w)),
            Format::Json => RowSink::Json(w, Vec::new()),
        })
    }

    pub fn push(&mut self, row: Row) -> Result<()> {
        match self {
            RowSink::Csv(w) => {
                w.serialize(&row)?;
                w.flush()?;
            }
            RowSink::Json(_, rows) => rows.push(row),
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        match self {
            RowSink::Csv(mut w) => w.flush()?,
            RowSink::Json(mut w, rows) => {
                serde_json::to_writer_pretty(&mut w, &rows)?;
                writeln!(w)?;
                w.flush()?;
            }
        }
        Ok(())
    }
}
