//! Phenomenological noise models for the repetition code and the rotated
//! surface code (memory-Z).
//!
//! Detectors are indexed round-major, then in raster order, and carry
//! `(x, y, round)` coordinates. Every mechanism is emitted individually; no
//! two mechanisms are merged even when they flip the same detectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Basis, Component, ErrorHypergraph, Mechanism, ObsMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeFamily {
    Repetition,
    RotatedSurface,
}

impl CodeFamily {
    pub fn name(self) -> &'static str {
        match self {
            CodeFamily::Repetition => "repetition",
            CodeFamily::RotatedSurface => "rotated_surface",
        }
    }
}

impl std::str::FromStr for CodeFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "repetition" | "repetition_code" => Ok(CodeFamily::Repetition),
            "rotated_surface" | "surface" | "surface_code" => Ok(CodeFamily::RotatedSurface),
            other => Err(Error::InvalidSpec(format!("unknown code family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeSpec {
    pub family: CodeFamily,
    pub distance: usize,
    pub rounds: usize,
    pub p: f64,
}

impl CodeSpec {
    pub fn new(family: CodeFamily, distance: usize, rounds: usize, p: f64) -> Result<Self> {
        let spec = CodeSpec { family, distance, rounds, p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.distance < 3 || self.distance % 2 == 0 {
            return Err(Error::InvalidSpec(format!("distance {} must be odd and at least 3", self.distance)));
        }
        if self.rounds < 1 {
            return Err(Error::InvalidSpec("rounds must be at least 1".into()));
        }
        if !(self.p > 0.0 && self.p < 0.5) {
            return Err(Error::InvalidSpec(format!("p = {} must lie in (0, 0.5)", self.p)));
        }
        Ok(())
    }
}

/// Builds the model for any supported family.
pub fn generate(spec: &CodeSpec) -> Result<ErrorHypergraph> {
    match spec.family {
        CodeFamily::Repetition => gen_repetition_phenom(spec),
        CodeFamily::RotatedSurface => gen_surface_phenom(spec),
    }
}

/// Bit-flip repetition code with noisy syndrome measurement and a final
/// perfect readout of the data.
///
/// Each of the `rounds` noisy rounds contains `d` data-flip mechanisms
/// followed by `d - 1` measurement-flip mechanisms, all with probability `p`.
pub fn gen_repetition_phenom(spec: &CodeSpec) -> Result<ErrorHypergraph> {
    spec.validate()?;
    if spec.family != CodeFamily::Repetition {
        return Err(Error::InvalidSpec("gen_repetition_phenom needs the repetition family".into()));
    }
    let d = spec.distance;
    let checks = d - 1;
    let det = |t: usize, j: usize| (t * checks + j) as u32;
    let mut mechanisms = Vec::new();
    for t in 0..spec.rounds {
        for q in 0..d {
            let mut detectors = Vec::with_capacity(2);
            if q >= 1 {
                detectors.push(det(t, q - 1));
            }
            if q < checks {
                detectors.push(det(t, q));
            }
            let observables = if q == 0 { ObsMask::single(0) } else { ObsMask::EMPTY };
            mechanisms.push(Mechanism { probability: spec.p, detectors, observables, decomposition: None });
        }
        for j in 0..checks {
            mechanisms.push(Mechanism {
                probability: spec.p,
                detectors: vec![det(t, j), det(t + 1, j)],
                observables: ObsMask::EMPTY,
                decomposition: None,
            });
        }
    }
    let num_detectors = (spec.rounds + 1) * checks;
    let coords = (0..=spec.rounds)
        .flat_map(|t| (0..checks).map(move |j| vec![(2 * j + 1) as f64, 0.0, t as f64]))
        .collect();
    let h = ErrorHypergraph {
        mechanisms,
        num_detectors,
        num_observables: 1,
        detector_basis: Some(vec![Basis::Z; num_detectors]),
        detector_coords: Some(coords),
    };
    h.validate()?;
    Ok(h)
}

/// A stabilizer of the rotated layout, addressed by the plaquette's corner.
#[derive(Debug, Clone)]
struct Check {
    basis: Basis,
    cx: usize,
    cy: usize,
    data: Vec<(usize, usize)>,
}

/// Stabilizers of the distance-`d` rotated surface code in raster order.
///
/// Data qubits sit at `(x, y)` for `x, y < d`; the plaquette with corner
/// `(cx, cy)` touches data `{cx-1, cx} x {cy-1, cy}`. Bulk plaquettes
/// alternate by `(cx + cy)` parity (even = Z); top and bottom edges carry
/// X-type weight-two checks, left and right edges Z-type ones. Logical Z is
/// the data row `y = 0`.
fn rotated_checks(d: usize) -> Vec<Check> {
    let mut out = Vec::new();
    for cy in 0..=d {
        for cx in 0..=d {
            let bulk = (1..d).contains(&cx) && (1..d).contains(&cy);
            let even = (cx + cy) % 2 == 0;
            let basis = if bulk {
                if even {
                    Basis::Z
                } else {
                    Basis::X
                }
            } else if (cy == 0 || cy == d) && (1..d).contains(&cx) && !even {
                Basis::X
            } else if (cx == 0 || cx == d) && (1..d).contains(&cy) && even {
                Basis::Z
            } else {
                continue;
            };
            let mut data = Vec::with_capacity(4);
            for y in [cy.wrapping_sub(1), cy] {
                for x in [cx.wrapping_sub(1), cx] {
                    if x < d && y < d {
                        data.push((x, y));
                    }
                }
            }
            out.push(Check { basis, cx, cy, data });
        }
    }
    out
}

/// Rotated surface code, memory-Z, under data depolarization `p` per round
/// (X, Y, Z each with probability `p/3`) and measurement flips `2p/3`.
///
/// Z-type detectors exist in rounds `0..=r` (absolute in round 0, a perfect
/// data readout comparison at round `r`); X-type detectors in rounds
/// `1..r`. Y errors become two-component mechanisms whose Z-basis
/// component carries the logical observable.
pub fn gen_surface_phenom(spec: &CodeSpec) -> Result<ErrorHypergraph> {
    spec.validate()?;
    if spec.family != CodeFamily::RotatedSurface {
        return Err(Error::InvalidSpec("gen_surface_phenom needs the rotated_surface family".into()));
    }
    let d = spec.distance;
    let r = spec.rounds;
    let checks = rotated_checks(d);

    // detector_id[t][check] for checks that have a detector in round t.
    let has_detector = |c: &Check, t: usize| match c.basis {
        Basis::Z => t <= r,
        Basis::X => t >= 1 && t < r,
    };
    let mut detector_id = vec![vec![None; checks.len()]; r + 1];
    let mut coords = Vec::new();
    let mut basis = Vec::new();
    for (t, ids) in detector_id.iter_mut().enumerate() {
        for (k, c) in checks.iter().enumerate() {
            if has_detector(c, t) {
                ids[k] = Some(coords.len() as u32);
                coords.push(vec![c.cx as f64, c.cy as f64, t as f64]);
                basis.push(c.basis);
            }
        }
    }

    // Checks touching each data qubit, split by basis.
    let mut touching: Vec<[Vec<usize>; 2]> = vec![[Vec::new(), Vec::new()]; d * d];
    for (k, c) in checks.iter().enumerate() {
        for &(x, y) in &c.data {
            touching[y * d + x][c.basis.index()].push(k);
        }
    }
    let dets_at = |ks: &[usize], t: usize| -> Vec<u32> {
        let mut v: Vec<u32> = ks.iter().filter_map(|&k| detector_id[t][k]).collect();
        v.sort_unstable();
        v
    };

    let third = spec.p / 3.0;
    let meas = 2.0 * spec.p / 3.0;
    let mut mechanisms = Vec::new();
    for t in 0..r {
        for y in 0..d {
            for x in 0..d {
                let q = y * d + x;
                let obs = if y == 0 { ObsMask::single(0) } else { ObsMask::EMPTY };
                // X flips Z-type checks, Z flips X-type checks.
                let z_part = dets_at(&touching[q][Basis::Z.index()], t);
                let x_part = dets_at(&touching[q][Basis::X.index()], t);
                let z_comp = (!z_part.is_empty()).then(|| Component { detectors: z_part.clone(), observables: obs });
                let x_comp = (!x_part.is_empty()).then(|| Component { detectors: x_part.clone(), observables: ObsMask::EMPTY });

                if let Some(c) = &z_comp {
                    mechanisms.push(Mechanism::from_components(third, vec![c.clone()]));
                }
                match (&z_comp, &x_comp) {
                    (Some(zc), Some(xc)) => {
                        mechanisms.push(Mechanism::from_components(third, vec![zc.clone(), xc.clone()]))
                    }
                    (Some(c), None) | (None, Some(c)) => mechanisms.push(Mechanism::from_components(third, vec![c.clone()])),
                    (None, None) => {}
                }
                if let Some(c) = &x_comp {
                    mechanisms.push(Mechanism::from_components(third, vec![c.clone()]));
                }
            }
        }
        for k in 0..checks.len() {
            let mut detectors: Vec<u32> = [t, t + 1].iter().filter_map(|&s| if s <= r { detector_id[s][k] } else { None }).collect();
            detectors.sort_unstable();
            if detectors.is_empty() {
                continue;
            }
            mechanisms.push(Mechanism { probability: meas, detectors, observables: ObsMask::EMPTY, decomposition: None });
        }
    }

    let h = ErrorHypergraph {
        mechanisms,
        num_detectors: coords.len(),
        num_observables: 1,
        detector_basis: Some(basis),
        detector_coords: Some(coords),
    };
    h.validate()?;
    Ok(h)
}

/// Mechanism count of [`gen_surface_phenom`], computed from the
/// construction rule rather than by running it.
pub fn surface_mechanism_count(d: usize, r: usize) -> usize {
    let n_checks = d * d - 1;
    let data = d * d;
    // Round 0: Z errors are invisible (no X detectors yet) and dropped.
    let data_mechs = if r >= 2 { 2 * data + 3 * data * (r - 1) } else { 2 * data };
    let half = n_checks / 2;
    // Z checks: every round's flip reaches a detector. X checks: a flip at
    // round t reaches detectors t and t+1 within 1..r.
    let x_meas = if r >= 2 { half * r } else { 0 };
    data_mechs + half * r + x_meas
}

pub fn surface_detector_count(d: usize, r: usize) -> usize {
    let half = (d * d - 1) / 2;
    half * (r + 1) + half * r.saturating_sub(1)
}
