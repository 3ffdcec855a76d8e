//! Error hypergraphs and the line-oriented detector-error-model text format.
//!
//! A model is a list of independent error mechanisms. Each mechanism flips a
//! set of detectors and a set of logical observables with some probability,
//! and may carry a decomposition into edge-like components (at most two
//! detectors each) that the matching decoders consume.
//!
//! The text format accepted here is the flat subset of the common DEM syntax:
//!
//! ```text
//! # comment
//! detector(1, 2, 0) D0
//! error(0.01) D0 D1 ^ D2 L0
//! logical_observable L0
//! ```
//!
//! `repeat` and `shift_detectors` are rejected explicitly.

use std::fmt::{self, Write as _};
use std::ops::{BitXor, BitXorAssign};

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{DemError, Error, Result};

/// At most this many logical observables fit in an [`ObsMask`].
pub const MAX_OBSERVABLES: usize = 64;

/// Bit-mask over logical observable indices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObsMask(pub u64);

impl ObsMask {
    pub const EMPTY: ObsMask = ObsMask(0);

    pub fn single(index: usize) -> Self {
        ObsMask(1u64 << index)
    }

    pub fn contains(self, index: usize) -> bool {
        self.0 >> index & 1 == 1
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..MAX_OBSERVABLES).filter(move |&k| self.contains(k))
    }

    /// One character per observable, `0` or `1`.
    pub fn to_bit_string(self, num_observables: usize) -> String {
        (0..num_observables).map(|k| if self.contains(k) { '1' } else { '0' }).collect()
    }
}

impl BitXor for ObsMask {
    type Output = ObsMask;
    fn bitxor(self, rhs: ObsMask) -> ObsMask {
        ObsMask(self.0 ^ rhs.0)
    }
}

impl BitXorAssign for ObsMask {
    fn bitxor_assign(&mut self, rhs: ObsMask) {
        self.0 ^= rhs.0;
    }
}

/// Stabilizer type of a detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    X,
    Z,
}

impl Basis {
    pub fn index(self) -> usize {
        match self {
            Basis::X => 0,
            Basis::Z => 1,
        }
    }

    pub fn opposite(self) -> Basis {
        match self {
            Basis::X => Basis::Z,
            Basis::Z => Basis::X,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Basis::X => 'X',
            Basis::Z => 'Z',
        }
    }
}

/// Edge-like piece of a mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    /// One or two detectors, strictly increasing.
    pub detectors: Vec<u32>,
    pub observables: ObsMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub probability: f64,
    /// Strictly increasing detector indices.
    pub detectors: Vec<u32>,
    pub observables: ObsMask,
    pub decomposition: Option<Vec<Component>>,
}

impl Mechanism {
    /// Builds a mechanism from its components, XOR-combining their detector
    /// sets and observable masks. A single component yields no decomposition.
    pub fn from_components(probability: f64, components: Vec<Component>) -> Self {
        let mut detectors = Vec::new();
        let mut observables = ObsMask::EMPTY;
        for c in &components {
            detectors = symmetric_difference(&detectors, &c.detectors);
            observables ^= c.observables;
        }
        let decomposition = if components.len() > 1 { Some(components) } else { None };
        Mechanism { probability, detectors, observables, decomposition }
    }

    /// The edge-like components used for matching: the declared
    /// decomposition, or the mechanism itself when it has at most two
    /// detectors.
    pub fn components(&self) -> Option<Vec<Component>> {
        match &self.decomposition {
            Some(c) => Some(c.clone()),
            None if !self.detectors.is_empty() && self.detectors.len() <= 2 => Some(vec![Component {
                detectors: self.detectors.clone(),
                observables: self.observables,
            }]),
            None => None,
        }
    }

    fn check(&self, index: usize) -> Result<()> {
        let bad = |reason: &str| Err(Error::InvalidModel(format!("mechanism {index}: {reason}")));
        if !(self.probability > 0.0 && self.probability < 1.0) {
            return bad(&format!("probability {} outside (0, 1)", self.probability));
        }
        if self.detectors.is_empty() && self.observables.is_empty() {
            return bad("flips no detector and no observable");
        }
        if self.detectors.windows(2).any(|w| w[0] >= w[1]) {
            return bad("detectors not strictly increasing");
        }
        if let Some(parts) = &self.decomposition {
            let mut dets = Vec::new();
            let mut obs = ObsMask::EMPTY;
            for c in parts {
                if c.detectors.is_empty() || c.detectors.len() > 2 {
                    return bad("decomposition component must have one or two detectors");
                }
                if c.detectors.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("component detectors not strictly increasing");
                }
                dets = symmetric_difference(&dets, &c.detectors);
                obs ^= c.observables;
            }
            if dets != self.detectors || obs != self.observables {
                return bad("decomposition does not XOR to the mechanism");
            }
        }
        Ok(())
    }
}

/// The full error prior.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorHypergraph {
    pub mechanisms: Vec<Mechanism>,
    pub num_detectors: usize,
    pub num_observables: usize,
    pub detector_basis: Option<Vec<Basis>>,
    pub detector_coords: Option<Vec<Vec<f64>>>,
}

impl ErrorHypergraph {
    /// Checks every structural invariant of the model.
    pub fn validate(&self) -> Result<()> {
        if self.num_observables > MAX_OBSERVABLES {
            return Err(Error::InvalidModel(format!(
                "{} observables exceeds the supported {MAX_OBSERVABLES}",
                self.num_observables
            )));
        }
        if let Some(b) = &self.detector_basis {
            if b.len() != self.num_detectors {
                return Err(Error::InvalidModel("basis annotation length mismatch".into()));
            }
        }
        if let Some(c) = &self.detector_coords {
            if c.len() != self.num_detectors {
                return Err(Error::InvalidModel("coordinate annotation length mismatch".into()));
            }
        }
        let obs_limit = if self.num_observables == 64 { u64::MAX } else { (1u64 << self.num_observables) - 1 };
        for (i, m) in self.mechanisms.iter().enumerate() {
            m.check(i)?;
            if m.detectors.last().is_some_and(|&d| d as usize >= self.num_detectors) {
                return Err(Error::InvalidModel(format!("mechanism {i}: detector out of range")));
            }
            if m.observables.0 & !obs_limit != 0 {
                return Err(Error::InvalidModel(format!("mechanism {i}: observable out of range")));
            }
            if let (Some(basis), Some(parts)) = (&self.detector_basis, &m.decomposition) {
                for c in parts {
                    let b0 = basis[c.detectors[0] as usize];
                    if c.detectors.iter().any(|&d| basis[d as usize] != b0) {
                        return Err(Error::InvalidModel(format!(
                            "mechanism {i}: decomposition component mixes detector bases"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_mechanisms(&self) -> usize {
        self.mechanisms.len()
    }

    /// Detectors flipped by the listed mechanisms (XOR).
    pub fn triggered_detectors(&self, mechanisms: &[usize]) -> Result<FixedBitSet> {
        let mut out = FixedBitSet::with_capacity(self.num_detectors);
        for &m in mechanisms {
            let mech = self
                .mechanisms
                .get(m)
                .ok_or(Error::IndexOutOfRange { index: m, len: self.mechanisms.len() })?;
            for &d in &mech.detectors {
                out.toggle(d as usize);
            }
        }
        Ok(out)
    }

    /// Observables flipped by the listed mechanisms (XOR).
    pub fn predicted_observables(&self, mechanisms: &[usize]) -> Result<ObsMask> {
        mechanisms.iter().try_fold(ObsMask::EMPTY, |acc, &m| {
            self.mechanisms
                .get(m)
                .map(|mech| acc ^ mech.observables)
                .ok_or(Error::IndexOutOfRange { index: m, len: self.mechanisms.len() })
        })
    }

    pub fn basis_of(&self, detector: usize) -> Option<Basis> {
        self.detector_basis.as_ref().map(|b| b[detector])
    }

    /// Assigns detector bases so that each decomposition component is
    /// monochromatic and the two components of a two-part mechanism get
    /// opposite bases. Unconstrained detectors default to `Z`.
    pub fn infer_basis(&self) -> Result<Vec<Basis>> {
        // Union-find with parity relative to the root.
        let n = self.num_detectors;
        let mut parent: Vec<usize> = (0..n).collect();
        let mut parity = vec![0u8; n];
        fn find(parent: &mut [usize], parity: &mut [u8], x: usize) -> (usize, u8) {
            let mut path = Vec::new();
            let mut cur = x;
            while parent[cur] != cur {
                path.push(cur);
                cur = parent[cur];
            }
            let root = cur;
            // Compress from the top down so each node's parity is relative to root.
            let mut acc = 0u8;
            for &node in path.iter().rev() {
                acc ^= parity[node];
                parity[node] = acc;
                parent[node] = root;
            }
            (root, parity[x] * (x != root) as u8)
        }
        let mut unite = |a: usize, b: usize, rel: u8, mech: usize| -> Result<()> {
            let (ra, pa) = find(&mut parent, &mut parity, a);
            let (rb, pb) = find(&mut parent, &mut parity, b);
            if ra == rb {
                if pa ^ pb != rel {
                    return Err(Error::Projection {
                        mechanism: mech,
                        reason: "decomposition admits no consistent two-colouring of detectors".into(),
                    });
                }
                return Ok(());
            }
            parent[ra] = rb;
            parity[ra] = pa ^ pb ^ rel;
            Ok(())
        };
        for (i, m) in self.mechanisms.iter().enumerate() {
            let Some(parts) = m.components() else { continue };
            for c in &parts {
                if let [a, b] = c.detectors[..] {
                    unite(a as usize, b as usize, 0, i)?;
                }
            }
            if let [c0, c1] = &parts[..] {
                unite(c0.detectors[0] as usize, c1.detectors[0] as usize, 1, i)?;
            }
        }
        // Roots are Z; a component whose members are all constrained odd
        // relative to the root is therefore X.
        Ok((0..n)
            .map(|d| {
                let (_, p) = find(&mut parent, &mut parity, d);
                if p == 0 {
                    Basis::Z
                } else {
                    Basis::X
                }
            })
            .collect())
    }
}

/// One decoding instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shot {
    pub detection_events: FixedBitSet,
    pub true_observables: Option<ObsMask>,
}

impl Shot {
    pub fn new(detection_events: FixedBitSet, true_observables: Option<ObsMask>) -> Self {
        Shot { detection_events, true_observables }
    }

    pub fn from_events(num_detectors: usize, events: &[u32]) -> Self {
        let mut bits = FixedBitSet::with_capacity(num_detectors);
        for &e in events {
            bits.insert(e as usize);
        }
        Shot { detection_events: bits, true_observables: None }
    }

    pub fn events(&self) -> Vec<u32> {
        self.detection_events.ones().map(|d| d as u32).collect()
    }

    pub fn check_against(&self, h: &ErrorHypergraph) -> Result<()> {
        if self.detection_events.len() != h.num_detectors {
            return Err(Error::InvalidModel(format!(
                "shot has {} detector bits, model has {}",
                self.detection_events.len(),
                h.num_detectors
            )));
        }
        Ok(())
    }
}

pub(crate) fn symmetric_difference(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                out.push(*x);
                i += 1;
            }
            (Some(_), Some(y)) => {
                out.push(*y);
                j += 1;
            }
            (Some(x), None) => {
                out.push(*x);
                i += 1;
            }
            (None, Some(y)) => {
                out.push(*y);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

fn xor_insert(set: &mut Vec<u32>, value: u32) {
    match set.binary_search(&value) {
        Ok(pos) => {
            set.remove(pos);
        }
        Err(pos) => set.insert(pos, value),
    }
}

fn parse_index(token: &str, prefix: char, line: usize) -> Result<u32, DemError> {
    token
        .strip_prefix(prefix)
        .and_then(|rest| rest.parse::<u32>().ok())
        .ok_or_else(|| DemError::Syntax { line, message: format!("expected {prefix}<index>, found `{token}`") })
}

/// Splits `name(args) rest` into its parts.
fn split_instruction(text: &str, line: usize) -> Result<(&str, Option<&str>, &str), DemError> {
    let name_end = text.find(|c: char| c == '(' || c.is_whitespace()).unwrap_or(text.len());
    let name = &text[..name_end];
    let rest = &text[name_end..];
    if let Some(after) = rest.strip_prefix('(') {
        let close = after
            .find(')')
            .ok_or_else(|| DemError::Syntax { line, message: "unclosed argument list".into() })?;
        Ok((name, Some(&after[..close]), after[close + 1..].trim()))
    } else {
        Ok((name, None, rest.trim()))
    }
}

/// Parses the detector-error-model text format.
pub fn parse_dem(text: &str) -> Result<ErrorHypergraph> {
    let mut mechanisms = Vec::new();
    let mut max_detector: Option<u32> = None;
    let mut max_observable: Option<u32> = None;
    let mut coords: Vec<(u32, Vec<f64>)> = Vec::new();
    let see_det = |d: u32, max: &mut Option<u32>| *max = Some(max.map_or(d, |m| m.max(d)));

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (name, args, rest) = split_instruction(body, line)?;
        match name {
            "error" => {
                let args = args.ok_or_else(|| DemError::Syntax { line, message: "error needs a probability".into() })?;
                let p: f64 = args
                    .trim()
                    .parse()
                    .map_err(|_| DemError::Syntax { line, message: format!("bad probability `{args}`") })?;
                if !(p > 0.0 && p < 1.0) {
                    return Err(DemError::Probability { line, value: p }.into());
                }
                let mut components = vec![Component { detectors: Vec::new(), observables: ObsMask::EMPTY }];
                for token in rest.split_whitespace() {
                    if token == "^" {
                        components.push(Component { detectors: Vec::new(), observables: ObsMask::EMPTY });
                        continue;
                    }
                    let current = components.last_mut().expect("at least one component");
                    if token.starts_with('D') {
                        let d = parse_index(token, 'D', line)?;
                        see_det(d, &mut max_detector);
                        xor_insert(&mut current.detectors, d);
                    } else if token.starts_with('L') {
                        let l = parse_index(token, 'L', line)?;
                        if l as usize >= MAX_OBSERVABLES {
                            return Err(DemError::Syntax { line, message: format!("observable L{l} beyond L63") }.into());
                        }
                        max_observable = Some(max_observable.map_or(l, |m| m.max(l)));
                        current.observables ^= ObsMask::single(l as usize);
                    } else {
                        return Err(DemError::Syntax { line, message: format!("unexpected target `{token}`") }.into());
                    }
                }
                let mech = if components.len() > 1 {
                    for c in &components {
                        if c.detectors.len() > 2 {
                            return Err(DemError::Decomposition { line, count: c.detectors.len() }.into());
                        }
                        if c.detectors.is_empty() {
                            return Err(DemError::Syntax { line, message: "empty decomposition component".into() }.into());
                        }
                    }
                    Mechanism::from_components(p, components)
                } else {
                    let c = components.pop().expect("one component");
                    Mechanism { probability: p, detectors: c.detectors, observables: c.observables, decomposition: None }
                };
                if mech.detectors.is_empty() && mech.observables.is_empty() {
                    return Err(DemError::Syntax { line, message: "error flips nothing".into() }.into());
                }
                mechanisms.push(mech);
            }
            "detector" => {
                let values: Vec<f64> = match args {
                    Some(a) if !a.trim().is_empty() => a
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| DemError::Syntax { line, message: format!("bad coordinates `{a}`") })?,
                    _ => Vec::new(),
                };
                for token in rest.split_whitespace() {
                    let d = parse_index(token, 'D', line)?;
                    see_det(d, &mut max_detector);
                    if !values.is_empty() {
                        coords.push((d, values.clone()));
                    }
                }
            }
            "logical_observable" => {
                for token in rest.split_whitespace() {
                    let l = parse_index(token, 'L', line)?;
                    if l as usize >= MAX_OBSERVABLES {
                        return Err(DemError::Syntax { line, message: format!("observable L{l} beyond L63") }.into());
                    }
                    max_observable = Some(max_observable.map_or(l, |m| m.max(l)));
                }
            }
            "repeat" | "shift_detectors" | "detector_separator" => {
                return Err(DemError::Unsupported { line, construct: name.to_string() }.into());
            }
            "}" | "{" => return Err(DemError::Unsupported { line, construct: "repeat".into() }.into()),
            other => {
                return Err(DemError::Syntax { line, message: format!("unknown instruction `{other}`") }.into());
            }
        }
    }

    let num_detectors = max_detector.map_or(0, |d| d as usize + 1);
    let num_observables = max_observable.map_or(0, |l| l as usize + 1);
    let detector_coords = if coords.is_empty() {
        None
    } else {
        let mut table = vec![Vec::new(); num_detectors];
        for (d, c) in coords {
            table[d as usize] = c;
        }
        Some(table)
    };
    let h = ErrorHypergraph { mechanisms, num_detectors, num_observables, detector_basis: None, detector_coords };
    h.validate()?;
    Ok(h)
}

fn write_targets(out: &mut String, detectors: &[u32], observables: ObsMask) {
    for d in detectors {
        let _ = write!(out, " D{d}");
    }
    for l in observables.iter() {
        let _ = write!(out, " L{l}");
    }
}

/// Renders a model in the text format accepted by [`parse_dem`].
///
/// Probabilities use the shortest decimal form that parses back to the same
/// double, so the round trip is exact.
pub fn serialize_dem(h: &ErrorHypergraph) -> String {
    let mut out = String::new();
    let mut declared = vec![false; h.num_detectors];
    if let Some(coords) = &h.detector_coords {
        for (d, c) in coords.iter().enumerate() {
            if c.is_empty() {
                continue;
            }
            let list: Vec<String> = c.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "detector({}) D{d}", list.join(", "));
            declared[d] = true;
        }
    }
    let mut max_det_ref: Option<u32> = None;
    let mut obs_seen = ObsMask::EMPTY;
    for m in &h.mechanisms {
        out.push_str(&format!("error({})", m.probability));
        match &m.decomposition {
            Some(parts) => {
                for (k, c) in parts.iter().enumerate() {
                    if k > 0 {
                        out.push_str(" ^");
                    }
                    write_targets(&mut out, &c.detectors, c.observables);
                }
            }
            None => write_targets(&mut out, &m.detectors, m.observables),
        }
        out.push('\n');
        if let Some(&d) = m.detectors.last() {
            max_det_ref = Some(max_det_ref.map_or(d, |x| x.max(d)));
        }
        obs_seen = ObsMask(obs_seen.0 | m.observables.0);
    }
    let implied = (0..h.num_detectors).rev().find(|&d| declared[d]).map(|d| d + 1).unwrap_or(0);
    let implied = implied.max(max_det_ref.map_or(0, |d| d as usize + 1));
    if h.num_detectors > implied {
        let _ = writeln!(out, "detector D{}", h.num_detectors - 1);
    }
    if h.num_observables > 0 && !obs_seen.contains(h.num_observables - 1) {
        let _ = writeln!(out, "logical_observable L{}", h.num_observables - 1);
    }
    out
}

/// Sidecar format for detector bases: one `<detector> <X|Z>` pair per line.
pub fn serialize_basis(basis: &[Basis]) -> String {
    let mut out = String::from("# detector basis annotation\n");
    for (d, b) in basis.iter().enumerate() {
        let _ = writeln!(out, "{d} {}", b.letter());
    }
    out
}

pub fn parse_basis(text: &str, num_detectors: usize) -> Result<Vec<Basis>> {
    let mut basis: Vec<Option<Basis>> = vec![None; num_detectors];
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut parts = body.split_whitespace();
        let (Some(d), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(DemError::Syntax { line, message: "expected `<detector> <X|Z>`".into() }.into());
        };
        let d: usize = d
            .trim_start_matches('D')
            .parse()
            .map_err(|_| DemError::Syntax { line, message: format!("bad detector `{d}`") })?;
        let b = match b {
            "X" | "x" => Basis::X,
            "Z" | "z" => Basis::Z,
            other => return Err(DemError::Syntax { line, message: format!("bad basis `{other}`") }.into()),
        };
        let slot = basis
            .get_mut(d)
            .ok_or(Error::IndexOutOfRange { index: d, len: num_detectors })?;
        *slot = Some(b);
    }
    basis
        .into_iter()
        .enumerate()
        .map(|(d, b)| b.ok_or_else(|| Error::InvalidModel(format!("basis sidecar is missing detector {d}"))))
        .collect()
}

impl fmt::Display for ErrorHypergraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_dem(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_edge() {
        let h = parse_dem("error(0.1) D0 D1").unwrap();
        assert_eq!(h.mechanisms.len(), 1);
        let m = &h.mechanisms[0];
        assert_eq!(m.probability, 0.1);
        assert_eq!(m.detectors, vec![0, 1]);
        assert!(m.observables.is_empty());
        assert!(m.decomposition.is_none());
        assert_eq!(h.num_detectors, 2);
        assert_eq!(h.num_observables, 0);
    }

    #[test]
    fn parses_decomposition() {
        let h = parse_dem("error(0.25) D0 D1 ^ D2 L0").unwrap();
        let m = &h.mechanisms[0];
        assert_eq!(m.detectors, vec![0, 1, 2]);
        assert_eq!(m.observables, ObsMask::single(0));
        let parts = m.decomposition.as_ref().unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0], Component { detectors: vec![0, 1], observables: ObsMask::EMPTY });
        assert_eq!(parts[1], Component { detectors: vec![2], observables: ObsMask::single(0) });
        assert_eq!(h.num_observables, 1);
    }

    #[test]
    fn rejects_bad_probability() {
        let err = parse_dem("# header\nerror(1.5) D0").unwrap_err();
        assert_eq!(err, Error::Dem(DemError::Probability { line: 2, value: 1.5 }));
        assert!(parse_dem("error(0) D0").is_err());
        assert!(parse_dem("error(abc) D0").is_err());
    }

    #[test]
    fn rejects_unsupported_blocks() {
        let err = parse_dem("error(0.1) D0\nrepeat 3 {\n  error(0.1) D0\n}").unwrap_err();
        assert!(matches!(err, Error::Dem(DemError::Unsupported { line: 2, .. })));
        let err = parse_dem("shift_detectors 4").unwrap_err();
        assert!(matches!(err, Error::Dem(DemError::Unsupported { line: 1, .. })));
    }

    #[test]
    fn rejects_wide_component() {
        let err = parse_dem("error(0.1) D0 D1 D2 ^ D3").unwrap_err();
        assert_eq!(err, Error::Dem(DemError::Decomposition { line: 1, count: 3 }));
    }

    #[test]
    fn duplicates_are_kept() {
        let h = parse_dem("error(0.1) D0\nerror(0.1) D0\n").unwrap();
        assert_eq!(h.mechanisms.len(), 2);
    }

    #[test]
    fn coordinates_and_declarations() {
        let text = "detector(1, 2, 0) D0\ndetector(3.5, 0, 1) D4\nerror(0.2) D0 L0\nlogical_observable L2\n";
        let h = parse_dem(text).unwrap();
        assert_eq!(h.num_detectors, 5);
        assert_eq!(h.num_observables, 3);
        let coords = h.detector_coords.as_ref().unwrap();
        assert_eq!(coords[0], vec![1.0, 2.0, 0.0]);
        assert_eq!(coords[4], vec![3.5, 0.0, 1.0]);
        assert!(coords[2].is_empty());
    }

    #[test]
    fn serialize_empty_and_round_trip() {
        let empty = ErrorHypergraph::default();
        assert_eq!(serialize_dem(&empty), "");
        let declared = ErrorHypergraph { num_detectors: 3, num_observables: 1, ..Default::default() };
        let text = serialize_dem(&declared);
        assert_eq!(parse_dem(&text).unwrap(), declared);

        let h = parse_dem("error(0.25) D0 D1 ^ D2 L0").unwrap();
        assert_eq!(parse_dem(&serialize_dem(&h)).unwrap(), h);
        let odd = parse_dem("error(0.123456789012345678) D3\ndetector D7\n").unwrap();
        assert_eq!(parse_dem(&serialize_dem(&odd)).unwrap(), odd);
    }

    #[test]
    fn observable_and_detector_homomorphisms() {
        let h = parse_dem("error(0.1) D0 D1 L0\nerror(0.1) D1 D2 L0\nerror(0.1) D2").unwrap();
        assert_eq!(h.predicted_observables(&[]).unwrap(), ObsMask::EMPTY);
        assert_eq!(h.predicted_observables(&[0]).unwrap(), ObsMask::single(0));
        assert_eq!(h.predicted_observables(&[0, 1]).unwrap(), ObsMask::EMPTY);
        assert_eq!(h.triggered_detectors(&[]).unwrap().count_ones(..), 0);
        let one: Vec<usize> = h.triggered_detectors(&[0]).unwrap().ones().collect();
        assert_eq!(one, vec![0, 1]);
        let two: Vec<usize> = h.triggered_detectors(&[0, 1]).unwrap().ones().collect();
        assert_eq!(two, vec![0, 2]);
        assert!(matches!(h.predicted_observables(&[9]), Err(Error::IndexOutOfRange { index: 9, .. })));
        assert!(h.triggered_detectors(&[3]).is_err());
    }

    #[test]
    fn basis_sidecar_round_trip_and_inference() {
        let h = parse_dem("error(0.1) D0 D1 ^ D2 D3\nerror(0.1) D1 D4\nerror(0.1) D2").unwrap();
        let inferred = h.infer_basis().unwrap();
        assert_eq!(inferred[0], inferred[1]);
        assert_eq!(inferred[1], inferred[4]);
        assert_eq!(inferred[2], inferred[3]);
        assert_ne!(inferred[0], inferred[2]);
        let text = serialize_basis(&inferred);
        assert_eq!(parse_basis(&text, 5).unwrap(), inferred);
        assert!(parse_basis("0 Z\n", 2).is_err());
        let contradictory = parse_dem("error(0.1) D0 ^ D1\nerror(0.1) D0 D1").unwrap();
        assert!(contradictory.infer_basis().is_err());
    }
}
