//! Maximum-likelihood decoding: exact enumeration for small models and an
//! approximate planar contraction of the Tanner-graph network as an MPS
//! evolution with bounded bond dimension.
//!
//! Rows of the grid are mechanisms and columns are detectors followed by
//! observables. Each mechanism is an MPS site holding the weight vector
//! `(1 - p, p)`. Detector columns are bond-2 parity MPOs projected onto the
//! observed event. A site is contracted out after the last detector column
//! it touches. Observable columns are kept open: every observable has a
//! carrier site at the left end of the chain, and a mechanism touching that
//! observable XORs its value into the carrier before it disappears, which is
//! the same as contracting the open parity column once all rows are known.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ErrorHypergraph, ObsMask, Shot};

/// Mechanism count above which exact enumeration is refused.
pub const EXACT_LIMIT: usize = 24;
/// Observable count above which the joint likelihood table is refused.
pub const MAX_OBSERVABLES: usize = 16;
/// Relative singular-value cutoff below which a singular value counts as zero.
pub const LOSSLESS_CUTOFF: f64 = 1e-14;
/// The state is unit norm before every column, so a column that leaves
/// less than this is an inconsistent syndrome up to rounding.
pub const VANISHING_NORM: f64 = 1e-13;
/// Raw bond width that forces a recompression in the middle of a column.
const RAW_BOND_LIMIT: usize = 256;

/// Unnormalized likelihoods of every observable assignment. Entry `l` of
/// `joint` (bit `j` = value of observable `j`) times `exp(log_scale)` is
/// proportional to `L(l | d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Likelihoods {
    pub log_scale: f64,
    pub joint: Vec<f64>,
}

impl Likelihoods {
    pub fn num_observables(&self) -> usize {
        self.joint.len().trailing_zeros() as usize
    }

    /// `(L(l_j = 0), L(l_j = 1))` on the common scale.
    pub fn marginal(&self, j: usize) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (l, &v) in self.joint.iter().enumerate() {
            out[(l >> j) & 1] += v;
        }
        out
    }

    pub fn pairs(&self) -> Vec<[f64; 2]> {
        (0..self.num_observables()).map(|j| self.marginal(j)).collect()
    }

    /// Joint distribution scaled to sum to one, or all zeros if every
    /// assignment is impossible.
    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.joint.iter().sum();
        if total > 0.0 {
            self.joint.iter().map(|v| v / total).collect()
        } else {
            vec![0.0; self.joint.len()]
        }
    }

    /// Per-observable argmax; `L0 = L1` decides 0.
    pub fn decision(&self) -> ObsMask {
        let mut mask = ObsMask::EMPTY;
        for j in 0..self.num_observables() {
            let [l0, l1] = self.marginal(j);
            if l1 > l0 {
                mask ^= ObsMask::single(j);
            }
        }
        mask
    }
}

fn check_observables(h: &ErrorHypergraph) -> Result<()> {
    if h.num_observables > MAX_OBSERVABLES {
        return Err(Error::InvalidModel(format!(
            "{} observables; maximum-likelihood decoding supports at most {MAX_OBSERVABLES}",
            h.num_observables
        )));
    }
    Ok(())
}

/// Sums `Pr(e)` over every mechanism configuration consistent with the
/// shot, split by observable flips.
pub fn likelihoods_exact(h: &ErrorHypergraph, shot: &Shot) -> Result<Likelihoods> {
    let m = h.num_mechanisms();
    if m > EXACT_LIMIT {
        return Err(Error::TooManyMechanisms { mechanisms: m, limit: EXACT_LIMIT });
    }
    check_observables(h)?;
    shot.check_against(h)?;
    let words = h.num_detectors.div_ceil(64).max(1);
    let mut masks = vec![0u64; m * words];
    let mut last = vec![None; h.num_detectors];
    for (i, mech) in h.mechanisms.iter().enumerate() {
        for &d in &mech.detectors {
            masks[i * words + d as usize / 64] ^= 1 << (d % 64);
            last[d as usize] = Some(i);
        }
    }
    let mut target = vec![0u64; words];
    for d in shot.detection_events.ones() {
        target[d / 64] |= 1 << (d % 64);
    }
    // Detectors settled once mechanism i has been decided.
    let mut settle = vec![vec![0u64; words]; m + 1];
    for (d, l) in last.iter().enumerate() {
        let at = l.map_or(0, |i| i + 1);
        settle[at][d / 64] |= 1 << (d % 64);
    }
    let mut joint = vec![0.0; 1 << h.num_observables];
    if settle[0].iter().zip(&target).any(|(s, t)| s & t != 0) {
        // An untouched detector fired.
        return Ok(Likelihoods { log_scale: 0.0, joint });
    }

    struct Walk<'a> {
        h: &'a ErrorHypergraph,
        words: usize,
        masks: &'a [u64],
        settle: &'a [Vec<u64>],
        target: &'a [u64],
        state: Vec<u64>,
        joint: &'a mut [f64],
    }
    impl Walk<'_> {
        fn go(&mut self, i: usize, prob: f64, obs: u64) {
            if i == self.h.mechanisms.len() {
                self.joint[obs as usize] += prob;
                return;
            }
            let mech = &self.h.mechanisms[i];
            let w = self.words;
            for on in [false, true] {
                if on {
                    for k in 0..w {
                        self.state[k] ^= self.masks[i * w + k];
                    }
                }
                let ok = (0..w).all(|k| (self.state[k] ^ self.target[k]) & self.settle[i + 1][k] == 0);
                if ok {
                    let (p, o) = if on {
                        (prob * mech.probability, obs ^ mech.observables.0)
                    } else {
                        (prob * (1.0 - mech.probability), obs)
                    };
                    self.go(i + 1, p, o);
                }
                if on {
                    for k in 0..w {
                        self.state[k] ^= self.masks[i * w + k];
                    }
                }
            }
        }
    }
    let mut walk = Walk { h, words, masks: &masks, settle: &settle, target: &target, state: vec![0; words], joint: &mut joint };
    walk.go(0, 1.0, 0);
    Ok(Likelihoods { log_scale: 0.0, joint })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Column {
    Detector(u32),
    Observable(u32),
}

/// Layout of the Tanner-graph network on a planar grid.
#[derive(Debug, Clone)]
pub struct TannerGrid {
    /// Detector columns in contraction order, then observable columns.
    pub columns: Vec<Column>,
    /// Mechanisms ordered by the first detector column they touch.
    pub row_order: Vec<usize>,
    /// Per mechanism, position of its first and last detector column.
    pub first_column: Vec<Option<usize>>,
    pub last_column: Vec<Option<usize>>,
    /// Per column, the mechanisms with a parity tensor in it, in row order.
    pub column_rows: Vec<Vec<usize>>,
    pub probabilities: Vec<f64>,
    pub observables: Vec<ObsMask>,
    pub num_detectors: usize,
    pub num_observables: usize,
}

impl TannerGrid {
    pub fn num_rows(&self) -> usize {
        self.row_order.len()
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn occupied(&self, mechanism: usize, column: usize) -> bool {
        self.column_rows[column].contains(&mechanism)
    }

    /// Position of each mechanism in `row_order`.
    pub fn row_of(&self) -> Vec<usize> {
        let mut row = vec![0; self.row_order.len()];
        for (r, &m) in self.row_order.iter().enumerate() {
            row[m] = r;
        }
        row
    }

    /// Crossing tensors needed at column `c`: rows alive across the column
    /// without a parity tensor in it.
    pub fn crossings(&self, c: usize) -> usize {
        let alive = (0..self.row_order.len())
            .filter(|&m| match (self.first_column[m], self.last_column[m]) {
                (Some(f), Some(l)) => f <= c && c <= l,
                _ => false,
            })
            .count();
        alive - self.column_rows[c].len().min(alive)
    }
}

/// Lays out the grid. Detector columns follow (round, raster) order from
/// the coordinates, reading the last coordinate as the round; without
/// coordinates they follow index order.
pub fn build_grid(h: &ErrorHypergraph) -> Result<TannerGrid> {
    h.validate()?;
    check_observables(h)?;
    let n = h.num_detectors;
    let mut det_order: Vec<usize> = (0..n).collect();
    match &h.detector_coords {
        Some(coords) if coords.len() == n && coords.iter().all(|c| !c.is_empty()) => {
            det_order.sort_by(|&a, &b| {
                let ka = coords[a].iter().rev();
                let kb = coords[b].iter().rev();
                ka.partial_cmp(kb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
            });
        }
        _ => {
            if n > 0 {
                log::warn!("model has no detector coordinates; grid columns follow detector index order");
            }
        }
    }
    let mut position = vec![0; n];
    for (c, &d) in det_order.iter().enumerate() {
        position[d] = c;
    }
    let m = h.num_mechanisms();
    let mut first_column = vec![None; m];
    let mut last_column = vec![None; m];
    for (i, mech) in h.mechanisms.iter().enumerate() {
        for &d in &mech.detectors {
            let c = position[d as usize];
            first_column[i] = Some(first_column[i].map_or(c, |f: usize| f.min(c)));
            last_column[i] = Some(last_column[i].map_or(c, |l: usize| l.max(c)));
        }
    }
    let mut row_order: Vec<usize> = (0..m).collect();
    row_order.sort_by_key(|&i| (first_column[i].map_or(0, |c| c + 1), i));
    let mut columns: Vec<Column> = det_order.iter().map(|&d| Column::Detector(d as u32)).collect();
    columns.extend((0..h.num_observables).map(|o| Column::Observable(o as u32)));
    let mut column_rows = vec![Vec::new(); columns.len()];
    for &i in &row_order {
        let mech = &h.mechanisms[i];
        for &d in &mech.detectors {
            column_rows[position[d as usize]].push(i);
        }
        for o in mech.observables.iter() {
            column_rows[n + o].push(i);
        }
    }
    Ok(TannerGrid {
        columns,
        row_order,
        first_column,
        last_column,
        column_rows,
        probabilities: h.mechanisms.iter().map(|m| m.probability).collect(),
        observables: h.mechanisms.iter().map(|m| m.observables).collect(),
        num_detectors: n,
        num_observables: h.num_observables,
    })
}

/// Truncation policy for the contraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    /// Maximum bond dimension; `None` keeps every non-negligible value.
    pub chi: Option<usize>,
    /// Singular values at or below `cutoff * largest` are dropped.
    pub cutoff: f64,
}

impl Truncation {
    pub fn bounded(chi: usize) -> Self {
        Truncation { chi: Some(chi), cutoff: LOSSLESS_CUTOFF }
    }

    pub fn unbounded() -> Self {
        Truncation { chi: None, cutoff: LOSSLESS_CUTOFF }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chi == Some(0) {
            return Err(Error::InvalidBondDimension);
        }
        if !(0.0..1.0).contains(&self.cutoff) {
            return Err(Error::Config(format!("singular-value cutoff {} must lie in [0, 1)", self.cutoff)));
        }
        Ok(())
    }
}

/// Rank-3 site tensor, element `(l, s, r)` at `(l * 2 + s) * dr + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub dl: usize,
    pub dr: usize,
    pub data: Vec<f64>,
}

impl Site {
    fn at(&self, l: usize, s: usize, r: usize) -> f64 {
        self.data[(l * 2 + s) * self.dr + r]
    }

    fn product(weights: [f64; 2]) -> Site {
        Site { dl: 1, dr: 1, data: weights.to_vec() }
    }

    fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Carrier,
    Mechanism(usize),
}

fn view(rows: usize, cols: usize, data: &[f64]) -> MatRef<'_, f64> {
    MatRef::from_row_major_slice(data, rows, cols)
}

fn product(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows() * b.ncols()];
    let dst = MatMut::from_row_major_slice_mut(&mut out, a.nrows(), b.ncols());
    matmul(dst, Accum::Replace, a, b, 1.0, Par::Seq);
    out
}

fn row_major(m: MatRef<'_, f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Matrix-product state in mixed canonical form around `center`.
#[derive(Debug, Clone)]
pub struct MpsState {
    pub sites: Vec<Site>,
    pub log_scale: f64,
    labels: Vec<Label>,
    center: usize,
    /// Value of the chain once every site has been contracted out.
    residual: f64,
    truncation: Truncation,
    zero: bool,
}

impl MpsState {
    fn new(num_carriers: usize, truncation: Truncation) -> Self {
        MpsState {
            sites: (0..num_carriers).map(|_| Site::product([1.0, 0.0])).collect(),
            labels: vec![Label::Carrier; num_carriers],
            log_scale: 0.0,
            center: 0,
            residual: 1.0,
            truncation,
            zero: false,
        }
    }

    pub fn bond_dimensions(&self) -> Vec<usize> {
        self.sites.iter().skip(1).map(|s| s.dl).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dimensions().into_iter().max().unwrap_or(1)
    }

    fn position(&self, mechanism: usize) -> usize {
        self.labels.iter().position(|&l| l == Label::Mechanism(mechanism)).expect("site is alive")
    }

    fn push(&mut self, mechanism: usize, p: f64) {
        let mut site = Site::product([1.0 - p, p]);
        let n = site.norm();
        site.data.iter_mut().for_each(|v| *v /= n);
        self.log_scale += n.ln();
        if self.sites.is_empty() {
            self.center = 0;
        }
        self.sites.push(site);
        self.labels.push(Label::Mechanism(mechanism));
    }

    /// Makes site `i` left-orthonormal and pushes the remainder into `i + 1`.
    fn shift_right(&mut self, i: usize) {
        let s = &self.sites[i];
        let next = &self.sites[i + 1];
        let qr = view(s.dl * 2, s.dr, &s.data).qr();
        let q = qr.compute_thin_Q();
        let k = q.ncols();
        let nb = product(qr.thin_R(), view(next.dl, 2 * next.dr, &next.data));
        let (dl, dr) = (s.dl, next.dr);
        self.sites[i] = Site { dl, dr: k, data: row_major(q.as_ref()) };
        self.sites[i + 1] = Site { dl: k, dr, data: nb };
    }

    /// Makes site `i` right-orthonormal and pushes the remainder into `i - 1`.
    fn shift_left(&mut self, i: usize) {
        let s = &self.sites[i];
        let prev = &self.sites[i - 1];
        let qr = view(s.dl, 2 * s.dr, &s.data).transpose().qr();
        let q = qr.compute_thin_Q();
        let k = q.ncols();
        let nb = product(view(prev.dl * 2, prev.dr, &prev.data), qr.thin_R().transpose());
        let (dl, dr) = (prev.dl, s.dr);
        self.sites[i] = Site { dl: k, dr, data: row_major(q.transpose()) };
        self.sites[i - 1] = Site { dl, dr: k, data: nb };
    }

    fn move_center(&mut self, to: usize) {
        while self.center < to {
            self.shift_right(self.center);
            self.center += 1;
        }
        while self.center > to {
            self.shift_left(self.center);
            self.center -= 1;
        }
    }

    /// Truncated SVD of the center `i`, leaving `i` right-orthonormal and
    /// the center at `i - 1`.
    fn split_left(&mut self, i: usize) -> Result<()> {
        let s = &self.sites[i];
        let (dl, dr) = (s.dl, s.dr);
        let svd = view(dl, 2 * dr, &s.data)
            .thin_svd()
            .map_err(|e| Error::Numerical(format!("singular value decomposition failed: {e:?}")))?;
        let (u, sv, v) = (svd.U(), svd.S().column_vector(), svd.V());
        // Singular values come sorted in non-increasing order.
        let top = sv[0];
        let mut keep = (0..sv.nrows()).take_while(|&k| sv[k] > self.truncation.cutoff * top && sv[k] > 0.0).count().max(1);
        if let Some(chi) = self.truncation.chi {
            keep = keep.min(chi);
        }
        let us = Mat::from_fn(u.nrows(), keep, |r, c| u[(r, c)] * sv[c]);
        let prev = &self.sites[i - 1];
        let nb = product(view(prev.dl * 2, prev.dr, &prev.data), us.as_ref());
        let pdl = prev.dl;
        self.sites[i] = Site { dl: keep, dr, data: row_major(v.subcols(0, keep).transpose()) };
        self.sites[i - 1] = Site { dl: pdl, dr: keep, data: nb };
        self.center = i - 1;
        Ok(())
    }

    /// Restores canonical form over `from..=to` after an MPO touched it,
    /// truncating every bond in the range. The center ends at `from`.
    fn recompress(&mut self, from: usize, to: usize) -> Result<()> {
        for i in from..to {
            self.shift_right(i);
        }
        self.center = to;
        for i in (from + 1..=to).rev() {
            self.split_left(i)?;
        }
        Ok(())
    }

    fn widest(&self, from: usize, to: usize) -> usize {
        self.sites[from..to].iter().map(|s| s.dr).max().unwrap_or(1).max(1)
    }

    fn normalize(&mut self) -> Result<()> {
        let site = &mut self.sites[self.center];
        let n = site.norm();
        if n < VANISHING_NORM {
            self.zero = true;
            return Ok(());
        }
        if !n.is_finite() {
            return Err(Error::Numerical(format!("site norm {n}")));
        }
        site.data.iter_mut().for_each(|v| *v /= n);
        self.log_scale += n.ln();
        Ok(())
    }

    /// Projects onto `XOR of the listed sites = target`, without
    /// recompressing.
    fn raw_parity(&mut self, positions: &[usize], target: bool) {
        let f = positions[0];
        let g = *positions.last().expect("non-empty");
        let t = target as usize;
        if f == g {
            let site = &mut self.sites[f];
            for l in 0..site.dl {
                for r in 0..site.dr {
                    site.data[(l * 2 + (1 - t)) * site.dr + r] = 0.0;
                }
            }
            return;
        }
        let mut member = vec![false; g - f + 1];
        for &p in positions {
            member[p - f] = true;
        }
        for i in f..=g {
            let a = &self.sites[i];
            let (dl, dr) = (a.dl, a.dr);
            let site = if i == f {
                // Bond value after this site = s.
                let mut d = vec![0.0; dl * 2 * dr * 2];
                for l in 0..dl {
                    for s in 0..2 {
                        for r in 0..dr {
                            d[(l * 2 + s) * (dr * 2) + r * 2 + s] = a.at(l, s, r);
                        }
                    }
                }
                Site { dl, dr: dr * 2, data: d }
            } else if i == g {
                let mut d = vec![0.0; dl * 2 * 2 * dr];
                for l in 0..dl {
                    for b in 0..2 {
                        let s = b ^ t;
                        for r in 0..dr {
                            d[((l * 2 + b) * 2 + s) * dr + r] = a.at(l, s, r);
                        }
                    }
                }
                Site { dl: dl * 2, dr, data: d }
            } else {
                let flips = member[i - f];
                let mut d = vec![0.0; dl * 2 * 2 * dr * 2];
                for l in 0..dl {
                    for b in 0..2 {
                        for s in 0..2 {
                            let out = if flips { b ^ s } else { b };
                            for r in 0..dr {
                                d[((l * 2 + b) * 2 + s) * (dr * 2) + r * 2 + out] = a.at(l, s, r);
                            }
                        }
                    }
                }
                Site { dl: dl * 2, dr: dr * 2, data: d }
            };
            self.sites[i] = site;
        }
    }

    /// XORs the physical value of site `m` into the carrier at `j < m`,
    /// without recompressing.
    fn raw_cnot(&mut self, j: usize, m: usize) {
        for i in j..=m {
            let a = &self.sites[i];
            let (dl, dr) = (a.dl, a.dr);
            let site = if i == j {
                let mut d = vec![0.0; dl * 2 * dr * 2];
                for l in 0..dl {
                    for s in 0..2 {
                        for r in 0..dr {
                            for b in 0..2 {
                                d[(l * 2 + s) * (dr * 2) + r * 2 + b] = a.at(l, s ^ b, r);
                            }
                        }
                    }
                }
                Site { dl, dr: dr * 2, data: d }
            } else if i == m {
                let mut d = vec![0.0; dl * 2 * 2 * dr];
                for l in 0..dl {
                    for s in 0..2 {
                        for r in 0..dr {
                            d[((l * 2 + s) * 2 + s) * dr + r] = a.at(l, s, r);
                        }
                    }
                }
                Site { dl: dl * 2, dr, data: d }
            } else {
                let mut d = vec![0.0; dl * 2 * 2 * dr * 2];
                for l in 0..dl {
                    for b in 0..2 {
                        for s in 0..2 {
                            for r in 0..dr {
                                d[((l * 2 + b) * 2 + s) * (dr * 2) + r * 2 + b] = a.at(l, s, r);
                            }
                        }
                    }
                }
                Site { dl: dl * 2, dr: dr * 2, data: d }
            };
            self.sites[i] = site;
        }
    }

    /// Sums site `i` over its physical index and absorbs it into the left
    /// or right neighbour.
    fn absorb(&mut self, i: usize, left: bool) {
        let a = self.sites.remove(i);
        self.labels.remove(i);
        let mut mat = vec![0.0; a.dl * a.dr];
        for l in 0..a.dl {
            for r in 0..a.dr {
                mat[l * a.dr + r] = a.at(l, 0, r) + a.at(l, 1, r);
            }
        }
        let mat = view(a.dl, a.dr, &mat);
        if left {
            let prev = &self.sites[i - 1];
            let nb = product(view(prev.dl * 2, prev.dr, &prev.data), mat);
            self.sites[i - 1] = Site { dl: prev.dl, dr: a.dr, data: nb };
        } else {
            let next = &self.sites[i];
            let nb = product(mat, view(next.dl, 2 * next.dr, &next.data));
            self.sites[i] = Site { dl: a.dl, dr: next.dr, data: nb };
        }
    }

    /// One grid step: the parity projection (if any), the CNOTs of every
    /// retiring site onto its carriers, and the sum over the retiring sites,
    /// followed by a single truncation sweep over the touched range.
    fn apply_column(&mut self, parity: Option<(&[usize], bool)>, retiring: &[(usize, ObsMask)]) -> Result<()> {
        let (mut lo, mut hi) = match parity {
            Some((p, _)) => (p[0], *p.last().expect("non-empty")),
            None => (usize::MAX, 0),
        };
        for &(m, obs) in retiring {
            lo = lo.min(m).min(obs.iter().next().unwrap_or(m));
            hi = hi.max(m);
        }
        if lo == usize::MAX {
            return Ok(());
        }
        self.move_center(lo);
        // Raw CNOTs double bonds; recompress early only when many retire at
        // once, since extra sweeps cost accuracy.
        let limit = (4 * self.widest(lo, hi)).max(RAW_BOND_LIMIT);
        if let Some((p, t)) = parity {
            self.raw_parity(p, t);
        }
        for &(m, obs) in retiring {
            for o in obs.iter() {
                self.raw_cnot(o, m);
            }
            if self.widest(lo, hi) > limit {
                self.recompress(lo, hi)?;
            }
        }
        let mut order: Vec<usize> = retiring.iter().map(|r| r.0).collect();
        order.sort_unstable_by(|a, b| b.cmp(a));
        for m in order {
            if m > lo {
                self.absorb(m, true);
                hi -= 1;
            } else if hi > lo || m + 1 < self.sites.len() {
                self.absorb(m, false);
                hi = hi.saturating_sub(1).max(lo);
            } else if m > 0 {
                self.absorb(m, true);
                lo -= 1;
                hi = lo;
            } else {
                let a = self.sites.remove(0);
                self.labels.remove(0);
                let total: f64 = a.data.iter().sum();
                if total.abs() < VANISHING_NORM {
                    self.zero = true;
                }
                self.residual *= total;
                self.center = 0;
                return Ok(());
            }
        }
        self.recompress(lo, hi)?;
        self.normalize()
    }

    /// Contracts the remaining carrier chain into a joint table.
    fn finish(&self, num_observables: usize) -> Vec<f64> {
        if self.sites.is_empty() {
            return vec![self.residual; 1 << num_observables];
        }
        // vec[(assignment, bond)]
        let mut cur: Vec<f64> = vec![1.0];
        let mut width = 1;
        for (j, site) in self.sites.iter().enumerate() {
            let mut next = vec![0.0; (1 << (j + 1)) * site.dr];
            for (l_assign, chunk) in cur.chunks(width).enumerate() {
                for (bl, &v) in chunk.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    for s in 0..2 {
                        let idx = l_assign | (s << j);
                        for r in 0..site.dr {
                            next[idx * site.dr + r] += v * site.at(bl, s, r);
                        }
                    }
                }
            }
            cur = next;
            width = site.dr;
        }
        cur.iter().map(|v| v * self.residual).collect()
    }
}

/// Evolves the MPS through every column of the grid and returns the joint
/// observable likelihoods (up to a common positive factor).
pub fn contract_mps(grid: &TannerGrid, shot: &Shot, truncation: Truncation) -> Result<Likelihoods> {
    contract_mps_traced(grid, shot, truncation).map(|(l, _)| l)
}

/// As [`contract_mps`], also reporting the largest bond dimension reached.
pub fn contract_mps_traced(grid: &TannerGrid, shot: &Shot, truncation: Truncation) -> Result<(Likelihoods, usize)> {
    truncation.validate()?;
    if shot.detection_events.len() != grid.num_detectors {
        return Err(Error::InvalidModel(format!(
            "shot has {} detectors, grid has {}",
            shot.detection_events.len(),
            grid.num_detectors
        )));
    }
    let k = grid.num_observables;
    let mut mps = MpsState::new(k, truncation);
    let mut max_bond = 1;
    let impossible = |log| Likelihoods { log_scale: log, joint: vec![0.0; 1 << k] };

    // Mechanisms that touch only observables.
    for &m in &grid.row_order {
        if grid.first_column[m].is_some() || grid.observables[m].is_empty() {
            continue;
        }
        mps.push(m, grid.probabilities[m]);
        let at = mps.position(m);
        mps.apply_column(None, &[(at, grid.observables[m])])?;
    }

    let mut rows = grid.row_order.iter().copied().filter(|&m| grid.first_column[m].is_some()).peekable();
    let mut retiring: Vec<Vec<usize>> = vec![Vec::new(); grid.num_detectors];
    for &m in &grid.row_order {
        if let Some(l) = grid.last_column[m] {
            retiring[l].push(m);
        }
    }
    let mut leaving = Vec::new();
    for c in 0..grid.num_detectors {
        while let Some(&m) = rows.peek() {
            if grid.first_column[m] != Some(c) {
                break;
            }
            mps.push(m, grid.probabilities[m]);
            rows.next();
        }
        let Column::Detector(d) = grid.columns[c] else { unreachable!() };
        let fired = shot.detection_events.contains(d as usize);
        let members = &grid.column_rows[c];
        if members.is_empty() {
            if fired {
                return Ok((impossible(f64::NEG_INFINITY), max_bond));
            }
            continue;
        }
        let mut positions: Vec<usize> = members.iter().map(|&m| mps.position(m)).collect();
        positions.sort_unstable();
        leaving.clear();
        leaving.extend(retiring[c].iter().map(|&m| (mps.position(m), grid.observables[m])));
        mps.apply_column(Some((&positions, fired)), &leaving)?;
        max_bond = max_bond.max(mps.max_bond());
        if mps.zero {
            return Ok((impossible(f64::NEG_INFINITY), max_bond));
        }
    }
    let joint = mps.finish(k);
    if joint.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite final contraction".into()));
    }
    Ok((Likelihoods { log_scale: mps.log_scale, joint }, max_bond))
}

/// Maximum-likelihood decoder with a prebuilt grid.
#[derive(Debug, Clone)]
pub struct MlDecoder {
    pub grid: TannerGrid,
    pub truncation: Truncation,
}

impl MlDecoder {
    pub fn new(h: &ErrorHypergraph, truncation: Truncation) -> Result<Self> {
        truncation.validate()?;
        Ok(MlDecoder { grid: build_grid(h)?, truncation })
    }

    pub fn likelihoods(&self, shot: &Shot) -> Result<Likelihoods> {
        contract_mps(&self.grid, shot, self.truncation)
    }

    pub fn decode(&self, shot: &Shot) -> Result<ObsMask> {
        Ok(self.likelihoods(shot)?.decision())
    }
}

/// Argmax decision per observable from a contraction with bond dimension
/// `chi` (`None` for lossless).
pub fn decode_ml(h: &ErrorHypergraph, shot: &Shot, chi: Option<usize>) -> Result<ObsMask> {
    let t = chi.map_or(Truncation::unbounded(), Truncation::bounded);
    MlDecoder::new(h, t)?.decode(shot)
}
