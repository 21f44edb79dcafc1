//! Bit-packed Pauli-frame Monte Carlo sampling and detector-error-model
//! extraction.
//!
//! # Frame semantics
//!
//! A Pauli frame tracks, per shot, the deviation of the noisy run from the
//! noiseless reference as an X/Z bit pair per qubit plus one bit per
//! measurement record. Gates conjugate the frame (CX: x_t ^= x_c,
//! z_c ^= z_t; H swaps x and z), resets clear both planes, and measurements
//! read one plane while collapsing the other:
//!
//! - `MZ`: record ^= x_q, then z_q <- 0 (a Z on a fresh Z eigenstate is a
//!   phase) while x_q survives (it still flips later Z measurements);
//! - `MX`: record ^= z_q, then x_q <- 0 while z_q survives.
//!
//! Record flips (`MERR`) invert the record bit only. Deterministic
//! `X_ERROR(1)`/`Z_ERROR(1)` injections are applied to every shot — they are
//! program content, so sampled observables agree bit-for-bit with the
//! stabilizer reference simulator, while detectors stay independent of them.
//!
//! Shots advance 64 per machine word in blocks of [`BLOCK_SHOTS`]; each block
//! draws from its own counter-derived RNG stream, so results are identical
//! for any worker arrangement. Channels hit a sparse subset of shots and are
//! applied by geometric skip-sampling, making the cost per channel
//! proportional to the number of affected shots, not the block size.
//!
//! # Detector error model
//!
//! [`extract_dem`] computes each elementary channel outcome's exact symptom
//! (the set of detectors and observables it flips) with one reverse
//! sensitivity pass, then merges outcomes with identical symptoms via
//! p' = p1(1-p2) + p2(1-p1). Depolarizing channels decompose into their
//! elementary outcomes: DEP1 contributes X, Y, Z at p/3 each; DEP2 each of
//! the 15 non-identity pairs at p/15. Composite symptoms decompose into
//! graphlike components along the X/Z comparison-family split, refined by
//! the channel's per-qubit, per-axis parts where a single side is still too
//! wide. Components XOR to the full symptom (they may share detectors).
//! Probabilities are treated as independent mechanisms to first order.
//!
//! # Text format
//!
//! ```text
//! dem 1 <num_detectors> <num_observables>
//! detector(<r>,<c>,<t>) D<id>
//! error(<p>) D<id> ... L<id> ...
//! error(<p>) D<id> ... ^ D<id> ...        # decomposed: groups XOR together
//! ```
//!
//! Lines starting with `#` are comments. Mechanism lines are sorted by
//! symptom; the format round-trips exactly.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::collections::{HashMap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{Circuit, Instruction};
use crate::{Error, Result};

/// Shots per sampling block; each block owns one RNG stream.
pub const BLOCK_SHOTS: usize = 1024;
const LANE_WORDS: usize = BLOCK_SHOTS / 64;

#[inline]
fn lane_word(shot: usize) -> usize {
    shot >> 6
}

#[inline]
fn lane_bit(shot: usize) -> u64 {
    1u64 << (shot & 63)
}

/// Bit-packed Pauli frames for one block of shots: one X and one Z bit plane
/// per qubit and one plane per measurement record, each [`BLOCK_SHOTS`] wide.
pub struct PauliFrame {
    pub num_qubits: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    records: Vec<u64>,
}

impl PauliFrame {
    pub fn new(num_qubits: usize) -> Self {
        PauliFrame {
            num_qubits,
            x: vec![0; num_qubits * LANE_WORDS],
            z: vec![0; num_qubits * LANE_WORDS],
            records: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.x.fill(0);
        self.z.fill(0);
        self.records.clear();
    }

    /// Number of records produced so far in the current block.
    pub fn num_records(&self) -> usize {
        self.records.len() / LANE_WORDS
    }

    /// Record deviation bit for one shot of the current block.
    pub fn record_bit(&self, record: usize, shot: usize) -> bool {
        let w = &self.records[record * LANE_WORDS..(record + 1) * LANE_WORDS];
        w[lane_word(shot)] & lane_bit(shot) != 0
    }

    #[inline]
    fn xq(&mut self, q: usize) -> &mut [u64] {
        &mut self.x[q * LANE_WORDS..(q + 1) * LANE_WORDS]
    }

    #[inline]
    fn zq(&mut self, q: usize) -> &mut [u64] {
        &mut self.z[q * LANE_WORDS..(q + 1) * LANE_WORDS]
    }
}

/// Dense sampled detector and observable bits, shot-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub shots: usize,
    pub num_detectors: usize,
    pub num_observables: usize,
    det_row_words: usize,
    obs_row_words: usize,
    det_rows: Vec<u64>,
    obs_rows: Vec<u64>,
}

impl SampleBatch {
    pub fn zeroed(shots: usize, num_detectors: usize, num_observables: usize) -> Self {
        let det_row_words = num_detectors.div_ceil(64).max(1);
        let obs_row_words = num_observables.div_ceil(64).max(1);
        SampleBatch {
            shots,
            num_detectors,
            num_observables,
            det_row_words,
            obs_row_words,
            det_rows: vec![0; shots * det_row_words],
            obs_rows: vec![0; shots * obs_row_words],
        }
    }

    pub fn detector(&self, shot: usize, det: usize) -> bool {
        self.det_rows[shot * self.det_row_words + (det >> 6)] & (1 << (det & 63)) != 0
    }

    pub fn observable(&self, shot: usize, obs: usize) -> bool {
        self.obs_rows[shot * self.obs_row_words + (obs >> 6)] & (1 << (obs & 63)) != 0
    }

    fn flip_detector(&mut self, shot: usize, det: usize) {
        self.det_rows[shot * self.det_row_words + (det >> 6)] ^= 1 << (det & 63);
    }

    fn flip_observable(&mut self, shot: usize, obs: usize) {
        self.obs_rows[shot * self.obs_row_words + (obs >> 6)] ^= 1 << (obs & 63);
    }

    /// Detector bits of one shot as packed words.
    pub fn detector_row(&self, shot: usize) -> &[u64] {
        &self.det_rows[shot * self.det_row_words..(shot + 1) * self.det_row_words]
    }

    pub fn observable_row(&self, shot: usize) -> &[u64] {
        &self.obs_rows[shot * self.obs_row_words..(shot + 1) * self.obs_row_words]
    }

    /// Indices of fired detectors in one shot.
    pub fn fired_detectors(&self, shot: usize) -> Vec<u32> {
        let mut out = Vec::new();
        for (w, &word) in self.detector_row(shot).iter().enumerate() {
            let mut word = word;
            while word != 0 {
                let b = word.trailing_zeros();
                out.push((w * 64) as u32 + b);
                word &= word - 1;
            }
        }
        out
    }

    /// Per-detector set counts across all shots.
    pub fn detector_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_detectors];
        for shot in 0..self.shots {
            for (w, &word) in self.detector_row(shot).iter().enumerate() {
                let mut word = word;
                while word != 0 {
                    let b = word.trailing_zeros() as usize;
                    counts[w * 64 + b] += 1;
                    word &= word - 1;
                }
            }
        }
        counts
    }

    /// Per-observable set counts across all shots.
    pub fn observable_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_observables];
        for shot in 0..self.shots {
            for obs in 0..self.num_observables {
                if self.observable(shot, obs) {
                    counts[obs] += 1;
                }
            }
        }
        counts
    }

    fn write_plane<W: Write>(
        &self,
        w: &mut W,
        bits: usize,
        words_per_row: usize,
        rows: &[u64],
    ) -> std::io::Result<()> {
        let bytes_per_row = bits.div_ceil(8);
        for shot in 0..self.shots {
            let row = &rows[shot * words_per_row..(shot + 1) * words_per_row];
            let mut bytes = Vec::with_capacity(words_per_row * 8);
            for word in row {
                bytes.extend_from_slice(&word.to_le_bytes());
            }
            w.write_all(&bytes[..bytes_per_row])?;
        }
        Ok(())
    }

    /// Dense binary export: shots-major, each row `ceil(bits/8)` bytes,
    /// bit i of the row stored at byte i/8, bit position i%8.
    pub fn write_detectors_binary<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        self.write_plane(w, self.num_detectors, self.det_row_words, &self.det_rows)
    }

    pub fn write_observables_binary<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        self.write_plane(w, self.num_observables, self.obs_row_words, &self.obs_rows)
    }

    /// CSV export: header `shot,d0..,o0..`, one row of 0/1 per shot.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "shot")?;
        for d in 0..self.num_detectors {
            write!(w, ",d{d}")?;
        }
        for o in 0..self.num_observables {
            write!(w, ",o{o}")?;
        }
        writeln!(w)?;
        for shot in 0..self.shots {
            write!(w, "{shot}")?;
            for d in 0..self.num_detectors {
                write!(w, ",{}", self.detector(shot, d) as u8)?;
            }
            for o in 0..self.num_observables {
                write!(w, ",{}", self.observable(shot, o) as u8)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// RNG stream for one shot block: derived from (seed, block index) so any
/// assignment of blocks to workers reproduces identical bits.
pub(crate) fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

#[inline]
fn geometric_gap(rng: &mut ChaCha8Rng, ln1mp: f64, shots: usize) -> usize {
    let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let g = u.ln() / ln1mp;
    if g >= shots as f64 {
        shots // any value >= shots terminates the scan
    } else {
        g as usize
    }
}

/// Visit each shot index in `0..shots` independently selected with
/// probability `p`, by geometric gap skipping (cost ~ p * shots). The RNG is
/// handed back to the callback so outcome draws stay in the same stream.
#[inline]
fn for_each_hit(
    rng: &mut ChaCha8Rng,
    p: f64,
    shots: usize,
    mut f: impl FnMut(&mut ChaCha8Rng, usize),
) {
    if p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        for s in 0..shots {
            f(rng, s);
        }
        return;
    }
    let ln1mp = (1.0 - p).ln();
    let mut s = geometric_gap(rng, ln1mp, shots);
    while s < shots {
        f(rng, s);
        s += 1 + geometric_gap(rng, ln1mp, shots);
    }
}

/// Encoded symptom target: detectors first, then observables.
#[derive(Clone, Copy)]
enum SymptomId {
    Det(u32),
    Obs(u32),
}

fn build_rec_map(circuit: &Circuit) -> Result<(Vec<Vec<SymptomId>>, usize, usize)> {
    let resolved = circuit.resolve()?;
    let num_records = circuit.num_measurements() as usize;
    let mut map: Vec<Vec<SymptomId>> = vec![Vec::new(); num_records];
    for (i, det) in resolved.detectors.iter().enumerate() {
        for &r in &det.records {
            map[r as usize].push(SymptomId::Det(i as u32));
        }
    }
    for (j, recs) in resolved.observables.iter().enumerate() {
        for &r in recs {
            map[r as usize].push(SymptomId::Obs(j as u32));
        }
    }
    Ok((map, resolved.detectors.len(), resolved.observables.len()))
}

/// Monte Carlo sample `shots` shots of `circuit` (noiseless or noised).
/// Reproducible given (circuit, seed); block-parallel decompositions of the
/// same seed yield identical bits.
pub fn sample(circuit: &Circuit, shots: usize, seed: u64) -> Result<SampleBatch> {
    if shots == 0 {
        return Err(Error::Invalid("shots must be at least 1".into()));
    }
    let (rec_map, n_det, n_obs) = build_rec_map(circuit)?;
    let mut batch = SampleBatch::zeroed(shots, n_det, n_obs);
    let mut frame = PauliFrame::new(circuit.num_qubits as usize);
    let mut det_lanes = vec![0u64; n_det * LANE_WORDS];
    let mut obs_lanes = vec![0u64; n_obs * LANE_WORDS];
    let blocks = shots.div_ceil(BLOCK_SHOTS);
    for block in 0..blocks {
        let base = block * BLOCK_SHOTS;
        let in_block = (shots - base).min(BLOCK_SHOTS);
        let mut rng = block_rng(seed, block as u64);
        det_lanes.fill(0);
        obs_lanes.fill(0);
        run_block(circuit, &rec_map, &mut frame, &mut rng, &mut det_lanes, &mut obs_lanes);
        scatter(&det_lanes, LANE_WORDS, in_block, |shot, id| {
            batch.flip_detector(base + shot, id);
        });
        scatter(&obs_lanes, LANE_WORDS, in_block, |shot, id| {
            batch.flip_observable(base + shot, id);
        });
    }
    Ok(batch)
}

fn scatter(lanes: &[u64], lane_words: usize, in_block: usize, mut set: impl FnMut(usize, usize)) {
    for (id, lane) in lanes.chunks_exact(lane_words).enumerate() {
        for (w, &word) in lane.iter().enumerate() {
            let mut word = word;
            while word != 0 {
                let b = word.trailing_zeros() as usize;
                let shot = w * 64 + b;
                if shot < in_block {
                    set(shot, id);
                }
                word &= word - 1;
            }
        }
    }
}

fn run_block(
    circuit: &Circuit,
    rec_map: &[Vec<SymptomId>],
    frame: &mut PauliFrame,
    rng: &mut ChaCha8Rng,
    det_lanes: &mut [u64],
    obs_lanes: &mut [u64],
) {
    // Always scan the full block window, even for a partial tail block:
    // the RNG draw sequence then depends only on (seed, block), so shot s
    // of sample(N) equals shot s of sample(M) whenever both contain it.
    let in_block = BLOCK_SHOTS;
    frame.reset();
    let mut rec_idx = 0usize;
    let mut rec_lane = [0u64; LANE_WORDS];
    for inst in &circuit.instructions {
        match inst {
            Instruction::Rz(ts) | Instruction::Rx(ts) => {
                for &q in ts {
                    frame.xq(q as usize).fill(0);
                    frame.zq(q as usize).fill(0);
                }
            }
            Instruction::H(ts) => {
                for &q in ts {
                    let q = q as usize;
                    for w in 0..LANE_WORDS {
                        let xi = frame.x[q * LANE_WORDS + w];
                        frame.x[q * LANE_WORDS + w] = frame.z[q * LANE_WORDS + w];
                        frame.z[q * LANE_WORDS + w] = xi;
                    }
                }
            }
            Instruction::Cx(pairs) => {
                for &(c, t) in pairs {
                    let (c, t) = (c as usize, t as usize);
                    for w in 0..LANE_WORDS {
                        frame.x[t * LANE_WORDS + w] ^= frame.x[c * LANE_WORDS + w];
                        frame.z[c * LANE_WORDS + w] ^= frame.z[t * LANE_WORDS + w];
                    }
                }
            }
            Instruction::Mz { flip, targets } => {
                for &q in targets {
                    let q = q as usize;
                    rec_lane.copy_from_slice(&frame.x[q * LANE_WORDS..(q + 1) * LANE_WORDS]);
                    for_each_hit(rng, *flip, in_block, |_, s| {
                        rec_lane[lane_word(s)] ^= lane_bit(s);
                    });
                    frame.zq(q).fill(0);
                    commit_record(frame, rec_map, rec_idx, &rec_lane, det_lanes, obs_lanes);
                    rec_idx += 1;
                }
            }
            Instruction::Mx { flip, targets } => {
                for &q in targets {
                    let q = q as usize;
                    rec_lane.copy_from_slice(&frame.z[q * LANE_WORDS..(q + 1) * LANE_WORDS]);
                    for_each_hit(rng, *flip, in_block, |_, s| {
                        rec_lane[lane_word(s)] ^= lane_bit(s);
                    });
                    frame.xq(q).fill(0);
                    commit_record(frame, rec_map, rec_idx, &rec_lane, det_lanes, obs_lanes);
                    rec_idx += 1;
                }
            }
            Instruction::XError { p, targets } => {
                for &q in targets {
                    let q = q as usize;
                    if *p >= 1.0 {
                        frame.xq(q).iter_mut().for_each(|w| *w = !*w);
                    } else {
                        for_each_hit(rng, *p, in_block, |_, s| {
                            frame.x[q * LANE_WORDS + lane_word(s)] ^= lane_bit(s);
                        });
                    }
                }
            }
            Instruction::ZError { p, targets } => {
                for &q in targets {
                    let q = q as usize;
                    if *p >= 1.0 {
                        frame.zq(q).iter_mut().for_each(|w| *w = !*w);
                    } else {
                        for_each_hit(rng, *p, in_block, |_, s| {
                            frame.z[q * LANE_WORDS + lane_word(s)] ^= lane_bit(s);
                        });
                    }
                }
            }
            Instruction::Dep1 { p, targets } => {
                for &q in targets {
                    let q = q as usize;
                    for_each_hit(rng, *p, in_block, |rng, s| {
                        // 0 = X, 1 = Y, 2 = Z
                        let outcome = rng.gen_range(0..3u32);
                        if outcome != 2 {
                            frame.x[q * LANE_WORDS + lane_word(s)] ^= lane_bit(s);
                        }
                        if outcome != 0 {
                            frame.z[q * LANE_WORDS + lane_word(s)] ^= lane_bit(s);
                        }
                    });
                }
            }
            Instruction::Dep2 { p, pairs } => {
                for &(a, b) in pairs {
                    let (a, b) = (a as usize, b as usize);
                    for_each_hit(rng, *p, in_block, |rng, s| {
                        // 1..16 encodes (pa, pb) in base 4, skipping (I, I);
                        // per qubit 0 = I, 1 = X, 2 = Y, 3 = Z.
                        let outcome = rng.gen_range(1..16u32);
                        let (pa, pb) = (outcome >> 2, outcome & 3);
                        if pa == 1 || pa == 2 {
                            frame.x[a * LANE_WORDS + lane_word(s)] ^= lane_bit(s);
                        }
                        if pa == 2 || pa == 3 {
                            frame.z[a * LANE_WORDS + lane_word(s)] ^= lane_bit(s);
                        }
                        if pb == 1 || pb == 2 {
                            frame.x[b * LANE_WORDS + lane_word(s)] ^= lane_bit(s);
                        }
                        if pb == 2 || pb == 3 {
                            frame.z[b * LANE_WORDS + lane_word(s)] ^= lane_bit(s);
                        }
                    });
                }
            }
            Instruction::Tick
            | Instruction::Detector { .. }
            | Instruction::ObservableInclude { .. } => {}
        }
    }
}

fn commit_record(
    frame: &mut PauliFrame,
    rec_map: &[Vec<SymptomId>],
    rec_idx: usize,
    rec_lane: &[u64; LANE_WORDS],
    det_lanes: &mut [u64],
    obs_lanes: &mut [u64],
) {
    frame.records.extend_from_slice(rec_lane);
    for &target in &rec_map[rec_idx] {
        let lanes = match target {
            SymptomId::Det(i) => {
                &mut det_lanes[i as usize * LANE_WORDS..(i as usize + 1) * LANE_WORDS]
            }
            SymptomId::Obs(j) => {
                &mut obs_lanes[j as usize * LANE_WORDS..(j as usize + 1) * LANE_WORDS]
            }
        };
        for (lw, &rw) in lanes.iter_mut().zip(rec_lane) {
            *lw ^= rw;
        }
    }
}

// ---------------------------------------------------------------------------
// Detector error model
// ---------------------------------------------------------------------------

/// One decomposition component: a per-qubit, per-axis part of a mechanism.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub dets: Vec<u32>,
    pub obs: Vec<u32>,
}

/// One independent error mechanism: probability plus flipped detector and
/// observable sets. `components` is empty when the symptom is already a
/// single graphlike piece (at most two detectors, one comparison family);
/// otherwise the components XOR to the full symptom and each flips at most
/// two detectors of a single family.
#[derive(Clone, Debug, PartialEq)]
pub struct Mechanism {
    pub p: f64,
    pub dets: Vec<u32>,
    pub obs: Vec<u32>,
    pub components: Vec<Component>,
}

/// Merged first-order error model of a noised circuit.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorErrorModel {
    pub num_detectors: usize,
    pub num_observables: usize,
    pub mechanisms: Vec<Mechanism>,
    pub detector_coords: Vec<(i32, i32, i32)>,
}

type Sym = BTreeSet<u32>;

fn toggle_into(dst: &mut Sym, src: &Sym) {
    for &v in src {
        if !dst.remove(&v) {
            dst.insert(v);
        }
    }
}

/// Split an encoded symptom (detectors then observables) into id lists.
fn split_sym(sym: &Sym, n_det: u32) -> (Vec<u32>, Vec<u32>) {
    let mut dets = Vec::new();
    let mut obs = Vec::new();
    for &v in sym {
        if v < n_det {
            dets.push(v);
        } else {
            obs.push(v - n_det);
        }
    }
    (dets, obs)
}

struct DemBuilder {
    n_det: u32,
    acc: BTreeMap<(Vec<u32>, Vec<u32>), (f64, Vec<Component>)>,
}

impl DemBuilder {
    fn emit(&mut self, p: f64, parts: &[&Sym]) {
        if p <= 0.0 || p >= 1.0 {
            // Outcome probability 0 never fires; probability 1 is a
            // deterministic injection, part of the reference circuit.
            return;
        }
        let mut full = Sym::new();
        for part in parts {
            toggle_into(&mut full, part);
        }
        if full.is_empty() {
            return;
        }
        let key = split_sym(&full, self.n_det);
        // Keep the channel's per-qubit, per-axis parts as a decomposition
        // hint; only of use when the symptom has more than one part.
        let nonempty = parts.iter().filter(|s| !s.is_empty()).count();
        let hints: Vec<Component> = if nonempty > 1 {
            parts
                .iter()
                .filter(|s| !s.is_empty())
                .map(|s| {
                    let (dets, obs) = split_sym(s, self.n_det);
                    Component { dets, obs }
                })
                .collect()
        } else {
            Vec::new()
        };
        let entry = self.acc.entry(key).or_insert((0.0, Vec::new()));
        if entry.1.is_empty() && !hints.is_empty() {
            entry.1 = hints;
        }
        let q = entry.0;
        entry.0 = q * (1.0 - p) + p * (1.0 - q);
    }
}

/// Extract the merged detector error model of a (noised) circuit by a single
/// reverse sensitivity pass.
pub fn extract_dem(circuit: &Circuit) -> Result<DetectorErrorModel> {
    let resolved = circuit.resolve()?;
    let n_det = resolved.detectors.len();
    let n_obs = resolved.observables.len();
    let num_records = circuit.num_measurements() as usize;
    let mut rec_sens: Vec<Sym> = vec![Sym::new(); num_records];
    for (i, det) in resolved.detectors.iter().enumerate() {
        for &r in &det.records {
            rec_sens[r as usize].insert(i as u32);
        }
    }
    for (j, recs) in resolved.observables.iter().enumerate() {
        for &r in recs {
            rec_sens[r as usize].insert((n_det + j) as u32);
        }
    }
    // First record index of each measurement instruction.
    let mut starts: Vec<usize> = Vec::with_capacity(circuit.instructions.len());
    let mut count = 0usize;
    for inst in &circuit.instructions {
        starts.push(count);
        if let Instruction::Mz { targets, .. } | Instruction::Mx { targets, .. } = inst {
            count += targets.len();
        }
    }

    let nq = circuit.num_qubits as usize;
    let mut sens_x: Vec<Sym> = vec![Sym::new(); nq];
    let mut sens_z: Vec<Sym> = vec![Sym::new(); nq];
    let mut builder = DemBuilder { n_det: n_det as u32, acc: BTreeMap::new() };

    for (pos, inst) in circuit.instructions.iter().enumerate().rev() {
        match inst {
            Instruction::Rz(ts) | Instruction::Rx(ts) => {
                for &q in ts {
                    sens_x[q as usize].clear();
                    sens_z[q as usize].clear();
                }
            }
            Instruction::H(ts) => {
                for &q in ts {
                    let q = q as usize;
                    let x = std::mem::take(&mut sens_x[q]);
                    sens_x[q] = std::mem::replace(&mut sens_z[q], x);
                }
            }
            Instruction::Cx(pairs) => {
                for &(c, t) in pairs {
                    let (c, t) = (c as usize, t as usize);
                    // An X on the control propagates to the target, so the
                    // control's X sensitivity gains the target's; dually a Z
                    // on the target propagates to the control.
                    let xt = sens_x[t].clone();
                    toggle_into(&mut sens_x[c], &xt);
                    let zc = sens_z[c].clone();
                    toggle_into(&mut sens_z[t], &zc);
                }
            }
            Instruction::Mz { flip, targets } => {
                for (i, &q) in targets.iter().enumerate() {
                    let q = q as usize;
                    let r = starts[pos] + i;
                    builder.emit(*flip, &[&rec_sens[r]]);
                    let rs = rec_sens[r].clone();
                    toggle_into(&mut sens_x[q], &rs);
                    sens_z[q].clear();
                }
            }
            Instruction::Mx { flip, targets } => {
                for (i, &q) in targets.iter().enumerate() {
                    let q = q as usize;
                    let r = starts[pos] + i;
                    builder.emit(*flip, &[&rec_sens[r]]);
                    let rs = rec_sens[r].clone();
                    toggle_into(&mut sens_z[q], &rs);
                    sens_x[q].clear();
                }
            }
            Instruction::XError { p, targets } => {
                for &q in targets {
                    builder.emit(*p, &[&sens_x[q as usize]]);
                }
            }
            Instruction::ZError { p, targets } => {
                for &q in targets {
                    builder.emit(*p, &[&sens_z[q as usize]]);
                }
            }
            Instruction::Dep1 { p, targets } => {
                let pe = p / 3.0;
                for &q in targets {
                    let q = q as usize;
                    builder.emit(pe, &[&sens_x[q]]);
                    builder.emit(pe, &[&sens_x[q], &sens_z[q]]);
                    builder.emit(pe, &[&sens_z[q]]);
                }
            }
            Instruction::Dep2 { p, pairs } => {
                let pe = p / 15.0;
                for &(a, b) in pairs {
                    let (a, b) = (a as usize, b as usize);
                    for pa in 0..4u32 {
                        for pb in 0..4u32 {
                            if pa == 0 && pb == 0 {
                                continue;
                            }
                            let mut parts: Vec<&Sym> = Vec::with_capacity(4);
                            if pa == 1 || pa == 2 {
                                parts.push(&sens_x[a]);
                            }
                            if pa == 2 || pa == 3 {
                                parts.push(&sens_z[a]);
                            }
                            if pb == 1 || pb == 2 {
                                parts.push(&sens_x[b]);
                            }
                            if pb == 2 || pb == 3 {
                                parts.push(&sens_z[b]);
                            }
                            builder.emit(pe, &parts);
                        }
                    }
                }
            }
            Instruction::Tick
            | Instruction::Detector { .. }
            | Instruction::ObservableInclude { .. } => {}
        }
    }

    // Comparison family of each detector and observable: X-type when any of
    // its records comes from an X-basis measurement. Z comparisons only ever
    // combine Z-basis records, while X comparisons always contain at least
    // one X-basis record (unreset-relay byproducts add Z records to them,
    // never the other way around).
    let mut rec_is_x: Vec<bool> = Vec::with_capacity(num_records);
    for inst in &circuit.instructions {
        match inst {
            Instruction::Mz { targets, .. } => {
                rec_is_x.extend(std::iter::repeat_n(false, targets.len()));
            }
            Instruction::Mx { targets, .. } => {
                rec_is_x.extend(std::iter::repeat_n(true, targets.len()));
            }
            _ => {}
        }
    }
    let det_is_x: Vec<bool> = resolved
        .detectors
        .iter()
        .map(|d| d.records.iter().any(|&r| rec_is_x[r as usize]))
        .collect();
    let obs_is_x: Vec<bool> = resolved
        .observables
        .iter()
        .map(|recs| recs.iter().any(|&r| rec_is_x[r as usize]))
        .collect();
    // Edge vocabulary per side: every graphlike side of a full symptom plus
    // every graphlike per-axis part (a real single-Pauli effect even when no
    // standalone mechanism shares it).
    let mut vocab: [Vec<(Vec<u32>, Vec<u32>)>; 2] = Default::default();
    for ((dets, obs), (_, hints)) in &builder.acc {
        let keys = std::iter::once((dets.as_slice(), obs.as_slice()))
            .chain(hints.iter().map(|h| (h.dets.as_slice(), h.obs.as_slice())));
        for (kd, ko) in keys {
            for (i, side) in side_split(kd, ko, &det_is_x, &obs_is_x).into_iter().enumerate() {
                if (1..=2).contains(&side.0.len()) {
                    vocab[i].push(side);
                }
            }
        }
    }
    let covers = [
        CoverIndex::build(vocab[0].iter().map(|(d, o)| (d, o))),
        CoverIndex::build(vocab[1].iter().map(|(d, o)| (d, o))),
    ];
    let mechanisms = builder
        .acc
        .iter()
        .map(|((dets, obs), (p, hints))| {
            let components = decompose(dets, obs, hints, &det_is_x, &obs_is_x, &covers);
            Mechanism { p: *p, dets: dets.clone(), obs: obs.clone(), components }
        })
        .collect();
    Ok(DetectorErrorModel {
        num_detectors: n_det,
        num_observables: n_obs,
        mechanisms,
        detector_coords: resolved.detectors.iter().map(|d| d.coord).collect(),
    })
}

/// Pseudo-node id for the virtual boundary when walking graphlike edges.
const JOIN_BOUNDARY: u32 = u32::MAX;

/// Index of the graphlike (at most two detectors) symptoms present in a
/// model, used to rewrite composite symptoms as XORs of real edges. Entries
/// with one detector are edges to the virtual boundary. An edge instance is
/// an `(entry, variant)` pair: entries group parallel edges that flip the
/// same detectors but different observables.
struct CoverIndex {
    entries: Vec<(Vec<u32>, Vec<Vec<u32>>)>,
    by_det: HashMap<u32, Vec<usize>>,
    boundary_entries: Vec<usize>,
    /// Spanning forest: node -> (parent, connecting entry, depth).
    tree: HashMap<u32, (u32, usize, u32)>,
    /// Echelon basis of the cycle space's observable-mask image, indexed by
    /// leading mask bit: mask plus the edge instances forming the cycle.
    /// XOR-ing a cycle into an edge selection changes observables only.
    cycle_basis: Vec<Option<(u64, BTreeSet<(usize, usize)>)>>,
}

impl CoverIndex {
    fn build<'a>(keys: impl Iterator<Item = (&'a Vec<u32>, &'a Vec<u32>)>) -> Self {
        let mut entries: Vec<(Vec<u32>, Vec<Vec<u32>>)> = Vec::new();
        let mut by_dets: BTreeMap<Vec<u32>, Vec<Vec<u32>>> = BTreeMap::new();
        for (dets, obs) in keys {
            if (1..=2).contains(&dets.len()) {
                let variants = by_dets.entry(dets.clone()).or_default();
                if !variants.contains(obs) {
                    variants.push(obs.clone());
                }
            }
        }
        let mut by_det: HashMap<u32, Vec<usize>> = HashMap::new();
        let mut boundary_entries = Vec::new();
        for (dets, obs_variants) in by_dets {
            let id = entries.len();
            for &d in &dets {
                by_det.entry(d).or_default().push(id);
            }
            if dets.len() == 1 {
                boundary_entries.push(id);
            }
            entries.push((dets, obs_variants));
        }
        let mut index = CoverIndex {
            entries,
            by_det,
            boundary_entries,
            tree: HashMap::new(),
            cycle_basis: vec![None; 64],
        };
        index.build_cycle_space();
        index
    }

    /// Grow a spanning forest and collect the observable-mask image of the
    /// cycle space: one fundamental cycle per non-tree entry (the entry plus
    /// its tree path) and one two-edge cycle per extra observable variant.
    fn build_cycle_space(&mut self) {
        let mut nodes: Vec<u32> = self.by_det.keys().copied().collect();
        nodes.sort_unstable();
        if !self.boundary_entries.is_empty() {
            nodes.push(JOIN_BOUNDARY);
        }
        let mut tree_entries: std::collections::HashSet<usize> = Default::default();
        for &root in &nodes {
            if self.tree.contains_key(&root) {
                continue;
            }
            self.tree.insert(root, (root, usize::MAX, 0));
            let mut queue = VecDeque::from([root]);
            while let Some(u) = queue.pop_front() {
                let du = self.tree[&u].2;
                for e in self.incident(u).to_vec() {
                    let v = self.far_end(e, u);
                    if !self.tree.contains_key(&v) {
                        self.tree.insert(v, (u, e, du + 1));
                        tree_entries.insert(e);
                        queue.push_back(v);
                    }
                }
            }
        }
        for e in 0..self.entries.len() {
            if !tree_entries.contains(&e) {
                let (u, v) = match self.entries[e].0.as_slice() {
                    [a] => (*a, JOIN_BOUNDARY),
                    [a, b] => (*a, *b),
                    _ => unreachable!("index holds only one- and two-detector entries"),
                };
                let mut inst = self.tree_path_instances(u, v);
                toggle_pair(&mut inst, (e, 0));
                self.insert_cycle(inst);
            }
            for v in 1..self.entries[e].1.len() {
                self.insert_cycle([(e, 0), (e, v)].into_iter().collect());
            }
        }
    }

    /// Edge instances along the spanning-forest path between two nodes of
    /// the same component.
    fn tree_path_instances(&self, mut u: u32, mut v: u32) -> BTreeSet<(usize, usize)> {
        let mut inst = BTreeSet::new();
        let (mut du, mut dv) = (self.tree[&u].2, self.tree[&v].2);
        while du > dv {
            let (p, e, _) = self.tree[&u];
            toggle_pair(&mut inst, (e, 0));
            u = p;
            du -= 1;
        }
        while dv > du {
            let (p, e, _) = self.tree[&v];
            toggle_pair(&mut inst, (e, 0));
            v = p;
            dv -= 1;
        }
        while u != v {
            let (pu, eu, _) = self.tree[&u];
            toggle_pair(&mut inst, (eu, 0));
            u = pu;
            let (pv, ev, _) = self.tree[&v];
            toggle_pair(&mut inst, (ev, 0));
            v = pv;
        }
        inst
    }

    /// Row-reduce one cycle into the observable-mask echelon basis.
    fn insert_cycle(&mut self, mut inst: BTreeSet<(usize, usize)>) {
        let mut mask = 0u64;
        for &(e, v) in &inst {
            match obs_mask(&self.entries[e].1[v]) {
                Some(m) => mask ^= m,
                None => return,
            }
        }
        while mask != 0 {
            let lead = (63 - mask.leading_zeros()) as usize;
            match &self.cycle_basis[lead] {
                Some((bm, binst)) => {
                    mask ^= bm;
                    for i in binst.clone() {
                        toggle_pair(&mut inst, i);
                    }
                }
                None => {
                    self.cycle_basis[lead] = Some((mask, inst));
                    return;
                }
            }
        }
    }

    /// The node on the far side of `entry` as seen from `from`.
    fn far_end(&self, entry: usize, from: u32) -> u32 {
        match self.entries[entry].0.as_slice() {
            [a] => {
                if *a == from {
                    JOIN_BOUNDARY
                } else {
                    *a
                }
            }
            [a, b] => {
                if *a == from {
                    *b
                } else {
                    *a
                }
            }
            _ => unreachable!("index holds only one- and two-detector entries"),
        }
    }

    fn incident(&self, node: u32) -> &[usize] {
        if node == JOIN_BOUNDARY {
            &self.boundary_entries
        } else {
            self.by_det.get(&node).map(Vec::as_slice).unwrap_or(&[])
        }
    }

    /// Breadth-first walk from `src` over indexed edges to the nearest node
    /// in `targets` or to the boundary (which may also be crossed: two
    /// chains ending on the boundary pair their far endpoints). Returns the
    /// node reached and the edge path to it.
    fn shortest_path(&self, src: u32, targets: &Sym) -> Option<(u32, Vec<usize>)> {
        let mut prev: HashMap<u32, (u32, usize)> = HashMap::new();
        prev.insert(src, (src, usize::MAX));
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            if u != src && (u == JOIN_BOUNDARY || targets.contains(&u)) {
                let mut path = Vec::new();
                let mut cur = u;
                while cur != src {
                    let (p, e) = prev[&cur];
                    path.push(e);
                    cur = p;
                }
                return Some((u, path));
            }
            for &e in self.incident(u) {
                let v = self.far_end(e, u);
                if let std::collections::hash_map::Entry::Vacant(slot) = prev.entry(v) {
                    slot.insert((u, e));
                    queue.push_back(v);
                }
            }
        }
        None
    }

    /// Express (dets, obs) as a XOR of indexed edges: pair the target
    /// detectors off along breadth-first edge paths (chains may stop at the
    /// boundary, which absorbs any odd remainder), cancel edges used twice,
    /// then XOR in basis cycles until the observable masks match the target.
    /// Any edge selection with the right detector boundary differs from a
    /// valid one by a cycle, so this search is complete: `None` means the
    /// symptom is not a XOR of graphlike entries at all. Path interiors
    /// cancel in the XOR, so pieces may touch detectors outside the target
    /// set.
    fn join(&self, dets: &Sym, obs: &Sym) -> Option<Vec<Component>> {
        let mut unpaired = dets.clone();
        let mut odd: BTreeSet<(usize, usize)> = BTreeSet::new();
        while let Some(&s0) = unpaired.iter().next() {
            unpaired.remove(&s0);
            let (hit, path) = self.shortest_path(s0, &unpaired)?;
            if hit != JOIN_BOUNDARY {
                unpaired.remove(&hit);
            }
            for e in path {
                toggle_pair(&mut odd, (e, 0));
            }
        }
        let mut need = obs_mask(obs)?;
        for &(e, v) in &odd {
            need ^= obs_mask(&self.entries[e].1[v])?;
        }
        while need != 0 {
            let lead = (63 - need.leading_zeros()) as usize;
            let (bm, binst) = self.cycle_basis[lead].as_ref()?;
            need ^= bm;
            for &i in binst {
                toggle_pair(&mut odd, i);
            }
        }
        let pieces: Vec<Component> = odd
            .iter()
            .map(|&(e, v)| Component {
                dets: self.entries[e].0.clone(),
                obs: self.entries[e].1[v].clone(),
            })
            .collect();
        // The pairing and cycle fix satisfy the XOR identity by
        // construction; verify it anyway so a bookkeeping slip can never
        // leak a wrong decomposition into the model.
        let (mut xd, mut xo) = (Sym::new(), Sym::new());
        for piece in &pieces {
            toggle_ids(&mut xd, &piece.dets);
            toggle_ids(&mut xo, &piece.obs);
        }
        (xd == *dets && xo == *obs).then_some(pieces)
    }
}

fn toggle_pair(set: &mut BTreeSet<(usize, usize)>, item: (usize, usize)) {
    if !set.remove(&item) {
        set.insert(item);
    }
}

fn toggle_ids(dst: &mut Sym, ids: &[u32]) {
    for &v in ids {
        if !dst.remove(&v) {
            dst.insert(v);
        }
    }
}

/// Pack sorted observable indices into a bit mask (None above 64 ids).
fn obs_mask<'a>(obs: impl IntoIterator<Item = &'a u32>) -> Option<u64> {
    let mut mask = 0u64;
    for &o in obs {
        if o >= 64 {
            return None;
        }
        mask |= 1u64 << o;
    }
    Some(mask)
}

/// Split detector and observable ids into the X-comparison side (index 0)
/// and the Z-comparison side (index 1) of a symptom.
fn side_split(
    dets: &[u32],
    obs: &[u32],
    det_is_x: &[bool],
    obs_is_x: &[bool],
) -> [(Vec<u32>, Vec<u32>); 2] {
    let mut sides: [(Vec<u32>, Vec<u32>); 2] = Default::default();
    for &d in dets {
        sides[usize::from(!det_is_x[d as usize])].0.push(d);
    }
    for &o in obs {
        sides[usize::from(!obs_is_x[o as usize])].1.push(o);
    }
    sides
}

/// Per-axis channel parts of `hints` that land wholly on one side, after
/// pairwise cancellation of identical parts. Succeeds only when every kept
/// part is graphlike and the parts XOR back to exactly the side's symptom.
fn side_hint_parts(
    hints: &[Component],
    want_x: bool,
    sd: &[u32],
    so: &[u32],
    det_is_x: &[bool],
    obs_is_x: &[bool],
) -> Option<Vec<Component>> {
    if hints.is_empty() {
        return None;
    }
    let of_side = |c: &Component| {
        c.dets.iter().all(|&d| det_is_x[d as usize] == want_x)
            && c.obs.iter().all(|&o| obs_is_x[o as usize] == want_x)
            && !(c.dets.is_empty() && c.obs.is_empty())
    };
    let mut kept: Vec<Component> = Vec::new();
    for part in hints.iter().filter(|c| of_side(c)) {
        // Identical parts cancel pairwise in the XOR.
        if let Some(i) = kept.iter().position(|k| k == part) {
            kept.remove(i);
        } else {
            kept.push(part.clone());
        }
    }
    if kept.iter().any(|c| c.dets.len() > 2) {
        return None;
    }
    let (mut xd, mut xo) = (Sym::new(), Sym::new());
    for part in &kept {
        toggle_ids(&mut xd, &part.dets);
        toggle_ids(&mut xo, &part.obs);
    }
    let vd: Vec<u32> = xd.into_iter().collect();
    let vo: Vec<u32> = xo.into_iter().collect();
    (vd == sd && vo == so).then_some(kept)
}

/// Build the component list of a mechanism as graphlike (at most two
/// detector) pieces.
///
/// Detectors and observables split canonically by comparison family: X
/// errors flip only Z-type comparisons and Z errors only X-type ones, and
/// a record flip touches each family's comparisons independently, so each
/// side of a symptom is a valid standalone error effect. A side wider than
/// two detectors splits further along the channel's per-qubit, per-axis
/// parts when those are graphlike, and otherwise is rewritten as a XOR of
/// edges already present on that side.
///
/// Returns an empty list both when the mechanism is already a single
/// graphlike piece (one side, at most two detectors) and when no
/// decomposition exists; the decoder tells the cases apart by detector
/// count.
fn decompose(
    dets: &[u32],
    obs: &[u32],
    hints: &[Component],
    det_is_x: &[bool],
    obs_is_x: &[bool],
    covers: &[CoverIndex; 2],
) -> Vec<Component> {
    let sides = side_split(dets, obs, det_is_x, obs_is_x);
    let populated = sides.iter().filter(|(d, o)| !d.is_empty() || !o.is_empty()).count();
    if populated <= 1 && dets.len() <= 2 {
        return Vec::new();
    }
    let mut pieces: Vec<Component> = Vec::new();
    for (i, (sd, so)) in sides.iter().enumerate() {
        if sd.is_empty() && so.is_empty() {
            continue;
        }
        if sd.len() <= 2 {
            pieces.push(Component { dets: sd.clone(), obs: so.clone() });
            continue;
        }
        if let Some(parts) = side_hint_parts(hints, i == 0, sd, so, det_is_x, obs_is_x) {
            pieces.extend(parts);
            continue;
        }
        let symd: Sym = sd.iter().copied().collect();
        let symo: Sym = so.iter().copied().collect();
        match covers[i].join(&symd, &symo) {
            Some(sub) => pieces.extend(sub),
            None => {
                eprintln!("decompose-fail side={i} sd={sd:?} so={so:?} (mech dets={dets:?})");
                return Vec::new();
            }
        }
    }
    // The split is a partition and each side reconstruction is verified, so
    // the total XOR identity holds by construction; check it anyway so a
    // bookkeeping slip can never leak a wrong decomposition into the model.
    let (mut xd, mut xo) = (Sym::new(), Sym::new());
    for piece in &pieces {
        toggle_ids(&mut xd, &piece.dets);
        toggle_ids(&mut xo, &piece.obs);
    }
    let vd: Vec<u32> = xd.into_iter().collect();
    let vo: Vec<u32> = xo.into_iter().collect();
    if vd != dets || vo != obs {
        return Vec::new();
    }
    pieces
}

/// Sample detector/observable bits directly from a DEM: each mechanism fires
/// independently with its probability. Same block/stream scheme as
/// [`sample`], so worker count never changes the bits.
pub fn sample_dem(dem: &DetectorErrorModel, shots: usize, seed: u64) -> Result<SampleBatch> {
    if shots == 0 {
        return Err(Error::Invalid("shots must be at least 1".into()));
    }
    let mut batch = SampleBatch::zeroed(shots, dem.num_detectors, dem.num_observables);
    let blocks = shots.div_ceil(BLOCK_SHOTS);
    for block in 0..blocks {
        let base = block * BLOCK_SHOTS;
        let in_block = (shots - base).min(BLOCK_SHOTS);
        let mut rng = block_rng(seed, block as u64);
        for mech in &dem.mechanisms {
            for_each_hit(&mut rng, mech.p, BLOCK_SHOTS, |_, s| {
                if s >= in_block {
                    return;
                }
                for &d in &mech.dets {
                    batch.flip_detector(base + s, d as usize);
                }
                for &o in &mech.obs {
                    batch.flip_observable(base + s, o as usize);
                }
            });
        }
    }
    Ok(batch)
}

// ---------------------------------------------------------------------------
// DEM text format
// ---------------------------------------------------------------------------

impl DetectorErrorModel {
    /// Serialize in the stable text format documented at module level.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("dem 1 {} {}\n", self.num_detectors, self.num_observables));
        for (i, c) in self.detector_coords.iter().enumerate() {
            out.push_str(&format!("detector({},{},{}) D{}\n", c.0, c.1, c.2, i));
        }
        for m in &self.mechanisms {
            out.push_str(&format!("error({})", m.p));
            if m.components.len() >= 2 {
                for (k, comp) in m.components.iter().enumerate() {
                    if k > 0 {
                        out.push_str(" ^");
                    }
                    for &d in &comp.dets {
                        out.push_str(&format!(" D{d}"));
                    }
                    for &o in &comp.obs {
                        out.push_str(&format!(" L{o}"));
                    }
                }
            } else {
                for &d in &m.dets {
                    out.push_str(&format!(" D{d}"));
                }
                for &o in &m.obs {
                    out.push_str(&format!(" L{o}"));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parse the text format produced by [`DetectorErrorModel::to_text`].
    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
        let mut num_detectors = None;
        let mut num_observables = 0usize;
        let mut mechanisms: Vec<Mechanism> = Vec::new();
        let mut coords: Vec<(usize, (i32, i32, i32))> = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("dem ") {
                let fields: Vec<&str> = rest.split_whitespace().collect();
                if fields.len() != 3 || fields[0] != "1" {
                    return Err(err(ln, format!("bad header: {line}")));
                }
                num_detectors = Some(
                    fields[1].parse::<usize>().map_err(|e| err(ln, e.to_string()))?,
                );
                num_observables =
                    fields[2].parse::<usize>().map_err(|e| err(ln, e.to_string()))?;
            } else if let Some(rest) = line.strip_prefix("detector(") {
                let (args, tail) = rest
                    .split_once(')')
                    .ok_or_else(|| err(ln, "missing ) in detector line".into()))?;
                let nums: Vec<i32> = args
                    .split(',')
                    .map(|s| s.trim().parse::<i32>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(ln, e.to_string()))?;
                if nums.len() != 3 {
                    return Err(err(ln, "detector coordinates must have 3 fields".into()));
                }
                let id = tail
                    .trim()
                    .strip_prefix('D')
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| err(ln, "detector line must end in D<id>".into()))?;
                coords.push((id, (nums[0], nums[1], nums[2])));
            } else if let Some(rest) = line.strip_prefix("error(") {
                let (pstr, tail) = rest
                    .split_once(')')
                    .ok_or_else(|| err(ln, "missing ) in error line".into()))?;
                let p: f64 = pstr.trim().parse().map_err(|e: std::num::ParseFloatError| {
                    err(ln, e.to_string())
                })?;
                if !(0.0 < p && p < 1.0) {
                    return Err(err(ln, format!("probability {p} outside (0,1)")));
                }
                let mut components: Vec<Component> = Vec::new();
                for group in tail.split('^') {
                    let mut comp = Component { dets: Vec::new(), obs: Vec::new() };
                    for tok in group.split_whitespace() {
                        if let Some(d) = tok.strip_prefix('D') {
                            comp.dets
                                .push(d.parse().map_err(|_| err(ln, format!("bad target {tok}")))?);
                        } else if let Some(o) = tok.strip_prefix('L') {
                            comp.obs
                                .push(o.parse().map_err(|_| err(ln, format!("bad target {tok}")))?);
                        } else {
                            return Err(err(ln, format!("bad target {tok}")));
                        }
                    }
                    components.push(comp);
                }
                let mut full = Sym::new();
                let mut obs_full = Sym::new();
                for comp in &components {
                    for &d in &comp.dets {
                        if !full.remove(&d) {
                            full.insert(d);
                        }
                    }
                    for &o in &comp.obs {
                        if !obs_full.remove(&o) {
                            obs_full.insert(o);
                        }
                    }
                }
                let dets: Vec<u32> = full.into_iter().collect();
                let obs: Vec<u32> = obs_full.into_iter().collect();
                let components = if components.len() >= 2 { components } else { Vec::new() };
                mechanisms.push(Mechanism { p, dets, obs, components });
            } else {
                return Err(err(ln, format!("unrecognized line: {line}")));
            }
        }
        let num_detectors = num_detectors
            .ok_or_else(|| Error::Parse { line: 0, msg: "missing dem header".into() })?;
        let mut detector_coords = vec![(0, 0, 0); num_detectors];
        for (id, c) in coords {
            if id >= num_detectors {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("detector id {id} out of range"),
                });
            }
            detector_coords[id] = c;
        }
        Ok(DetectorErrorModel {
            num_detectors,
            num_observables,
            mechanisms,
            detector_coords,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{memory_circuit, Basis, ResetMode};
    use crate::lattice::build_rect_patch;
    use crate::noise::{apply_noise, uniform_model};
    use crate::reference::simulate_shot;
    use crate::schedule::{build_schedule, ScheduleKind};
    use crate::stats::{chi_square_tail, chi_square_two_sample};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn memory_d3(cycles: usize) -> Circuit {
        let layout = build_rect_patch(3, 3);
        let sched = build_schedule(&layout, ScheduleKind::C);
        memory_circuit(&layout, &sched, Basis::Z, cycles, ResetMode::Reset).unwrap()
    }

    #[test]
    fn noiseless_circuit_samples_all_zero() {
        let circuit = memory_d3(2);
        let resolved = circuit.resolve().unwrap();
        let batch = sample(&circuit, 1500, 11).unwrap();
        assert_eq!(batch.shots, 1500);
        assert_eq!(batch.num_detectors, resolved.detectors.len());
        assert_eq!(batch.num_observables, resolved.observables.len());
        assert!(batch.detector_counts().iter().all(|&c| c == 0));
        assert!(batch.observable_counts().iter().all(|&c| c == 0));
    }

    #[test]
    fn deterministic_injection_flips_fixed_detector_pair() {
        let mut circuit = memory_d3(3);
        // Center data qubit of the 3x3 patch.
        let layout = build_rect_patch(3, 3);
        let center = layout
            .data_ids()
            .into_iter()
            .find(|&q| layout.grid_pos(q) == (1, 1))
            .unwrap();
        // After the 5th tick: end of cycle 1 (init tick + 4 step ticks).
        let mut ticks = 0;
        let at = circuit
            .instructions
            .iter()
            .position(|i| {
                if matches!(i, Instruction::Tick) {
                    ticks += 1;
                }
                ticks == 5
            })
            .unwrap();
        circuit
            .instructions
            .insert(at + 1, Instruction::XError { p: 1.0, targets: vec![center as u32] });

        let batch = sample(&circuit, 200, 3).unwrap();
        let pattern = batch.fired_detectors(0);
        assert_eq!(pattern.len(), 2, "bulk X error must flip exactly two detectors");
        for shot in 1..batch.shots {
            assert_eq!(batch.fired_detectors(shot), pattern);
        }
        assert!(batch.observable_counts().iter().all(|&c| c == 0));

        // The stabilizer reference sees the identical deterministic pattern.
        let mut rng = StdRng::seed_from_u64(5);
        let shot = simulate_shot(&circuit, &mut rng);
        let fired: Vec<u32> = shot
            .detectors
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i as u32))
            .collect();
        assert_eq!(fired, pattern);
    }

    #[test]
    fn identical_seed_reproduces_and_blocks_are_streams() {
        let circuit = apply_noise(&memory_d3(2), &uniform_model(5e-3).unwrap()).unwrap();
        let a = sample(&circuit, 1500, 42).unwrap();
        let b = sample(&circuit, 1500, 42).unwrap();
        assert_eq!(a, b);
        let c = sample(&circuit, 700, 42).unwrap();
        for shot in 0..700 {
            assert_eq!(a.detector_row(shot), c.detector_row(shot));
            assert_eq!(a.observable_row(shot), c.observable_row(shot));
        }
        let d = sample(&circuit, 1500, 43).unwrap();
        assert_ne!(a, d);
    }

    /// Two repetition-check ancillas over three data qubits, two rounds.
    fn tiny_circuit() -> Circuit {
        let text = "\
RZ 0 1 2 3 4
TICK
CX 0 3 1 3
TICK
MZ 3
RZ 3
TICK
CX 1 4 2 4
TICK
MZ 4
RZ 4
TICK
CX 0 3 1 3
TICK
MZ 3
TICK
CX 1 4 2 4
TICK
MZ 4
TICK
MZ 0 1 2
DETECTOR(0,0,1) rec[-7] rec[-5]
DETECTOR(0,1,1) rec[-6] rec[-4]
DETECTOR(0,0,2) rec[-5] rec[-3] rec[-2]
DETECTOR(0,1,2) rec[-4] rec[-2] rec[-1]
OBSERVABLE_INCLUDE(0) rec[-3]
";
        Circuit::parse(text).unwrap()
    }

    #[test]
    fn frame_sampler_matches_tableau_distribution() {
        let noisy = apply_noise(&tiny_circuit(), &uniform_model(0.05).unwrap()).unwrap();
        let shots = 100_000usize;
        let batch = sample(&noisy, shots, 2024).unwrap();
        assert_eq!(batch.num_detectors, 4);

        let mut hist_frame = vec![0u64; 32];
        for s in 0..shots {
            let mut idx = 0usize;
            for d in 0..4 {
                idx |= (batch.detector(s, d) as usize) << d;
            }
            idx |= (batch.observable(s, 0) as usize) << 4;
            hist_frame[idx] += 1;
        }
        let mut hist_ref = vec![0u64; 32];
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..shots {
            let shot = simulate_shot(&noisy, &mut rng);
            let mut idx = 0usize;
            for d in 0..4 {
                idx |= (shot.detectors[d] as usize) << d;
            }
            idx |= (shot.observables[0] as usize) << 4;
            hist_ref[idx] += 1;
        }
        let (stat, dof) = chi_square_two_sample(&hist_frame, &hist_ref);
        let pval = chi_square_tail(stat, dof);
        assert!(
            pval > 0.01,
            "distribution mismatch: chi2 = {stat:.2}, dof = {dof}, p = {pval:.5}"
        );
    }

    #[test]
    fn dem_mechanisms_are_merged_and_matchable() {
        let noisy = apply_noise(&memory_d3(2), &uniform_model(1e-3).unwrap()).unwrap();
        let dem = extract_dem(&noisy).unwrap();
        assert!(!dem.mechanisms.is_empty());
        let mut seen = std::collections::HashSet::new();
        for m in &dem.mechanisms {
            assert!(m.p > 0.0 && m.p < 1.0);
            assert!(!m.dets.is_empty() || !m.obs.is_empty());
            assert!(
                seen.insert((m.dets.clone(), m.obs.clone())),
                "duplicate symptom not merged: {:?}",
                (&m.dets, &m.obs)
            );
            if m.dets.len() > 2 {
                assert!(
                    m.components.len() >= 2,
                    "mechanism with {} detectors lacks decomposition",
                    m.dets.len()
                );
                let mut dx = std::collections::BTreeSet::new();
                let mut ox = std::collections::BTreeSet::new();
                for comp in &m.components {
                    assert!(
                        comp.dets.len() <= 2,
                        "component with {} detectors cannot be matched",
                        comp.dets.len()
                    );
                    for &d in &comp.dets {
                        if !dx.remove(&d) {
                            dx.insert(d);
                        }
                    }
                    for &o in &comp.obs {
                        if !ox.remove(&o) {
                            ox.insert(o);
                        }
                    }
                }
                assert_eq!(dx.into_iter().collect::<Vec<_>>(), m.dets);
                assert_eq!(ox.into_iter().collect::<Vec<_>>(), m.obs);
            }
        }
    }

    #[test]
    fn dem_text_round_trips() {
        let noisy = apply_noise(&memory_d3(2), &uniform_model(2e-3).unwrap()).unwrap();
        let dem = extract_dem(&noisy).unwrap();
        let text = dem.to_text();
        let parsed = DetectorErrorModel::parse(&text).unwrap();
        assert_eq!(dem, parsed);
    }

    #[test]
    fn dem_sampling_matches_circuit_sampling() {
        let noisy = apply_noise(&memory_d3(2), &uniform_model(1e-3).unwrap()).unwrap();
        let dem = extract_dem(&noisy).unwrap();
        let shots = 200_000usize;
        let from_circuit = sample(&noisy, shots, 7).unwrap();
        let from_dem = sample_dem(&dem, shots, 8).unwrap();
        let ca = from_circuit.detector_counts();
        let cb = from_dem.detector_counts();
        for (i, (&a, &b)) in ca.iter().zip(&cb).enumerate() {
            let (fa, fb) = (a as f64 / shots as f64, b as f64 / shots as f64);
            let pooled = (fa + fb) / 2.0;
            // Two-sample binomial bound plus slack for the first-order
            // independence approximation of the DEM.
            let sigma = (2.0 * pooled * (1.0 - pooled) / shots as f64).sqrt();
            assert!(
                (fa - fb).abs() <= 4.0 * sigma + 1e-4,
                "detector {i}: circuit rate {fa:.5} vs dem rate {fb:.5}"
            );
        }
    }

    #[test]
    fn export_shapes_are_stable() {
        let circuit = apply_noise(&memory_d3(1), &uniform_model(0.02).unwrap()).unwrap();
        let batch = sample(&circuit, 130, 1).unwrap();
        let mut det_bin = Vec::new();
        batch.write_detectors_binary(&mut det_bin).unwrap();
        assert_eq!(det_bin.len(), 130 * batch.num_detectors.div_ceil(8));
        // Bit k of each row round-trips.
        for shot in [0usize, 64, 129] {
            for d in 0..batch.num_detectors {
                let byte = det_bin[shot * batch.num_detectors.div_ceil(8) + d / 8];
                let bit = byte >> (d % 8) & 1 == 1;
                assert_eq!(bit, batch.detector(shot, d));
            }
        }
        let mut csv = Vec::new();
        batch.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 131);
        assert!(text.starts_with("shot,d0,"));
    }

    #[test]
    fn frame_dimensions_follow_circuit() {
        let circuit = memory_d3(1);
        let mut frame = PauliFrame::new(circuit.num_qubits as usize);
        let (rec_map, n_det, n_obs) = build_rec_map(&circuit).unwrap();
        let mut det_lanes = vec![0u64; n_det * LANE_WORDS];
        let mut obs_lanes = vec![0u64; n_obs * LANE_WORDS];
        let mut rng = block_rng(0, 0);
        run_block(&circuit, &rec_map, &mut frame, &mut rng, &mut det_lanes, &mut obs_lanes);
        assert_eq!(frame.num_records(), circuit.num_measurements() as usize);
        assert!(!frame.record_bit(0, 0));
    }
}
