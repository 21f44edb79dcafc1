//! Minimum-weight perfect-matching decoding of detector syndromes.
//!
//! [`build_graph`] turns a detector error model into a weighted graph:
//! detectors are nodes, each mechanism (or each component of a decomposed
//! mechanism) becomes an edge between its one or two detectors, with
//! single-detector edges attached to one shared virtual boundary node.
//! Parallel edges with the same observable mask merge by the independent-OR
//! rule p' = p1(1-p2) + p2(1-p1); the edge weight is ln((1-p)/p).
//!
//! [`DecodingGraph::decode`] matches the flipped detectors of one shot
//! pairwise (or to the boundary) with exact minimum total weight:
//! shortest-path distances between flipped nodes feed a blossom matching
//! solved to optimality on integer-scaled weights, and the predicted
//! observable flip is the XOR of the observable masks along every matched
//! shortest path. Ties collapse to a deterministic choice because edges are
//! ordered and the solver is deterministic.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use crate::sampler::{DetectorErrorModel, SampleBatch};
use crate::{Error, Result};

/// One matching edge: `u` is a detector id, `v` is a detector id or the
/// boundary id ([`DecodingGraph::boundary`]).
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeEdge {
    pub u: u32,
    pub v: u32,
    pub weight: f64,
    pub obs_mask: u64,
    /// Indices of the DEM mechanisms merged into this edge.
    pub sources: Vec<u32>,
}

/// Matching graph built from a detector error model. Immutable after
/// construction; decoding borrows it shared, so shots can run in parallel.
#[derive(Clone, Debug)]
pub struct DecodingGraph {
    pub num_detectors: usize,
    pub num_observables: usize,
    pub edges: Vec<DecodeEdge>,
    adj: Vec<Vec<(u32, u32)>>, // node -> (neighbor, edge id); boundary included
}

/// Result of decoding one syndrome.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Correction {
    /// Matched detector pairs; the second entry may be the boundary id.
    pub pairs: Vec<(u32, u32)>,
    /// Predicted observable flips as a bitmask (observable j = bit j).
    pub obs_flips: u64,
}

/// Build the matching graph of a DEM. Mechanisms flipping more than two
/// detectors (or mixing comparison families) must carry a graphlike
/// decomposition; each component then contributes an edge carrying the full
/// mechanism probability.
pub fn build_graph(dem: &DetectorErrorModel) -> Result<DecodingGraph> {
    if dem.num_observables > 64 {
        return Err(Error::Invalid(format!(
            "{} observables exceed the 64-bit mask",
            dem.num_observables
        )));
    }
    let boundary = dem.num_detectors as u32;
    let mask_of = |obs: &[u32]| obs.iter().fold(0u64, |m, &o| m | 1 << o);

    // (u, v) -> obs mask -> (merged p, source mechanism ids)
    let mut acc: BTreeMap<(u32, u32), BTreeMap<u64, (f64, Vec<u32>)>> = BTreeMap::new();
    let mut add = |u: u32, v: u32, mask: u64, p: f64, mi: u32| {
        let key = if u <= v { (u, v) } else { (v, u) };
        let entry = acc.entry(key).or_default().entry(mask).or_insert((0.0, Vec::new()));
        entry.0 = entry.0 * (1.0 - p) + p * (1.0 - entry.0);
        entry.1.push(mi);
    };

    for (mi, mech) in dem.mechanisms.iter().enumerate() {
        let mi = mi as u32;
        if mech.components.is_empty() {
            match *mech.dets.as_slice() {
                [] => {} // flips no detector; invisible to matching
                [d] => add(d, boundary, mask_of(&mech.obs), mech.p, mi),
                [a, b] => add(a, b, mask_of(&mech.obs), mech.p, mi),
                _ => {
                    return Err(Error::Undecomposable {
                        index: mi as usize,
                        count: mech.dets.len(),
                    });
                }
            }
        } else {
            if mech.components.iter().any(|c| c.dets.len() > 2) {
                return Err(Error::Undecomposable {
                    index: mi as usize,
                    count: mech.dets.len(),
                });
            }
            for comp in &mech.components {
                match *comp.dets.as_slice() {
                    [] => {} // observable-only remainder; unmatchable
                    [d] => add(d, boundary, mask_of(&comp.obs), mech.p, mi),
                    [a, b] => add(a, b, mask_of(&comp.obs), mech.p, mi),
                    _ => unreachable!(),
                }
            }
        }
    }

    let mut edges = Vec::new();
    for ((u, v), variants) in acc {
        // Parallel edges with different observable effects cannot merge;
        // matching keeps the most probable (lowest-weight) variant.
        let mut best: Option<(f64, u64, (f64, Vec<u32>))> = None;
        for (mask, (p, sources)) in variants {
            if p >= 0.5 + 1e-12 {
                return Err(Error::Invalid(format!(
                    "edge ({u}, {v}) has merged probability {p} > 1/2"
                )));
            }
            let w = ((1.0 - p) / p).ln();
            if best.as_ref().is_none_or(|(bw, ..)| w < *bw) {
                best = Some((w, mask, (p, sources)));
            }
        }
        let (weight, obs_mask, (_, sources)) = best.unwrap();
        edges.push(DecodeEdge { u, v, weight, obs_mask, sources });
    }

    let mut adj = vec![Vec::new(); dem.num_detectors + 1];
    for (eid, e) in edges.iter().enumerate() {
        adj[e.u as usize].push((e.v, eid as u32));
        if e.u != e.v {
            adj[e.v as usize].push((e.u, eid as u32));
        }
    }
    Ok(DecodingGraph {
        num_detectors: dem.num_detectors,
        num_observables: dem.num_observables,
        edges,
        adj,
    })
}

/// Shortest-path tree from one source over the matching graph.
struct SourcePaths {
    dist: Vec<f64>,
    mask: Vec<u64>,
}

impl DecodingGraph {
    /// Id of the virtual boundary node.
    pub fn boundary(&self) -> u32 {
        self.num_detectors as u32
    }

    /// Dijkstra from `src`. The boundary node is a valid endpoint but is
    /// never expanded: a pair routed "through" the boundary is the same as
    /// two separate boundary matches and is represented that way instead.
    fn paths_from(&self, src: u32) -> SourcePaths {
        let n = self.num_detectors + 1;
        let mut dist = vec![f64::INFINITY; n];
        let mut mask = vec![0u64; n];
        let mut done = vec![false; n];
        let mut heap: BinaryHeap<Reverse<(OrdF64, u32)>> = BinaryHeap::new();
        dist[src as usize] = 0.0;
        heap.push(Reverse((OrdF64(0.0), src)));
        while let Some(Reverse((OrdF64(d), u))) = heap.pop() {
            let ui = u as usize;
            if done[ui] {
                continue;
            }
            done[ui] = true;
            if u == self.boundary() {
                continue;
            }
            for &(v, eid) in &self.adj[ui] {
                let e = &self.edges[eid as usize];
                let nd = d + e.weight;
                if nd < dist[v as usize] {
                    dist[v as usize] = nd;
                    mask[v as usize] = mask[ui] ^ e.obs_mask;
                    heap.push(Reverse((OrdF64(nd), v)));
                }
            }
        }
        SourcePaths { dist, mask }
    }

    /// Decode one syndrome given as the list of flipped detector ids.
    /// `cache` memoizes shortest-path trees across calls.
    fn decode_flipped(
        &self,
        flipped: &[u32],
        cache: &mut HashMap<u32, SourcePaths>,
    ) -> Correction {
        let k = flipped.len();
        if k == 0 {
            return Correction { pairs: Vec::new(), obs_flips: 0 };
        }
        let boundary = self.boundary() as usize;
        for &f in flipped {
            cache.entry(f).or_insert_with(|| self.paths_from(f));
        }
        const SCALE: f64 = 1e6;
        const UNREACHABLE: i64 = 1_000_000_000_000;
        let quantize = |d: f64| -> i64 {
            if d.is_finite() {
                (d * SCALE).round() as i64
            } else {
                UNREACHABLE
            }
        };
        let mut pair_cost = vec![vec![0i64; k]; k];
        let mut bdry_cost = vec![0i64; k];
        for (i, &f) in flipped.iter().enumerate() {
            let paths = &cache[&f];
            for (j, &g) in flipped.iter().enumerate() {
                pair_cost[i][j] = quantize(paths.dist[g as usize]);
            }
            bdry_cost[i] = quantize(paths.dist[boundary]);
        }
        let mates = min_weight_pairing(&pair_cost, &bdry_cost);
        let mut pairs = Vec::new();
        let mut obs = 0u64;
        for (i, mate) in mates.iter().enumerate() {
            match *mate {
                None => {
                    let paths = &cache[&flipped[i]];
                    if paths.dist[boundary].is_finite() {
                        obs ^= paths.mask[boundary];
                    }
                    pairs.push((flipped[i], boundary as u32));
                }
                Some(j) if j > i => {
                    let paths = &cache[&flipped[i]];
                    if paths.dist[flipped[j] as usize].is_finite() {
                        obs ^= paths.mask[flipped[j] as usize];
                    }
                    pairs.push((flipped[i], flipped[j]));
                }
                Some(_) => {}
            }
        }
        Correction { pairs, obs_flips: obs }
    }

    /// Decode one syndrome bit vector (length = number of detectors).
    pub fn decode(&self, syndrome: &[bool]) -> Result<Correction> {
        if syndrome.len() != self.num_detectors {
            return Err(Error::Invalid(format!(
                "syndrome length {} != {} detectors",
                syndrome.len(),
                self.num_detectors
            )));
        }
        let flipped: Vec<u32> = syndrome
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i as u32))
            .collect();
        let mut cache = HashMap::new();
        Ok(self.decode_flipped(&flipped, &mut cache))
    }

    /// Decode every shot of a batch; a failure is any shot whose predicted
    /// observable flips differ from the sampled ones. Returns
    /// (failure count, failure rate).
    pub fn decode_batch(&self, batch: &SampleBatch) -> Result<(u64, f64)> {
        if batch.num_detectors != self.num_detectors {
            return Err(Error::Invalid(format!(
                "batch has {} detectors, graph has {}",
                batch.num_detectors, self.num_detectors
            )));
        }
        if batch.num_observables > 64 {
            return Err(Error::Invalid(format!(
                "{} observables exceed the 64-bit mask",
                batch.num_observables
            )));
        }
        let mut cache = HashMap::new();
        let mut failures = 0u64;
        for shot in 0..batch.shots {
            let flipped = batch.fired_detectors(shot);
            let correction = self.decode_flipped(&flipped, &mut cache);
            let mut actual = 0u64;
            for (w, &word) in batch.observable_row(shot).iter().enumerate() {
                let mut word = word;
                while word != 0 {
                    let b = word.trailing_zeros() as usize;
                    actual |= 1 << (w * 64 + b);
                    word &= word - 1;
                }
            }
            if correction.obs_flips != actual {
                failures += 1;
            }
        }
        Ok((failures, failures as f64 / batch.shots as f64))
    }

    /// Edge-list text export: `edge u v weight obs_mask` per line, with the
    /// boundary printed as its node id (= number of detectors).
    pub fn to_edge_list(&self) -> String {
        let mut out = format!(
            "# decoding graph: {} detectors, boundary id {}, {} observables\n",
            self.num_detectors,
            self.boundary(),
            self.num_observables
        );
        for e in &self.edges {
            out.push_str(&format!("edge {} {} {} {}\n", e.u, e.v, e.weight, e.obs_mask));
        }
        out
    }
}

/// Total-order f64 wrapper for the Dijkstra heap.
#[derive(PartialEq)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

// ---------------------------------------------------------------------------
// Exact minimum-weight pairing
// ---------------------------------------------------------------------------

/// Pair up `k` nodes with minimum total cost, where node `i` may pair with
/// node `j` at `pair_cost[i][j]` or stay alone at `bdry_cost[i]`. Returns
/// for each node `Some(partner)` or `None` for a boundary match. Exact:
/// solved as maximum-weight perfect matching on 2k nodes (each node gets a
/// ghost twin; ghost-ghost edges are free) with a blossom algorithm.
pub(crate) fn min_weight_pairing(pair_cost: &[Vec<i64>], bdry_cost: &[i64]) -> Vec<Option<usize>> {
    let k = bdry_cost.len();
    if k == 0 {
        return Vec::new();
    }
    if k == 1 {
        return vec![None];
    }
    let mut max_cost = 1i64;
    for (i, row) in pair_cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if i != j {
                max_cost = max_cost.max(c);
            }
        }
        max_cost = max_cost.max(bdry_cost[i]);
    }
    // An edge never part of any optimum: worse than any full pairing.
    let forbidden = max_cost * (k as i64 + 1) + 1;
    // Shift to maximization with all weights >= 1 so the maximum-weight
    // matching is perfect and minimizes the original cost.
    let shift = forbidden + 1;
    let n = 2 * k;
    let mut solver = Blossom::new(n);
    for i in 0..k {
        for j in i + 1..k {
            solver.set_weight(i, j, shift - pair_cost[i][j]);
            solver.set_weight(k + i, k + j, shift);
        }
        solver.set_weight(i, k + i, shift - bdry_cost[i]);
        for j in 0..k {
            if j != i {
                solver.set_weight(i, k + j, shift - forbidden);
            }
        }
    }
    let mates = solver.solve();
    (0..k)
        .map(|i| {
            let m = mates[i + 1];
            debug_assert!(m != 0, "pairing must be perfect");
            if m == k + i + 1 {
                None
            } else {
                debug_assert!(m <= k, "node paired with a foreign ghost");
                Some(m - 1)
            }
        })
        .collect()
}

/// Maximum-weight matching on a dense general graph (O(n^3) primal-dual
/// blossom algorithm, 1-indexed internally). Weights are doubled on input
/// so every dual stays integral. With all weights positive and cardinality
/// dominant (see [`min_weight_pairing`]), the result is a perfect matching.
struct Blossom {
    n: usize,
    n_x: usize,
    cap: usize,
    gw: Vec<i64>,
    gu: Vec<u32>,
    gv: Vec<u32>,
    lab: Vec<i64>,
    mate: Vec<usize>,
    slack: Vec<usize>,
    st: Vec<usize>,
    pa: Vec<usize>,
    flower: Vec<Vec<usize>>,
    flower_from: Vec<Vec<usize>>,
    s: Vec<i8>,
    vis: Vec<usize>,
    tstamp: usize,
    q: VecDeque<usize>,
}

impl Blossom {
    fn new(n: usize) -> Self {
        assert!(n % 2 == 0 && n >= 2);
        let cap = 2 * n + 1;
        let mut b = Blossom {
            n,
            n_x: n,
            cap,
            gw: vec![0; cap * cap],
            gu: vec![0; cap * cap],
            gv: vec![0; cap * cap],
            lab: vec![0; cap],
            mate: vec![0; cap],
            slack: vec![0; cap],
            st: vec![0; cap],
            pa: vec![0; cap],
            flower: vec![Vec::new(); cap],
            flower_from: vec![vec![0; n + 1]; cap],
            s: vec![-1; cap],
            vis: vec![0; cap],
            tstamp: 0,
            q: VecDeque::new(),
        };
        for u in 1..=n {
            for v in 1..=n {
                let id = u * cap + v;
                b.gu[id] = u as u32;
                b.gv[id] = v as u32;
            }
        }
        b
    }

    /// Set the (undirected) weight between 0-indexed nodes.
    fn set_weight(&mut self, a: usize, b: usize, w: i64) {
        let (u, v) = (a + 1, b + 1);
        self.gw[u * self.cap + v] = 2 * w;
        self.gw[v * self.cap + u] = 2 * w;
    }

    #[inline]
    fn slot(&self, u: usize, v: usize) -> usize {
        u * self.cap + v
    }

    /// Dual slack of the surface edge stored at slot (u, v).
    fn e_delta(&self, u: usize, v: usize) -> i64 {
        let id = self.slot(u, v);
        let (eu, ev) = (self.gu[id] as usize, self.gv[id] as usize);
        self.lab[eu] + self.lab[ev] - self.gw[self.slot(eu, ev)]
    }

    fn update_slack(&mut self, u: usize, x: usize) {
        if self.slack[x] == 0 || self.e_delta(u, x) < self.e_delta(self.slack[x], x) {
            self.slack[x] = u;
        }
    }

    fn set_slack(&mut self, x: usize) {
        self.slack[x] = 0;
        for u in 1..=self.n {
            if self.gw[self.slot(u, x)] > 0 && self.st[u] != x && self.s[self.st[u]] == 0 {
                self.update_slack(u, x);
            }
        }
    }

    fn q_push(&mut self, x: usize) {
        if x <= self.n {
            self.q.push_back(x);
        } else {
            let members = self.flower[x].clone();
            for i in members {
                self.q_push(i);
            }
        }
    }

    fn set_st(&mut self, x: usize, b: usize) {
        self.st[x] = b;
        if x > self.n {
            let members = self.flower[x].clone();
            for i in members {
                self.set_st(i, b);
            }
        }
    }

    fn get_pr(&mut self, b: usize, xr: usize) -> usize {
        let pr = self.flower[b].iter().position(|&x| x == xr).unwrap();
        if pr % 2 == 1 {
            self.flower[b][1..].reverse();
            self.flower[b].len() - pr
        } else {
            pr
        }
    }

    fn set_match(&mut self, u: usize, v: usize) {
        let id = self.slot(u, v);
        self.mate[u] = self.gv[id] as usize;
        if u > self.n {
            let eu = self.gu[id] as usize;
            let xr = self.flower_from[u][eu];
            let pr = self.get_pr(u, xr);
            for i in 0..pr {
                let (a, b) = (self.flower[u][i], self.flower[u][i ^ 1]);
                self.set_match(a, b);
            }
            self.set_match(xr, v);
            self.flower[u].rotate_left(pr);
        }
    }

    fn augment(&mut self, mut u: usize, mut v: usize) {
        loop {
            let xnv = self.st[self.mate[u]];
            self.set_match(u, v);
            if xnv == 0 {
                return;
            }
            let pa = self.pa[xnv];
            self.set_match(xnv, self.st[pa]);
            let (nu, nv) = (self.st[pa], xnv);
            u = nu;
            v = nv;
        }
    }

    fn get_lca(&mut self, mut u: usize, mut v: usize) -> usize {
        self.tstamp += 1;
        let t = self.tstamp;
        while u != 0 || v != 0 {
            if u != 0 {
                if self.vis[u] == t {
                    return u;
                }
                self.vis[u] = t;
                u = self.st[self.mate[u]];
                if u != 0 {
                    u = self.st[self.pa[u]];
                }
            }
            std::mem::swap(&mut u, &mut v);
        }
        0
    }

    fn add_blossom(&mut self, u: usize, lca: usize, v: usize) {
        let mut b = self.n + 1;
        while b <= self.n_x && self.st[b] != 0 {
            b += 1;
        }
        if b > self.n_x {
            self.n_x += 1;
        }
        self.lab[b] = 0;
        self.s[b] = 0;
        self.mate[b] = self.mate[lca];
        self.flower[b] = vec![lca];
        let mut x = u;
        while x != lca {
            self.flower[b].push(x);
            let y = self.st[self.mate[x]];
            self.flower[b].push(y);
            self.q_push(y);
            x = self.st[self.pa[y]];
        }
        self.flower[b][1..].reverse();
        let mut x = v;
        while x != lca {
            self.flower[b].push(x);
            let y = self.st[self.mate[x]];
            self.flower[b].push(y);
            self.q_push(y);
            x = self.st[self.pa[y]];
        }
        self.set_st(b, b);
        for x in 1..=self.n_x {
            let (bx, xb) = (self.slot(b, x), self.slot(x, b));
            self.gw[bx] = 0;
            self.gw[xb] = 0;
        }
        for x in 1..=self.n {
            self.flower_from[b][x] = 0;
        }
        let members = self.flower[b].clone();
        for &xs in &members {
            for x in 1..=self.n_x {
                let bx = self.slot(b, x);
                if self.gw[bx] == 0
                    || (self.gw[self.slot(xs, x)] > 0
                        && self.e_delta(xs, x) < self.e_delta(b, x))
                {
                    let sx = self.slot(xs, x);
                    let xsid = self.slot(x, xs);
                    let xbid = self.slot(x, b);
                    self.gw[bx] = self.gw[sx];
                    self.gu[bx] = self.gu[sx];
                    self.gv[bx] = self.gv[sx];
                    self.gw[xbid] = self.gw[xsid];
                    self.gu[xbid] = self.gu[xsid];
                    self.gv[xbid] = self.gv[xsid];
                }
            }
            for x in 1..=self.n {
                if self.flower_from[xs][x] != 0 {
                    self.flower_from[b][x] = xs;
                }
            }
        }
        self.set_slack(b);
    }

    fn expand_blossom(&mut self, b: usize) {
        let members = self.flower[b].clone();
        for &i in &members {
            self.set_st(i, i);
        }
        let pa_slot = self.slot(b, self.pa[b]);
        let xr = self.flower_from[b][self.gu[pa_slot] as usize];
        let pr = self.get_pr(b, xr);
        let mut i = 0;
        while i < pr {
            let xs = self.flower[b][i];
            let xns = self.flower[b][i + 1];
            self.pa[xs] = self.gu[self.slot(xns, xs)] as usize;
            self.s[xs] = 1;
            self.s[xns] = 0;
            self.slack[xs] = 0;
            self.set_slack(xns);
            self.q_push(xns);
            i += 2;
        }
        self.s[xr] = 1;
        self.pa[xr] = self.pa[b];
        for i in pr + 1..self.flower[b].len() {
            let xs = self.flower[b][i];
            self.s[xs] = -1;
            self.set_slack(xs);
        }
        self.st[b] = 0;
    }

    fn on_found_edge(&mut self, eu: usize, ev: usize) -> bool {
        let u = self.st[eu];
        let v = self.st[ev];
        if self.s[v] == -1 {
            self.pa[v] = eu;
            self.s[v] = 1;
            let nu = self.st[self.mate[v]];
            self.slack[v] = 0;
            self.slack[nu] = 0;
            self.s[nu] = 0;
            self.q_push(nu);
        } else if self.s[v] == 0 {
            let lca = self.get_lca(u, v);
            if lca == 0 {
                self.augment(u, v);
                self.augment(v, u);
                return true;
            }
            self.add_blossom(u, lca, v);
        }
        false
    }

    fn matching_round(&mut self) -> bool {
        for x in 1..=self.n_x {
            self.s[x] = -1;
            self.slack[x] = 0;
        }
        self.q.clear();
        for x in 1..=self.n_x {
            if self.st[x] == x && self.mate[x] == 0 {
                self.pa[x] = 0;
                self.s[x] = 0;
                self.q_push(x);
            }
        }
        if self.q.is_empty() {
            return false;
        }
        loop {
            while let Some(u) = self.q.pop_front() {
                if self.s[self.st[u]] == 1 {
                    continue;
                }
                for v in 1..=self.n {
                    if self.gw[self.slot(u, v)] > 0 && self.st[u] != self.st[v] {
                        if self.e_delta(u, v) == 0 {
                            let (eu, ev) = (
                                self.gu[self.slot(u, v)] as usize,
                                self.gv[self.slot(u, v)] as usize,
                            );
                            if self.on_found_edge(eu, ev) {
                                return true;
                            }
                        } else {
                            let sv = self.st[v];
                            self.update_slack(u, sv);
                        }
                    }
                }
            }
            let mut d = i64::MAX;
            for b in self.n + 1..=self.n_x {
                if self.st[b] == b && self.s[b] == 1 {
                    d = d.min(self.lab[b] / 2);
                }
            }
            for x in 1..=self.n_x {
                if self.st[x] == x && self.slack[x] != 0 {
                    let sd = self.e_delta(self.slack[x], x);
                    if self.s[x] == -1 {
                        d = d.min(sd);
                    } else if self.s[x] == 0 {
                        d = d.min(sd / 2);
                    }
                }
            }
            for u in 1..=self.n {
                match self.s[self.st[u]] {
                    0 => {
                        if self.lab[u] <= d {
                            return false;
                        }
                        self.lab[u] -= d;
                    }
                    1 => self.lab[u] += d,
                    _ => {}
                }
            }
            for b in self.n + 1..=self.n_x {
                if self.st[b] == b && self.s[b] != -1 {
                    if self.s[b] == 0 {
                        self.lab[b] += 2 * d;
                    } else {
                        self.lab[b] -= 2 * d;
                    }
                }
            }
            self.q.clear();
            for x in 1..=self.n_x {
                if self.st[x] == x
                    && self.slack[x] != 0
                    && self.st[self.slack[x]] != x
                    && self.e_delta(self.slack[x], x) == 0
                {
                    let id = self.slot(self.slack[x], x);
                    let (eu, ev) = (self.gu[id] as usize, self.gv[id] as usize);
                    if self.on_found_edge(eu, ev) {
                        return true;
                    }
                }
            }
            for b in self.n + 1..=self.n_x {
                if self.st[b] == b && self.s[b] == 1 && self.lab[b] == 0 {
                    self.expand_blossom(b);
                }
            }
        }
    }

    /// Run to completion; returns the mate array (1-indexed, 0 = unmatched).
    fn solve(mut self) -> Vec<usize> {
        for u in 0..=self.n {
            self.st[u] = u;
            self.flower[u].clear();
        }
        let mut w_max = 0i64;
        for u in 1..=self.n {
            for v in 1..=self.n {
                self.flower_from[u][v] = if u == v { u } else { 0 };
                w_max = w_max.max(self.gw[self.slot(u, v)]);
            }
        }
        for u in 1..=self.n {
            self.lab[u] = w_max;
        }
        while self.matching_round() {}
        self.mate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{memory_circuit, Basis, ResetMode};
    use crate::lattice::build_rect_patch;
    use crate::noise::{apply_noise, uniform_model};
    use crate::sampler::{extract_dem, sample, Mechanism};
    use crate::schedule::{build_schedule, ScheduleKind};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn memory_graph(d: usize, p: f64, cycles: usize) -> (DetectorErrorModel, DecodingGraph) {
        let layout = build_rect_patch(d, d);
        let sched = build_schedule(&layout, ScheduleKind::C);
        let c = memory_circuit(&layout, &sched, Basis::Z, cycles, ResetMode::Reset).unwrap();
        let noisy = apply_noise(&c, &uniform_model(p).unwrap()).unwrap();
        let dem = extract_dem(&noisy).unwrap();
        let graph = build_graph(&dem).unwrap();
        (dem, graph)
    }

    fn hand_dem(mechs: Vec<Mechanism>, n_det: usize, n_obs: usize) -> DetectorErrorModel {
        DetectorErrorModel {
            num_detectors: n_det,
            num_observables: n_obs,
            mechanisms: mechs,
            detector_coords: vec![(0, 0, 0); n_det],
        }
    }

    #[test]
    fn parallel_mechanisms_merge_and_weight_follows_log_odds() {
        let mech = |p: f64| Mechanism { p, dets: vec![0, 1], obs: vec![], components: vec![] };
        let dem = hand_dem(vec![mech(0.1), mech(0.1)], 2, 0);
        let graph = build_graph(&dem).unwrap();
        assert_eq!(graph.edges.len(), 1);
        let e = &graph.edges[0];
        assert_eq!((e.u, e.v), (0, 1));
        assert!((e.weight - (0.82f64 / 0.18).ln()).abs() < 1e-12);
        assert_eq!(e.sources, vec![0, 1]);

        let dem = hand_dem(
            vec![Mechanism { p: 0.5, dets: vec![0], obs: vec![0], components: vec![] }],
            1,
            1,
        );
        let graph = build_graph(&dem).unwrap();
        assert_eq!(graph.edges[0].weight, 0.0);
        assert_eq!(graph.edges[0].v, graph.boundary());
    }

    #[test]
    fn memory_model_builds_without_undecomposable_mechanisms() {
        for d in [3, 5] {
            let (dem, graph) = memory_graph(d, 1e-3, 2);
            assert_eq!(graph.num_detectors, dem.num_detectors);
            assert!(graph.edges.iter().any(|e| e.v == graph.boundary()));
            for e in &graph.edges {
                assert!(e.weight > 0.0);
                assert!(e.u < graph.boundary());
            }
            // Every detector can be matched somewhere.
            for det in 0..graph.num_detectors {
                assert!(graph.adj[det].iter().any(|&(v, _)| v != det as u32));
            }
        }
    }

    #[test]
    fn every_single_mechanism_decodes_to_its_own_observable() {
        for d in [3usize, 5] {
            let (dem, graph) = memory_graph(d, 1e-3, 2);
            for (mi, m) in dem.mechanisms.iter().enumerate() {
                let mut syndrome = vec![false; dem.num_detectors];
                for &det in &m.dets {
                    syndrome[det as usize] = true;
                }
                let correction = graph.decode(&syndrome).unwrap();
                let expect = m.obs.iter().fold(0u64, |acc, &o| acc | 1 << o);
                assert_eq!(
                    correction.obs_flips, expect,
                    "d={d} mechanism {mi} (dets {:?}, obs {:?}) miscorrected",
                    m.dets, m.obs
                );
            }
        }
    }

    #[test]
    fn lone_boundary_adjacent_detector_matches_boundary() {
        let (dem, graph) = memory_graph(3, 1e-3, 2);
        let boundary_det = graph
            .edges
            .iter()
            .find(|e| e.v == graph.boundary())
            .map(|e| e.u)
            .unwrap();
        let mut syndrome = vec![false; dem.num_detectors];
        syndrome[boundary_det as usize] = true;
        let correction = graph.decode(&syndrome).unwrap();
        assert_eq!(correction.pairs, vec![(boundary_det, graph.boundary())]);
    }

    #[test]
    fn empty_syndrome_is_a_noop() {
        let (dem, graph) = memory_graph(3, 1e-3, 2);
        let correction = graph.decode(&vec![false; dem.num_detectors]).unwrap();
        assert!(correction.pairs.is_empty());
        assert_eq!(correction.obs_flips, 0);
    }

    /// Exhaustive minimum over all pairings (partners or boundary).
    fn exhaustive_best(pair: &[Vec<i64>], bdry: &[i64], used: &mut [bool]) -> i64 {
        let i = match used.iter().position(|&u| !u) {
            Some(i) => i,
            None => return 0,
        };
        used[i] = true;
        let mut best = bdry[i].saturating_add(exhaustive_best(pair, bdry, used));
        for j in i + 1..used.len() {
            if !used[j] {
                used[j] = true;
                let c = pair[i][j].saturating_add(exhaustive_best(pair, bdry, used));
                best = best.min(c);
                used[j] = false;
            }
        }
        used[i] = false;
        best
    }

    fn pairing_cost(pair: &[Vec<i64>], bdry: &[i64], mates: &[Option<usize>]) -> i64 {
        let mut total = 0;
        for (i, m) in mates.iter().enumerate() {
            match *m {
                None => total += bdry[i],
                Some(j) => {
                    assert_eq!(mates[j], Some(i), "pairing not symmetric");
                    if j > i {
                        total += pair[i][j];
                    }
                }
            }
        }
        total
    }

    #[test]
    fn blossom_matches_exhaustive_minimum_on_random_instances() {
        let mut rng = StdRng::seed_from_u64(20240817);
        for trial in 0..400 {
            let k = rng.gen_range(2..=9);
            let mut pair = vec![vec![0i64; k]; k];
            for i in 0..k {
                for j in i + 1..k {
                    let c = rng.gen_range(1..=1000);
                    pair[i][j] = c;
                    pair[j][i] = c;
                }
            }
            let bdry: Vec<i64> = (0..k).map(|_| rng.gen_range(1..=1000)).collect();
            let mates = min_weight_pairing(&pair, &bdry);
            let got = pairing_cost(&pair, &bdry, &mates);
            let want = exhaustive_best(&pair, &bdry, &mut vec![false; k]);
            assert_eq!(got, want, "trial {trial}: k={k} pair={pair:?} bdry={bdry:?}");
        }
    }

    #[test]
    fn blossom_stays_exact_at_fourteen_nodes() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..3 {
            let k = 14;
            let mut pair = vec![vec![0i64; k]; k];
            for i in 0..k {
                for j in i + 1..k {
                    let c = rng.gen_range(1..=100_000);
                    pair[i][j] = c;
                    pair[j][i] = c;
                }
            }
            let bdry: Vec<i64> = (0..k).map(|_| rng.gen_range(1..=100_000)).collect();
            let mates = min_weight_pairing(&pair, &bdry);
            let got = pairing_cost(&pair, &bdry, &mates);
            let want = exhaustive_best(&pair, &bdry, &mut vec![false; k]);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn batch_decoding_rates() {
        let layout = build_rect_patch(3, 3);
        let sched = build_schedule(&layout, ScheduleKind::C);
        let clean = memory_circuit(&layout, &sched, Basis::Z, 2, ResetMode::Reset).unwrap();
        let (_, graph) = memory_graph(3, 1e-3, 2);
        let batch = sample(&clean, 500, 1).unwrap();
        assert_eq!(graph.decode_batch(&batch).unwrap(), (0, 0.0));

        // Saturating noise randomizes the observable: rate ~ 1/2.
        let noisy = apply_noise(&clean, &uniform_model(0.5).unwrap()).unwrap();
        let dem = extract_dem(&noisy).unwrap();
        let sat_graph = build_graph(&dem).unwrap();
        let batch = sample(&noisy, 4096, 2).unwrap();
        let (_, rate) = sat_graph.decode_batch(&batch).unwrap();
        assert!((rate - 0.5).abs() < 0.05, "saturated rate {rate}");
    }

    #[test]
    fn edge_list_export_is_parseable() {
        let (_, graph) = memory_graph(3, 1e-3, 2);
        let text = graph.to_edge_list();
        let mut count = 0;
        for line in text.lines().filter(|l| !l.starts_with('#')) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(fields[0], "edge");
            assert_eq!(fields.len(), 5);
            fields[1].parse::<u32>().unwrap();
            fields[2].parse::<u32>().unwrap();
            fields[3].parse::<f64>().unwrap();
            fields[4].parse::<u64>().unwrap();
            count += 1;
        }
        assert_eq!(count, graph.edges.len());
    }
}
