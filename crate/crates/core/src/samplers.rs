//! Neighbor-selection strategies behind one interface.
//!
//! Four ways to pick `k` of a node's historical neighbors:
//!
//! - [`sample_truncation`]: the k most recent records.
//! - [`sample_uniform`]: a uniformly random size-k subset (seeded partial
//!   Fisher-Yates).
//! - [`NlbBuffer`]: an O(1)-maintenance fixed-size buffer; each arrival
//!   replaces a uniformly random slot with probability k/n, so every past
//!   record survives with equal marginal probability.
//! - [`Scorer`]: the learnable link-aware scorer. Every candidate gets a
//!   scalar relevance score from spatial, temporal, and link context; the
//!   k highest scores win (exact top-k via a bounded heap, ties broken by
//!   a seeded permutation so constant scores degrade to uniform sampling).
//!
//! [`construct_truncation_weights`] and [`construct_uniform_weights`] build
//! scorer parameters that reproduce the two heuristics exactly: the first
//! routes the rank channel through the network so the score is exactly
//! `-rank`, the second zeroes the final layer so every score is 0.

use crate::ctdg::{HistoryStore, NeighborRecord};
use crate::nn::{Linear, LinearInit, Mixer, Mlp, Time2VecLayer};
use crate::optim::ParamStore;
use crate::tape::{Graph, Var};
use crate::tensor::Tensor;
use crate::{NodeId, Time, F};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("unknown strategy `{0}` (expected truncation|uniform|nlb|flash)")]
    UnknownStrategy(String),
    #[error("candidate interaction time {t_u} is not before query time {t}")]
    CandidateNotInPast { t_u: Time, t: Time },
    #[error("edge feature width {got} does not match scorer width {expected}")]
    FeatureWidth { expected: usize, got: usize },
}

/// Selection strategy tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Truncation,
    Uniform,
    Nlb,
    Flash,
}

impl FromStr for Strategy {
    type Err = SamplerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "truncation" => Ok(Strategy::Truncation),
            "uniform" => Ok(Strategy::Uniform),
            "nlb" => Ok(Strategy::Nlb),
            "flash" => Ok(Strategy::Flash),
            other => Err(SamplerError::UnknownStrategy(other.to_string())),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::Truncation => "truncation",
            Strategy::Uniform => "uniform",
            Strategy::Nlb => "nlb",
            Strategy::Flash => "flash",
        };
        write!(f, "{s}")
    }
}

/// Fixed-capacity selection: `k` slots, validity mask, per-slot scores
/// (0 for the heuristics), and the producing strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledNeighborhood {
    pub slots: Vec<NeighborRecord>,
    pub valid: Vec<bool>,
    pub scores: Vec<F>,
    pub strategy: Strategy,
}

impl SampledNeighborhood {
    fn from_selected(selected: Vec<(NeighborRecord, F)>, k: usize, strategy: Strategy) -> Self {
        debug_assert!(selected.len() <= k);
        let pad = NeighborRecord {
            neighbor: 0,
            t: 0.0,
            edge_feat_ref: 0,
        };
        let mut slots = Vec::with_capacity(k);
        let mut valid = Vec::with_capacity(k);
        let mut scores = Vec::with_capacity(k);
        for (rec, score) in &selected {
            slots.push(*rec);
            valid.push(true);
            scores.push(*score);
        }
        while slots.len() < k {
            slots.push(pad);
            valid.push(false);
            scores.push(0.0);
        }
        SampledNeighborhood {
            slots,
            valid,
            scores,
            strategy,
        }
    }

    pub fn num_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Valid records, in slot order.
    pub fn valid_records(&self) -> impl Iterator<Item = &NeighborRecord> {
        self.slots
            .iter()
            .zip(self.valid.iter())
            .filter(|(_, &v)| v)
            .map(|(r, _)| r)
    }
}

/// The `min(k, |H|)` most recent records, most recent first.
pub fn sample_truncation(history: &[NeighborRecord], k: usize) -> SampledNeighborhood {
    let take = k.min(history.len());
    let selected = history.iter().rev().take(take).map(|r| (*r, 0.0)).collect();
    SampledNeighborhood::from_selected(selected, k, Strategy::Truncation)
}

/// A uniformly random size-`min(k, |H|)` subset via partial Fisher-Yates.
pub fn sample_uniform(
    history: &[NeighborRecord],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> SampledNeighborhood {
    let n = history.len();
    let take = k.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..take {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let selected = idx[..take].iter().map(|&i| (history[i], 0.0)).collect();
    SampledNeighborhood::from_selected(selected, k, Strategy::Uniform)
}

/// Per-node fixed buffer with O(1) maintenance and O(1) readout.
///
/// The n-th arrival for a node claims a uniformly random slot with
/// probability k/n (first k arrivals append), so at any point each past
/// record is resident with probability k over the arrivals so far.
#[derive(Clone, Debug)]
pub struct NlbBuffer {
    k: usize,
    slots: Vec<Vec<NeighborRecord>>,
    arrivals: Vec<u64>,
}

impl NlbBuffer {
    pub fn new(num_nodes: usize, k: usize) -> Self {
        NlbBuffer {
            k,
            slots: vec![Vec::new(); num_nodes],
            arrivals: vec![0; num_nodes],
        }
    }

    pub fn capacity(&self) -> usize {
        self.k
    }

    pub fn update(&mut self, v: NodeId, record: NeighborRecord, rng: &mut ChaCha8Rng) {
        if v >= self.slots.len() {
            self.slots.resize_with(v + 1, Vec::new);
            self.arrivals.resize(v + 1, 0);
        }
        self.arrivals[v] += 1;
        let buf = &mut self.slots[v];
        if buf.len() < self.k {
            buf.push(record);
        } else {
            let j = rng.random_range(0..self.arrivals[v]) as usize;
            if j < self.k {
                buf[j] = record;
            }
        }
    }

    /// Current buffer contents; no history scan.
    pub fn sample(&self, v: NodeId) -> SampledNeighborhood {
        let selected = self
            .slots
            .get(v)
            .map(|buf| buf.iter().map(|r| (*r, 0.0)).collect())
            .unwrap_or_default();
        SampledNeighborhood::from_selected(selected, self.k, Strategy::Nlb)
    }
}

/// Scorer hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct ScorerConfig {
    pub num_nodes: usize,
    /// Learnable node-feature width.
    pub d_m: usize,
    /// Time2Vec width for each of the delta-t and rank encoders.
    pub d_t: usize,
    /// Common token width after per-token projection.
    pub d_h: usize,
    /// Hidden width of the final scoring MLP.
    pub mlp_hidden: usize,
    /// Dynamic node-feature width (0 when the dataset has none).
    pub d_v: usize,
    /// Edge-feature width.
    pub d_e: usize,
    /// Candidate pool cap: score only the `n` most recent history records.
    /// `None` scores the full history.
    pub n_pool: Option<usize>,
    pub init: LinearInit,
    /// Start the scorer at the recency heuristic: mixers zero-initialized
    /// (identity residual blocks) and the rank channel routed to the output
    /// with weight -1, so initial selection equals most-recent-k while all
    /// paths keep training. Other parameters keep their random init.
    pub recency_init: bool,
}

impl ScorerConfig {
    pub fn new(num_nodes: usize, d_e: usize) -> Self {
        ScorerConfig {
            num_nodes,
            d_m: 16,
            d_t: 8,
            d_h: 64,
            mlp_hidden: 64,
            d_v: 0,
            d_e,
            n_pool: Some(32),
            init: LinearInit::default(),
            recency_init: true,
        }
    }

    fn width_u(&self) -> usize {
        self.d_v + self.d_e + self.d_m
    }

    fn width_endpoint(&self) -> usize {
        2 * self.d_v + self.d_m
    }
}

/// Learnable link-aware neighbor scorer.
///
/// For a candidate neighbor `u` of `v_i` under a query `(v_i, v_j, t)`:
/// the spatial token of `u` concatenates its node features at interaction
/// time, the edge features of the interaction, and its learnable row of M;
/// the endpoint tokens concatenate each endpoint's node features at the
/// interaction and query times with its M row; the temporal token encodes
/// `t - t_u` and the rank of `u`. All four project to a common width, a
/// self mixer fuses (u, temporal), a link mixer fuses (u, v_i, v_j), and a
/// final MLP maps the pair of fused tokens to one scalar. Scoring one
/// candidate never looks at the others.
pub struct Scorer {
    pub cfg: ScorerConfig,
    t2v_dt: Time2VecLayer,
    t2v_rank: Time2VecLayer,
    proj_u: Linear,
    proj_vi: Linear,
    proj_vj: Linear,
    proj_temporal: Linear,
    mixer_self: Mixer,
    mixer_link: Mixer,
    mlp: Mlp,
}

/// A scoring candidate: the record plus its rank in the full history
/// (rank 1 = most recent).
#[derive(Clone, Copy, Debug)]
pub struct Candidate {
    pub record: NeighborRecord,
    pub rank: usize,
}

/// (candidate, score) as produced by the scorer.
pub type ScoredCandidate = (Candidate, F);

impl Scorer {
    /// Register all scorer parameters (prefix `scorer.`), including the
    /// scorer's own learnable node table `scorer.m` (standard normal). The
    /// backbone keeps a separate table, so a frozen scorer is a fully
    /// stationary selection function.
    pub fn register(store: &mut ParamStore<F>, cfg: ScorerConfig, rng: &mut ChaCha8Rng) -> Self {
        store
            .register(
                "scorer.m",
                crate::nn::init_normal(cfg.num_nodes, cfg.d_m, rng),
            )
            .unwrap();
        let t2v_dt = Time2VecLayer::register(store, "scorer.t2v_dt", cfg.d_t, rng).unwrap();
        let t2v_rank = Time2VecLayer::register(store, "scorer.t2v_rank", cfg.d_t, rng).unwrap();
        let proj_u = Linear::register(
            store,
            "scorer.proj_u",
            cfg.width_u(),
            cfg.d_h,
            rng,
            cfg.init,
        );
        let proj_vi = Linear::register(
            store,
            "scorer.proj_vi",
            cfg.width_endpoint(),
            cfg.d_h,
            rng,
            cfg.init,
        );
        let proj_vj = Linear::register(
            store,
            "scorer.proj_vj",
            cfg.width_endpoint(),
            cfg.d_h,
            rng,
            cfg.init,
        );
        let proj_temporal = Linear::register(
            store,
            "scorer.proj_temporal",
            2 * cfg.d_t,
            cfg.d_h,
            rng,
            cfg.init,
        );
        let mixer_self = Mixer::register(store, "scorer.mixer_self", 2, cfg.d_h, rng, cfg.init);
        let mixer_link = Mixer::register(store, "scorer.mixer_link", 3, cfg.d_h, rng, cfg.init);
        let mlp = Mlp::register(
            store,
            "scorer.mlp",
            &[2 * cfg.d_h, cfg.mlp_hidden, 1],
            rng,
            cfg.init,
        );
        if cfg.recency_init {
            apply_recency_prior(store, &cfg);
        }
        Scorer {
            cfg,
            t2v_dt,
            t2v_rank,
            proj_u,
            proj_vi,
            proj_vj,
            proj_temporal,
            mixer_self,
            mixer_link,
            mlp,
        }
    }

    /// Score a batch of candidates on the tape; returns an [n, 1] node.
    ///
    /// Each output row depends only on its own candidate (and the query),
    /// so batched and one-at-a-time scoring agree bit for bit.
    #[allow(clippy::too_many_arguments)]
    pub fn score_candidates(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        history: &HistoryStore,
        v_i: NodeId,
        v_j: NodeId,
        t: Time,
        cands: &[Candidate],
    ) -> Var {
        assert!(
            !cands.is_empty(),
            "score_candidates needs at least one candidate"
        );
        let n = cands.len();
        let m_table = store.value("scorer.m");

        let u_rows: Vec<usize> = cands.iter().map(|c| c.record.neighbor).collect();
        let m_u = g.gather_rows_leaf("scorer.m", m_table, &u_rows);
        let m_vi = g.gather_rows_leaf("scorer.m", m_table, &vec![v_i; n]);
        let m_vj = g.gather_rows_leaf("scorer.m", m_table, &vec![v_j; n]);

        // Spatial token of u: edge features of the interaction next to M(u).
        // Dynamic node features are empty here (d_v = 0).
        let h_u = if self.cfg.d_e > 0 {
            let mut feats = Tensor::zeros(n, self.cfg.d_e);
            for (i, c) in cands.iter().enumerate() {
                feats.add_assign_row(i, history.edge_feat(c.record.edge_feat_ref));
            }
            let fe = g.constant(feats);
            g.concat_cols(&[fe, m_u])
        } else {
            m_u
        };

        let dts: Vec<F> = cands.iter().map(|c| t - c.record.t).collect();
        let ranks: Vec<F> = cands.iter().map(|c| c.rank as F).collect();
        let phi1 = self.t2v_dt.forward(g, store, &dts);
        let phi2 = self.t2v_rank.forward(g, store, &ranks);
        let h_temporal = g.concat_cols(&[phi1, phi2]);

        let p_u = self.proj_u.forward(g, store, h_u);
        let p_vi = self.proj_vi.forward(g, store, m_vi);
        let p_vj = self.proj_vj.forward(g, store, m_vj);
        let p_temporal = self.proj_temporal.forward(g, store, h_temporal);

        let fused_self = self.mixer_self.forward(g, store, &[p_u, p_temporal]);
        let fused_link = self.mixer_link.forward(g, store, &[p_u, p_vi, p_vj]);
        let cat = g.concat_cols(&[fused_self, fused_link]);
        self.mlp.forward(g, store, cat)
    }

    /// Forward-only scores for a candidate list.
    pub fn score_values(
        &self,
        store: &ParamStore<F>,
        history: &HistoryStore,
        v_i: NodeId,
        v_j: NodeId,
        t: Time,
        cands: &[Candidate],
    ) -> Vec<F> {
        if cands.is_empty() {
            return Vec::new();
        }
        let mut g = Graph::new();
        let out = self.score_candidates(&mut g, store, history, v_i, v_j, t, cands);
        g.value(out).data().to_vec()
    }

    /// Candidate pool for a query: the `n_pool` most recent records with
    /// their full-history ranks.
    pub fn candidate_pool(&self, history_slice: &[NeighborRecord]) -> Vec<Candidate> {
        let n = history_slice.len();
        let take = self.cfg.n_pool.map_or(n, |cap| cap.min(n));
        (0..take)
            .map(|back| {
                let idx = n - 1 - back;
                Candidate {
                    record: history_slice[idx],
                    rank: back + 1,
                }
            })
            .collect()
    }

    /// Select the k highest-scoring candidates from a history.
    ///
    /// Tie-break: a seeded random permutation is applied before the partial
    /// sort, so all-equal scores reduce to a uniform random subset. Slots
    /// come out ordered by descending score.
    #[allow(clippy::too_many_arguments)]
    pub fn select(
        &self,
        store: &ParamStore<F>,
        history: &HistoryStore,
        history_slice: &[NeighborRecord],
        v_i: NodeId,
        v_j: NodeId,
        t: Time,
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> SampledNeighborhood {
        let cands = self.candidate_pool(history_slice);
        let scores = self.score_values(store, history, v_i, v_j, t, &cands);
        let scored: Vec<ScoredCandidate> = cands.into_iter().zip(scores).collect();
        select_top_k(&scored, k, rng)
    }
}

#[derive(Clone, Copy, Debug)]
struct HeapEntry {
    score: F,
    perm: u64,
    idx: usize,
}

// "Goodness" order: higher score wins, ties go to the smaller permutation
// key. The reversed heap below keeps its worst element at the root.
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.perm.cmp(&self.perm))
    }
}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}

/// Exact top-k of scored candidates via a bounded heap (O(n log k)); ties
/// broken by a seeded permutation drawn before sorting.
pub fn select_top_k(
    scored: &[ScoredCandidate],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> SampledNeighborhood {
    let n = scored.len();
    // Random permutation as the tie key.
    let mut perm: Vec<u64> = (0..n as u64).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }

    let mut heap: BinaryHeap<std::cmp::Reverse<HeapEntry>> = BinaryHeap::with_capacity(k + 1);
    for (idx, (_, score)) in scored.iter().enumerate() {
        let entry = HeapEntry {
            score: *score,
            perm: perm[idx],
            idx,
        };
        if heap.len() < k {
            heap.push(std::cmp::Reverse(entry));
        } else if let Some(worst) = heap.peek() {
            if entry > worst.0 {
                heap.pop();
                heap.push(std::cmp::Reverse(entry));
            }
        }
    }
    let mut kept: Vec<HeapEntry> = heap.into_iter().map(|r| r.0).collect();
    kept.sort_by(|a, b| b.cmp(a)); // descending score, ascending perm
    let selected: Vec<(NeighborRecord, F)> = kept
        .into_iter()
        .map(|e| (scored[e.idx].0.record, e.score))
        .collect();
    SampledNeighborhood::from_selected(selected, k, Strategy::Flash)
}

/// Score a single candidate, with the precondition checks callers at the
/// store boundary need.
#[allow(clippy::too_many_arguments)]
pub fn flash_score(
    scorer: &Scorer,
    store: &ParamStore<F>,
    history: &HistoryStore,
    u: &NeighborRecord,
    rank: usize,
    v_i: NodeId,
    v_j: NodeId,
    t: Time,
) -> Result<F, SamplerError> {
    if u.t >= t {
        return Err(SamplerError::CandidateNotInPast { t_u: u.t, t });
    }
    let got = history.edge_feat(u.edge_feat_ref).len();
    if got != scorer.cfg.d_e {
        return Err(SamplerError::FeatureWidth {
            expected: scorer.cfg.d_e,
            got,
        });
    }
    let cand = Candidate { record: *u, rank };
    Ok(scorer.score_values(store, history, v_i, v_j, t, &[cand])[0])
}

/// Recency-prior initialization: zero the mixer blocks (identity residual
/// start) and overlay the deterministic rank route of the truncation
/// construction on the otherwise-random parameters. The initial score is
/// dominated by minus the candidate's rank; training reshapes it freely.
fn apply_recency_prior(store: &mut ParamStore<F>, cfg: &ScorerConfig) {
    for mixer in ["mixer_self", "mixer_link"] {
        for part in ["tok_in", "tok_out", "ch_in", "ch_out"] {
            let name = format!("scorer.{mixer}.{part}.w");
            let (r, c) = store.value(&name).shape();
            store.set_value(&name, Tensor::zeros(r, c)).unwrap();
        }
    }
    // Rank encoder linear channel: unit frequency, zero phase.
    let mut omega = store.value("scorer.t2v_rank.omega").clone();
    omega.set(0, 0, 1.0);
    store.set_value("scorer.t2v_rank.omega", omega).unwrap();
    let mut bias = store.value("scorer.t2v_rank.bias").clone();
    bias.set(0, 0, 0.0);
    store.set_value("scorer.t2v_rank.bias", bias).unwrap();
    // Route the rank channel to temporal channel 0, then through one
    // positive hidden unit to the output with weight -1.
    let mut w = store.value("scorer.proj_temporal.w").clone();
    for c in 0..cfg.d_h {
        w.set(cfg.d_t, c, 0.0);
    }
    w.set(cfg.d_t, 0, 1.0);
    store.set_value("scorer.proj_temporal.w", w).unwrap();
    let mut w0 = store.value("scorer.mlp.0.w").clone();
    w0.set(0, 0, 2.0);
    store.set_value("scorer.mlp.0.w", w0).unwrap();
    let mut w1 = store.value("scorer.mlp.1.w").clone();
    w1.set(0, 0, -1.0);
    store.set_value("scorer.mlp.1.w", w1).unwrap();
}

/// Overwrite scorer parameters so the score of every candidate is exactly
/// minus its rank: selection then equals truncation.
///
/// Route: the rank encoder's linear channel passes `r` through, the
/// temporal projection forwards it to channel 0, the mixers reduce to
/// residual pass-through (token/channel mixing zeroed), the self-mixer
/// mean-pool halves it, and the final MLP doubles and negates it.
pub fn construct_truncation_weights(scorer: &Scorer, store: &mut ParamStore<F>) {
    let cfg = &scorer.cfg;
    let zero = |store: &mut ParamStore<F>, name: &str| {
        let (r, c) = store.value(name).shape();
        store.set_value(name, Tensor::zeros(r, c)).unwrap();
    };
    for name in [
        "scorer.t2v_dt.omega",
        "scorer.t2v_dt.bias",
        "scorer.t2v_rank.bias",
        "scorer.proj_u.w",
        "scorer.proj_u.b",
        "scorer.proj_vi.w",
        "scorer.proj_vi.b",
        "scorer.proj_vj.w",
        "scorer.proj_vj.b",
        "scorer.proj_temporal.w",
        "scorer.proj_temporal.b",
        "scorer.mlp.0.w",
        "scorer.mlp.0.b",
        "scorer.mlp.1.w",
        "scorer.mlp.1.b",
    ] {
        zero(store, name);
    }
    for mixer in ["mixer_self", "mixer_link"] {
        for part in ["tok_in", "tok_out", "ch_in", "ch_out"] {
            zero(store, &format!("scorer.{mixer}.{part}.w"));
            zero(store, &format!("scorer.{mixer}.{part}.b"));
        }
    }
    // Rank encoder: linear channel with unit frequency, zero phase.
    let mut omega = Tensor::zeros(1, cfg.d_t);
    omega.set(0, 0, 1.0);
    store.set_value("scorer.t2v_rank.omega", omega).unwrap();
    // Temporal projection: forward the rank channel (input index d_t) to
    // output channel 0.
    let mut w = Tensor::zeros(2 * cfg.d_t, cfg.d_h);
    w.set(cfg.d_t, 0, 1.0);
    store.set_value("scorer.proj_temporal.w", w).unwrap();
    // Self-mixer mean over (u, temporal) leaves r/2 in channel 0; the MLP
    // recovers r through a positive hidden unit and negates it. Ranks are
    // >= 1 so the ReLU never clips.
    let mut w0 = Tensor::zeros(2 * cfg.d_h, cfg.mlp_hidden);
    w0.set(0, 0, 2.0);
    store.set_value("scorer.mlp.0.w", w0).unwrap();
    let mut w1 = Tensor::zeros(cfg.mlp_hidden, 1);
    w1.set(0, 0, -1.0);
    store.set_value("scorer.mlp.1.w", w1).unwrap();
}

/// Zero the final MLP layer: every candidate scores exactly 0, and the
/// permutation tie-break turns selection into uniform sampling. Earlier
/// layers are left untouched.
pub fn construct_uniform_weights(scorer: &Scorer, store: &mut ParamStore<F>) {
    let _ = scorer;
    let (r, _) = store.value("scorer.mlp.1.w").shape();
    store
        .set_value("scorer.mlp.1.w", Tensor::zeros(r, 1))
        .unwrap();
    store
        .set_value("scorer.mlp.1.b", Tensor::zeros(1, 1))
        .unwrap();
}
