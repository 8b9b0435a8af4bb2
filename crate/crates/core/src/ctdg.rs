//! Event-stream representation and the per-node historical-neighborhood
//! store.
//!
//! A continuous-time dynamic graph is a time-ordered stream of interaction
//! events. For each node the store keeps the records of everyone it
//! interacted with, sorted by time; `history_query(v, t)` returns exactly
//! the records strictly before `t`, which is the multiset the sampling
//! strategies draw from.

use crate::{NodeId, Time};
use thiserror::Error;

/// One timestamped interaction.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub src: NodeId,
    pub dst: NodeId,
    pub t: Time,
    /// Edge feature vector of dimension `d_e` (possibly empty).
    pub edge_feat: Vec<f64>,
    pub label: Option<i64>,
}

impl Event {
    pub fn new(src: NodeId, dst: NodeId, t: Time) -> Self {
        Event {
            src,
            dst,
            t,
            edge_feat: Vec::new(),
            label: None,
        }
    }
}

/// One entry of a node's history: who it interacted with, when, and where
/// the edge features of that interaction live.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborRecord {
    pub neighbor: NodeId,
    pub t: Time,
    /// Index into the owning store's edge-feature table (one row per event).
    pub edge_feat_ref: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum CtdgError {
    #[error("event at t={got} arrived after t={last}; stream must be non-decreasing in time")]
    MonotonicityViolation { last: Time, got: Time },
    #[error("self-loop {0} -> {0} rejected (allow_self_loops is off)")]
    SelfLoop(NodeId),
    #[error("non-finite timestamp or feature in event at t={0}")]
    NonFinite(Time),
    #[error("rank index {index} out of range for {len} records")]
    RankOutOfRange { index: usize, len: usize },
}

/// Per-node append-only history with rank and time queries.
///
/// Single writer; reads are consistent after each append returns. Events are
/// recorded bidirectionally: an interaction (u, v, t) appends v to u's
/// history and u to v's.
#[derive(Clone, Debug, Default)]
pub struct HistoryStore {
    histories: Vec<Vec<NeighborRecord>>,
    edge_feats: Vec<Vec<f64>>,
    last_t: Option<Time>,
    num_events: usize,
    allow_self_loops: bool,
}

impl HistoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_self_loops(mut self, allow: bool) -> Self {
        self.allow_self_loops = allow;
        self
    }

    pub fn num_events(&self) -> usize {
        self.num_events
    }

    /// Feature row recorded for a past event, by `edge_feat_ref`.
    pub fn edge_feat(&self, feat_ref: usize) -> &[f64] {
        &self.edge_feats[feat_ref]
    }

    fn ensure_node(&mut self, v: NodeId) {
        if v >= self.histories.len() {
            self.histories.resize_with(v + 1, Vec::new);
        }
    }

    /// Append one event to both endpoints' histories.
    ///
    /// Fails if the stream goes backwards in time or (by default) on
    /// self-loops. Equal timestamps are fine; insertion order is kept.
    pub fn append_event(&mut self, e: &Event) -> Result<(), CtdgError> {
        if !e.t.is_finite() || e.t < 0.0 || e.edge_feat.iter().any(|x| !x.is_finite()) {
            return Err(CtdgError::NonFinite(e.t));
        }
        if let Some(last) = self.last_t {
            if e.t < last {
                return Err(CtdgError::MonotonicityViolation { last, got: e.t });
            }
        }
        if e.src == e.dst && !self.allow_self_loops {
            return Err(CtdgError::SelfLoop(e.src));
        }
        let feat_ref = self.edge_feats.len();
        self.edge_feats.push(e.edge_feat.clone());
        self.ensure_node(e.src.max(e.dst));
        self.histories[e.src].push(NeighborRecord {
            neighbor: e.dst,
            t: e.t,
            edge_feat_ref: feat_ref,
        });
        self.histories[e.dst].push(NeighborRecord {
            neighbor: e.src,
            t: e.t,
            edge_feat_ref: feat_ref,
        });
        self.last_t = Some(e.t);
        self.num_events += 1;
        Ok(())
    }

    /// All records of `v` strictly before `t`, oldest first.
    ///
    /// Unknown nodes yield an empty slice. Appends never reorder, so the
    /// prefix with `record.t < t` is a contiguous slice.
    pub fn history_query(&self, v: NodeId, t: Time) -> &[NeighborRecord] {
        let Some(records) = self.histories.get(v) else {
            return &[];
        };
        // First index with record.t >= t; everything before is the answer.
        let end = records.partition_point(|r| r.t < t);
        &records[..end]
    }

    /// Full history of `v` (no time cutoff), oldest first.
    pub fn full_history(&self, v: NodeId) -> &[NeighborRecord] {
        self.histories.get(v).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Rank of the record at `u_index` within a time-sorted history slice.
///
/// Rank 1 is the most recent record, rank `len` the oldest; with equal
/// timestamps the later-appended record ranks fresher. Defined this way,
/// scoring a neighbor as minus its rank reproduces most-recent-k selection.
pub fn rank_of(records: &[NeighborRecord], u_index: usize) -> Result<usize, CtdgError> {
    if u_index >= records.len() {
        return Err(CtdgError::RankOutOfRange {
            index: u_index,
            len: records.len(),
        });
    }
    Ok(records.len() - u_index)
}
