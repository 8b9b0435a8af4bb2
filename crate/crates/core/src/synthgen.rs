//! Deterministic adversarial-graph generators with matched positive and
//! negative evaluation pairs.
//!
//! Three constructions, each built so that a specific sampling heuristic
//! provably cannot separate positives from their matched negatives:
//!
//! - [`gen_thm1`]: `2k+1` nodes. A hub alternates between two k-node sets
//!   on a 4-phase clock, so its k most recent neighbors look identical at
//!   timestamps whose phases pair up — most-recent-k selection stalls.
//! - [`gen_thm2`]: 3 nodes. The hub alternates partners every tick; the
//!   full-history composition converges to 50/50, so uniform sampling
//!   stalls while the single most recent neighbor decides the next link.
//! - [`gen_lemma1`]: a hub and two destinations where the next destination
//!   toggles per occurrence of the hub's size-N truncated history, so any
//!   N-window predictor is wrong half the time.
//!
//! Simultaneous events in one timestamp are serialized in fixed node order;
//! nothing downstream depends on intra-timestamp order. All generators are
//! pure functions of (spec, seed).

use crate::ctdg::Event;
use crate::seeds::{self, Purpose};
use crate::{NodeId, Time};
use rand::Rng;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("k must be >= 1, got {0}")]
    InvalidK(usize),
    #[error("horizon must be >= {min}, got {got}")]
    InvalidHorizon { min: usize, got: usize },
    #[error("window size must be >= 1, got {0}")]
    InvalidWindow(usize),
}

/// A positive event matched with its negative destination at the same time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPair {
    pub src: NodeId,
    pub pos_dst: NodeId,
    pub neg_dst: NodeId,
    pub t: Time,
}

/// Which construction to generate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    Thm1Cycle,
    Thm2Alternating,
    Lemma1Bipartite,
}

#[derive(Clone, Copy, Debug)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    /// Set size for the cycle construction; window size for the bipartite one.
    pub k: usize,
    pub horizon: usize,
    pub seed: u64,
}

/// Generated stream plus one matched eval pair per event.
#[derive(Clone, Debug)]
pub struct SyntheticGraph {
    pub events: Vec<Event>,
    pub pairs: Vec<EvalPair>,
    pub num_nodes: usize,
    pub bipartite: bool,
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticGraph, SynthError> {
    match spec.kind {
        SyntheticKind::Thm1Cycle => gen_thm1(spec.k, spec.horizon, spec.seed),
        SyntheticKind::Thm2Alternating => gen_thm2(spec.horizon),
        SyntheticKind::Lemma1Bipartite => gen_lemma1(spec.k, spec.horizon),
    }
}

/// 4-phase cycle over sets A and B of size k around hub node 0.
///
/// Nodes: hub = 0, A = 1..=k, B = k+1..=2k. At integer t, the hub interacts
/// with every node of A when `t mod 4` is 1 or 2, and with every node of B
/// when it is 3 or 0. Negatives are drawn (seeded) from the opposite set.
pub fn gen_thm1(k: usize, horizon: usize, seed: u64) -> Result<SyntheticGraph, SynthError> {
    if k < 1 {
        return Err(SynthError::InvalidK(k));
    }
    if horizon < 8 {
        return Err(SynthError::InvalidHorizon {
            min: 8,
            got: horizon,
        });
    }
    let hub: NodeId = 0;
    let a_set: Vec<NodeId> = (1..=k).collect();
    let b_set: Vec<NodeId> = (k + 1..=2 * k).collect();
    let mut rng = seeds::stream(seed, Purpose::Generator, 1, 0);

    let mut events = Vec::with_capacity(k * horizon);
    let mut pairs = Vec::with_capacity(k * horizon);
    for t in 1..=horizon {
        let phase_a = matches!(t % 4, 1 | 2);
        let (actives, others) = if phase_a {
            (&a_set, &b_set)
        } else {
            (&b_set, &a_set)
        };
        for &dst in actives.iter() {
            let neg = others[rng.random_range(0..others.len())];
            events.push(Event::new(hub, dst, t as Time));
            pairs.push(EvalPair {
                src: hub,
                pos_dst: dst,
                neg_dst: neg,
                t: t as Time,
            });
        }
    }
    Ok(SyntheticGraph {
        events,
        pairs,
        num_nodes: 2 * k + 1,
        bipartite: true,
    })
}

/// Strict alternation over 3 nodes: odd t is (a, b), even t is (a, c).
///
/// a = 0, b = 1, c = 2. Each positive is paired with the other destination.
pub fn gen_thm2(horizon: usize) -> Result<SyntheticGraph, SynthError> {
    if horizon < 4 {
        return Err(SynthError::InvalidHorizon {
            min: 4,
            got: horizon,
        });
    }
    let (a, b, c): (NodeId, NodeId, NodeId) = (0, 1, 2);
    let mut events = Vec::with_capacity(horizon);
    let mut pairs = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let (pos, neg) = if t % 2 == 1 { (b, c) } else { (c, b) };
        events.push(Event::new(a, pos, t as Time));
        pairs.push(EvalPair {
            src: a,
            pos_dst: pos,
            neg_dst: neg,
            t: t as Time,
        });
    }
    Ok(SyntheticGraph {
        events,
        pairs,
        num_nodes: 3,
        bipartite: true,
    })
}

/// Bipartite toggle construction: hub 0 against destinations 1 and 2.
///
/// The destination at each step is the one NOT chosen the previous time the
/// hub's size-N truncated destination history equaled the current one.
/// Unseen keys fall back to a cold-start toggle that starts at node 1; the
/// lookup table then remembers the choice per key. Each key's occurrences
/// therefore alternate destinations.
pub fn gen_lemma1(n_window: usize, horizon: usize) -> Result<SyntheticGraph, SynthError> {
    if n_window < 1 {
        return Err(SynthError::InvalidWindow(n_window));
    }
    if horizon < 4 {
        return Err(SynthError::InvalidHorizon {
            min: 4,
            got: horizon,
        });
    }
    let hub: NodeId = 0;
    let (v2, v3): (NodeId, NodeId) = (1, 2);
    let mut table: HashMap<Vec<NodeId>, NodeId> = HashMap::new();
    let mut recent: Vec<NodeId> = Vec::new();
    let mut cold_next = v2;

    let mut events = Vec::with_capacity(horizon);
    let mut pairs = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let key: Vec<NodeId> = {
            let start = recent.len().saturating_sub(n_window);
            recent[start..].to_vec()
        };
        let chosen = match table.get(&key) {
            Some(&prev) => {
                if prev == v2 {
                    v3
                } else {
                    v2
                }
            }
            None => {
                let c = cold_next;
                cold_next = if c == v2 { v3 } else { v2 };
                c
            }
        };
        table.insert(key, chosen);
        recent.push(chosen);
        let other = if chosen == v2 { v3 } else { v2 };
        events.push(Event::new(hub, chosen, t as Time));
        pairs.push(EvalPair {
            src: hub,
            pos_dst: chosen,
            neg_dst: other,
            t: t as Time,
        });
    }
    Ok(SyntheticGraph {
        events,
        pairs,
        num_nodes: 3,
        bipartite: true,
    })
}
