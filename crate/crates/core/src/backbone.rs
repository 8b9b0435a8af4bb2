//! Lightweight aggregators and the pairwise link-probability head.
//!
//! Two backbone variants turn a sampled neighborhood into a node embedding:
//!
//! - `attn_lite`: single-head scaled dot-product attention. The query comes
//!   from the node's own embedding (plus a zero time encoding); keys and
//!   values come from each valid slot's embedding, edge features, and the
//!   encoding of `t - t_u`. Permutation-invariant over slots.
//! - `mixer_lite`: token-mix + channel-mix over the k slot embeddings, then
//!   mean-pool. Position-sensitive; invalid slots enter as zero tokens.
//!
//! `time_dim = 0` removes interaction-time encodings entirely, leaving the
//! aggregators functions of the sampled node multiset (and edge features)
//! alone. An empty neighborhood yields a learned default vector.
//! `merge` maps `[z_i || z_j]` through an MLP and a clamped sigmoid to the
//! link probability; the concatenation order makes it asymmetric in (i, j).

use crate::ctdg::HistoryStore;
use crate::nn::{Linear, LinearInit, Mixer, Mlp, Time2VecLayer};
use crate::optim::ParamStore;
use crate::samplers::SampledNeighborhood;
use crate::tape::{Graph, Var};
use crate::tensor::Tensor;
use crate::{NodeId, Time, F};
use rand_chacha::ChaCha8Rng;
use std::str::FromStr;
use thiserror::Error;

pub const PROB_CLAMP: F = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum BackboneError {
    #[error("unknown backbone `{0}` (expected attn_lite|mixer_lite)")]
    UnknownVariant(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackboneVariant {
    AttnLite,
    MixerLite,
}

impl FromStr for BackboneVariant {
    type Err = BackboneError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "attn_lite" => Ok(BackboneVariant::AttnLite),
            "mixer_lite" => Ok(BackboneVariant::MixerLite),
            other => Err(BackboneError::UnknownVariant(other.to_string())),
        }
    }
}

impl std::fmt::Display for BackboneVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackboneVariant::AttnLite => write!(f, "attn_lite"),
            BackboneVariant::MixerLite => write!(f, "mixer_lite"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BackboneConfig {
    pub variant: BackboneVariant,
    /// Embedding width.
    pub d_z: usize,
    /// Width of the interaction-time encoding; 0 disables it and the
    /// aggregator sees node multisets only.
    pub time_dim: usize,
    /// Slot count the aggregator is built for (the sampler's k).
    pub k: usize,
    pub d_m: usize,
    pub d_e: usize,
    pub merge_hidden: usize,
    pub init: LinearInit,
}

impl BackboneConfig {
    pub fn new(variant: BackboneVariant, k: usize, d_m: usize, d_e: usize) -> Self {
        BackboneConfig {
            variant,
            d_z: 32,
            time_dim: 8,
            k,
            d_m,
            d_e,
            merge_hidden: 32,
            init: LinearInit::default(),
        }
    }

    fn slot_width(&self) -> usize {
        self.d_m + self.d_e + self.time_dim
    }

    fn query_width(&self) -> usize {
        self.d_m + self.time_dim
    }
}

enum Variant {
    Attn {
        q_proj: Linear,
        k_proj: Linear,
        v_proj: Linear,
        o_proj: Linear,
    },
    Mixer {
        slot_proj: Linear,
        mixer: Mixer,
        o_proj: Linear,
    },
}

/// Aggregator + merge head. Parameters live under `backbone.`; the node
/// table `nodes.m` is shared with the scorer.
pub struct Backbone {
    pub cfg: BackboneConfig,
    t2v: Option<Time2VecLayer>,
    variant: Variant,
    merge: Mlp,
}

impl Backbone {
    pub fn register(store: &mut ParamStore<F>, cfg: BackboneConfig, rng: &mut ChaCha8Rng) -> Self {
        assert!(
            store.contains("backbone.m") && store.value("backbone.m").cols() == cfg.d_m,
            "register the `backbone.m` node table (width d_m) before the backbone"
        );
        let t2v = if cfg.time_dim > 0 {
            Some(Time2VecLayer::register(store, "backbone.t2v", cfg.time_dim, rng).unwrap())
        } else {
            None
        };
        // Both variants close with a projection over the node's own
        // representation next to the aggregated neighborhood, so the
        // embedding carries the node's identity even when every slot is
        // attention-weight 1 (TGAT-style output FFN).
        let variant = match cfg.variant {
            BackboneVariant::AttnLite => Variant::Attn {
                q_proj: Linear::register(
                    store,
                    "backbone.q",
                    cfg.query_width(),
                    cfg.d_z,
                    rng,
                    cfg.init,
                ),
                k_proj: Linear::register(
                    store,
                    "backbone.k",
                    cfg.slot_width(),
                    cfg.d_z,
                    rng,
                    cfg.init,
                ),
                v_proj: Linear::register(
                    store,
                    "backbone.v",
                    cfg.slot_width(),
                    cfg.d_z,
                    rng,
                    cfg.init,
                ),
                o_proj: Linear::register(
                    store,
                    "backbone.o",
                    cfg.query_width() + cfg.d_z,
                    cfg.d_z,
                    rng,
                    cfg.init,
                ),
            },
            BackboneVariant::MixerLite => Variant::Mixer {
                slot_proj: Linear::register(
                    store,
                    "backbone.slot",
                    cfg.slot_width(),
                    cfg.d_z,
                    rng,
                    cfg.init,
                ),
                mixer: Mixer::register(store, "backbone.mixer", cfg.k, cfg.d_z, rng, cfg.init),
                o_proj: Linear::register(
                    store,
                    "backbone.o",
                    cfg.query_width() + cfg.d_z,
                    cfg.d_z,
                    rng,
                    cfg.init,
                ),
            },
        };
        store
            .register("backbone.default_z", Tensor::zeros(1, cfg.d_z))
            .unwrap();
        let merge = Mlp::register(
            store,
            "backbone.merge",
            &[2 * cfg.d_z, cfg.merge_hidden, 1],
            rng,
            cfg.init,
        );
        Backbone {
            cfg,
            t2v,
            variant,
            merge,
        }
    }

    /// Slot feature rows [n_valid, slot_width] plus the validity pattern.
    fn slot_inputs(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        history: &HistoryStore,
        t: Time,
        s: &SampledNeighborhood,
    ) -> Var {
        let valid: Vec<_> = s.valid_records().collect();
        let n = valid.len();
        let m_rows: Vec<usize> = valid.iter().map(|r| r.neighbor).collect();
        let m_u = g.gather_rows_leaf("backbone.m", store.value("backbone.m"), &m_rows);
        let mut parts = vec![m_u];
        if self.cfg.d_e > 0 {
            let mut feats = Tensor::zeros(n, self.cfg.d_e);
            for (i, r) in valid.iter().enumerate() {
                feats.add_assign_row(i, history.edge_feat(r.edge_feat_ref));
            }
            parts.push(g.constant(feats));
        }
        if let Some(t2v) = &self.t2v {
            let dts: Vec<F> = valid.iter().map(|r| t - r.t).collect();
            parts.push(t2v.forward(g, store, &dts));
        }
        if parts.len() == 1 {
            parts[0]
        } else {
            g.concat_cols(&parts)
        }
    }

    /// Embed `v` at time `t` from its sampled neighborhood: [1, d_z].
    pub fn aggregate(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        history: &HistoryStore,
        v: NodeId,
        t: Time,
        s: &SampledNeighborhood,
    ) -> Var {
        let n_valid = s.num_valid();
        if n_valid == 0 {
            return g.param_leaf("backbone.default_z", store.value("backbone.default_z"));
        }
        let m_v = g.gather_rows_leaf("backbone.m", store.value("backbone.m"), &[v]);
        let own = if let Some(t2v) = &self.t2v {
            let zero_enc = t2v.forward(g, store, &[0.0]);
            g.concat_cols(&[m_v, zero_enc])
        } else {
            m_v
        };
        match &self.variant {
            Variant::Attn {
                q_proj,
                k_proj,
                v_proj,
                o_proj,
            } => {
                let slots = self.slot_inputs(g, store, history, t, s);
                let q = q_proj.forward(g, store, own); // [1, d_z]
                let keys = k_proj.forward(g, store, slots); // [n, d_z]
                let vals = v_proj.forward(g, store, slots); // [n, d_z]
                                                            // Scaled dot-product attention over the valid slots.
                let kt = {
                    // [1, d_z] x [d_z, n]
                    let keys_t = transpose_var(g, keys);
                    g.matmul(q, keys_t)
                };
                let scaled = g.scale(kt, 1.0 / (self.cfg.d_z as F).sqrt());
                let probs = g.masked_softmax_row(scaled, &vec![true; n_valid]);
                let attended = g.matmul(probs, vals); // [1, d_z]
                let cat = g.concat_cols(&[own, attended]);
                o_proj.forward(g, store, cat)
            }
            Variant::Mixer {
                slot_proj,
                mixer,
                o_proj,
            } => {
                let slots = self.slot_inputs(g, store, history, t, s);
                let projected = slot_proj.forward(g, store, slots); // [n, d_z]
                                                                    // One token per slot, invalid slots as zero tokens.
                let mut tokens = Vec::with_capacity(self.cfg.k);
                for i in 0..n_valid {
                    tokens.push(g.gather_rows(projected, &[i]));
                }
                while tokens.len() < self.cfg.k {
                    tokens.push(g.constant(Tensor::zeros(1, self.cfg.d_z)));
                }
                let pooled = mixer.forward(g, store, &tokens);
                let cat = g.concat_cols(&[own, pooled]);
                o_proj.forward(g, store, cat)
            }
        }
    }

    /// Link probability from two embeddings: clamped
    /// `sigmoid(MLP([z_i || z_j]))`, a [1, 1] node in (1e-7, 1 - 1e-7).
    pub fn merge_predict(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        z_i: Var,
        z_j: Var,
    ) -> Var {
        let cat = g.concat_cols(&[z_i, z_j]);
        let logit = self.merge.forward(g, store, cat);
        let p = g.sigmoid(logit);
        g.clamp_unit(p, PROB_CLAMP)
    }
}

// Transpose as a gather-free tape op composition: matmul against nothing is
// not available, so express it via an explicit constant-free path.
fn transpose_var(g: &mut Graph<F>, x: Var) -> Var {
    // Transpose [n, d] -> [d, n] by stacking the n rows as columns.
    let (n, d) = g.value(x).shape();
    let rows: Vec<Var> = (0..n).map(|i| g.gather_rows(x, &[i])).collect();
    let stacked = g.stack_cols(&rows); // [1*d, n]
    debug_assert_eq!(g.value(stacked).shape(), (d, n));
    stacked
}
