//! Continuous-time dynamic-graph (CTDG) link prediction with a pluggable
//! historical-neighbor sampling layer.
//!
//! The crate is organized around the sampling strategies used by temporal
//! graph models when they aggregate a node's interaction history:
//!
//! - [`samplers`] — truncation (k most recent), uniform subsets, an O(1)
//!   no-look-back buffer, and a learnable link-aware scorer (`flash`) that
//!   ranks historical neighbors and keeps the top k.
//! - [`ctdg`] — the event stream and per-node history store with strict
//!   "before time t" queries.
//! - [`synthgen`] — deterministic adversarial graph generators on which the
//!   static heuristics provably stall at 50% accuracy while the learnable
//!   scorer does not.
//! - [`tape`] / [`nn`] / [`optim`] — a minimal reverse-mode differentiable
//!   kernel (dense tensors, linear/MLP/mixer layers, Time2Vec, Adam, a
//!   finite-difference gradient checker) that the scorer and backbones are
//!   built on.
//! - [`backbone`] — lightweight aggregators (single-head attention and a
//!   token/channel mixer) plus the pairwise link-probability head.
//! - [`trainer`] — the training loop combining the task loss with the
//!   pairwise ranking loss that supervises the scorer, and the streaming
//!   evaluation driver.
//! - [`metrics`], [`dataio`], [`bench`], [`checkpoint`] — exact ranking
//!   metrics, CSV ingestion and splitting, a throughput harness, and a
//!   manifest+blob checkpoint format.
//!
//! Numeric kernels ([`tensor`], [`tape`], [`nn`], [`optim`], [`metrics`])
//! are generic over the scalar type via [`scalar::Real`]; the graph-domain
//! modules pin `f64` through the aliases below. Training runs in `f64` so
//! the gradient checker is meaningful; `f32` is available for compact
//! checkpoints.

pub mod backbone;
pub mod bench;
pub mod checkpoint;
pub mod ctdg;
pub mod dataio;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod samplers;
pub mod scalar;
pub mod seeds;
pub mod synthgen;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use scalar::Real;

/// Scalar type used by the graph-domain modules (training, sampling, eval).
pub type F = f64;

/// Dense tensor over the default training scalar.
pub type Tensor64 = tensor::Tensor<f64>;
/// Dense tensor over the compact checkpoint scalar.
pub type Tensor32 = tensor::Tensor<f32>;
/// Reverse-mode graph over the default training scalar.
pub type Graph64 = tape::Graph<f64>;
/// Named-parameter store over the default training scalar.
pub type ParamStore64 = optim::ParamStore<f64>;

/// Node identifier (dense, remapped by ingestion).
pub type NodeId = usize;
/// Event timestamp. Datasets with integer ticks cast losslessly.
pub type Time = f64;
