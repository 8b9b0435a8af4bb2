//! Resolved run configuration: a flat key=value text format merged with
//! CLI flag overrides (flags win, then the config file, then the
//! `TGSAMPLE_SEED` environment fallback for the seed, then defaults).

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::path::Path;
use tgsample_core::backbone::BackboneVariant;
use tgsample_core::nn::LinearInit;
use tgsample_core::samplers::Strategy;
use tgsample_core::trainer::TrainConfig;

/// Everything a run needs, serializable as `key=value` lines so eval can
/// rebuild the exact training-time model.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub backbone: BackboneVariant,
    pub k: usize,
    /// 0 means score the full history.
    pub n_pool: usize,
    pub d_m: usize,
    pub d_t: usize,
    pub d_h: usize,
    pub mlp_hidden: usize,
    pub d_z: usize,
    pub time_dim: usize,
    pub merge_hidden: usize,
    pub seed: u64,
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub lambda_rank: f64,
    pub batch_size: usize,
    pub inductive_frac: f64,
    pub freeze_scorer: bool,
    /// Epochs with the scorer held at its initial weights.
    pub scorer_warmup: usize,
    /// Epochs over which the scorer step size ramps to full scale.
    pub scorer_ramp: usize,
    /// Learning-rate multiplier for scorer parameters.
    pub scorer_lr_scale: f64,
    /// Start the scorer at the recency heuristic.
    pub recency_init: bool,
    /// `invsqrt` (default) or `literal` for the wider uniform init.
    pub literal_init: bool,
    pub data: Option<String>,
    pub pairs: Option<String>,
    pub synth: Option<String>,
    pub horizon: usize,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            strategy: Strategy::Truncation,
            backbone: BackboneVariant::AttnLite,
            k: 2,
            n_pool: 32,
            d_m: 16,
            d_t: 8,
            d_h: 64,
            mlp_hidden: 64,
            d_z: 32,
            time_dim: 8,
            merge_hidden: 32,
            seed: 0,
            epochs: 100,
            patience: 20,
            lr: 1e-4,
            lambda_rank: 1.0,
            batch_size: 200,
            inductive_frac: 0.10,
            freeze_scorer: false,
            scorer_warmup: 0,
            scorer_ramp: 0,
            scorer_lr_scale: 1.0,
            recency_init: true,
            literal_init: false,
            data: None,
            pairs: None,
            synth: None,
            horizon: 4000,
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.strategy, self.backbone, self.k, self.seed);
        cfg.n_pool = if self.n_pool == 0 {
            None
        } else {
            Some(self.n_pool)
        };
        cfg.d_m = self.d_m;
        cfg.d_t = self.d_t;
        cfg.d_h = self.d_h;
        cfg.mlp_hidden = self.mlp_hidden;
        cfg.d_z = self.d_z;
        cfg.time_dim = self.time_dim;
        cfg.merge_hidden = self.merge_hidden;
        cfg.epochs = self.epochs;
        cfg.patience = self.patience;
        cfg.lr = self.lr;
        cfg.lambda_rank = self.lambda_rank;
        cfg.batch_size = self.batch_size;
        cfg.freeze_scorer = self.freeze_scorer;
        cfg.scorer_warmup = self.scorer_warmup;
        cfg.scorer_ramp = self.scorer_ramp;
        cfg.scorer_lr_scale = self.scorer_lr_scale;
        cfg.recency_init = self.recency_init;
        cfg.init = if self.literal_init {
            LinearInit::SqrtLiteral
        } else {
            LinearInit::InvSqrt
        };
        cfg
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| out.push_str(&format!("{k}={v}\n"));
        push("strategy", self.strategy.to_string());
        push("backbone", self.backbone.to_string());
        push("k", self.k.to_string());
        push("n_pool", self.n_pool.to_string());
        push("d_m", self.d_m.to_string());
        push("d_t", self.d_t.to_string());
        push("d_h", self.d_h.to_string());
        push("mlp_hidden", self.mlp_hidden.to_string());
        push("d_z", self.d_z.to_string());
        push("time_dim", self.time_dim.to_string());
        push("merge_hidden", self.merge_hidden.to_string());
        push("seed", self.seed.to_string());
        push("epochs", self.epochs.to_string());
        push("patience", self.patience.to_string());
        push("lr", self.lr.to_string());
        push("lambda_rank", self.lambda_rank.to_string());
        push("batch_size", self.batch_size.to_string());
        push("inductive_frac", self.inductive_frac.to_string());
        push("freeze_scorer", self.freeze_scorer.to_string());
        push("scorer_warmup", self.scorer_warmup.to_string());
        push("scorer_ramp", self.scorer_ramp.to_string());
        push("scorer_lr_scale", self.scorer_lr_scale.to_string());
        push("recency_init", self.recency_init.to_string());
        push("literal_init", self.literal_init.to_string());
        if let Some(d) = &self.data {
            push("data", d.clone());
        }
        if let Some(p) = &self.pairs {
            push("pairs", p.clone());
        }
        if let Some(s) = &self.synth {
            push("synth", s.clone());
        }
        push("horizon", self.horizon.to_string());
        push("threads", self.threads.to_string());
        out
    }

    pub fn apply_kv(&mut self, kv: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in kv {
            self.apply_one(key, value)
                .with_context(|| format!("config key `{key}` = `{value}`"))?;
        }
        Ok(())
    }

    fn apply_one(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "strategy" => self.strategy = value.parse().map_err(anyhow::Error::msg)?,
            "backbone" => self.backbone = value.parse().map_err(anyhow::Error::msg)?,
            "k" => self.k = value.parse()?,
            "n_pool" => self.n_pool = value.parse()?,
            "d_m" => self.d_m = value.parse()?,
            "d_t" => self.d_t = value.parse()?,
            "d_h" => self.d_h = value.parse()?,
            "mlp_hidden" => self.mlp_hidden = value.parse()?,
            "d_z" => self.d_z = value.parse()?,
            "time_dim" => self.time_dim = value.parse()?,
            "merge_hidden" => self.merge_hidden = value.parse()?,
            "seed" => self.seed = value.parse()?,
            "epochs" => self.epochs = value.parse()?,
            "patience" => self.patience = value.parse()?,
            "lr" => self.lr = value.parse()?,
            "lambda_rank" => self.lambda_rank = value.parse()?,
            "batch_size" => self.batch_size = value.parse()?,
            "inductive_frac" => self.inductive_frac = value.parse()?,
            "freeze_scorer" => self.freeze_scorer = value.parse()?,
            "scorer_warmup" => self.scorer_warmup = value.parse()?,
            "scorer_ramp" => self.scorer_ramp = value.parse()?,
            "scorer_lr_scale" => self.scorer_lr_scale = value.parse()?,
            "recency_init" => self.recency_init = value.parse()?,
            "literal_init" => self.literal_init = value.parse()?,
            "data" => self.data = Some(value.to_string()),
            "pairs" => self.pairs = Some(value.to_string()),
            "synth" => self.synth = Some(value.to_string()),
            "horizon" => self.horizon = value.parse()?,
            "threads" => self.threads = value.parse()?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }
}

pub fn parse_kv_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_kv(&text)
}

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {} is not key=value: `{line}`", i + 1);
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
