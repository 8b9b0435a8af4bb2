//! Command-line driver: synthetic-graph generation, training, evaluation,
//! and the sampling-strategy throughput benchmark.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tgsample_core::bench::{generate_workload, run_bench, BenchConfig, WorkloadSpec};
use tgsample_core::checkpoint;
use tgsample_core::dataio::{self, chrono_split, Dataset, SplitSpec};
use tgsample_core::samplers::Strategy;
use tgsample_core::synthgen::{self, SyntheticKind, SyntheticSpec};
use tgsample_core::trainer::{EpochRecord, EvalMode, EvalSplit, Trainer};

#[derive(Parser)]
#[command(
    name = "tgsample",
    version,
    about = "Temporal-graph link prediction with pluggable neighbor sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Generate a synthetic adversarial graph: events CSV + eval pairs.
    Synth(SynthArgs),
    /// Train a model; writes metrics JSONL, a checkpoint, and the resolved config.
    Train(RunArgs),
    /// Evaluate a saved checkpoint on a split.
    Eval(EvalArgs),
    /// Measure per-strategy prediction throughput and sampling scaling.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Construction: thm1_cycle | thm2_alternating | lemma1_bipartite.
    #[arg(long)]
    synth: String,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 4000)]
    horizon: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for events.csv and pairs.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// key=value config file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Event CSV path (alternative to --synth).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Matched eval-pair CSV for --data.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Synthetic construction to train on instead of --data.
    #[arg(long)]
    synth: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    backbone: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Candidate pool cap for the scorer; 0 scores full histories.
    #[arg(long = "n-pool")]
    n_pool: Option<usize>,
    #[arg(long = "d-m")]
    d_m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long = "lambda-rank")]
    lambda_rank: Option<f64>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long = "time-dim")]
    time_dim: Option<usize>,
    #[arg(long = "d-z")]
    d_z: Option<usize>,
    #[arg(long = "d-h")]
    d_h: Option<usize>,
    #[arg(long = "d-t")]
    d_t: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Mark this fraction of nodes unseen and drop their train edges.
    #[arg(long = "inductive-frac")]
    inductive_frac: Option<f64>,
    /// Also compute inductive metrics (needs --inductive-frac > 0).
    #[arg(long, default_value_t = false)]
    inductive: bool,
    #[arg(long = "freeze-scorer", default_value_t = false)]
    freeze_scorer: bool,
    /// Epochs with the scorer held at its initial weights.
    #[arg(long = "scorer-warmup")]
    scorer_warmup: Option<usize>,
    /// Epochs over which the scorer step size ramps in after warm-up.
    #[arg(long = "scorer-ramp")]
    scorer_ramp: Option<usize>,
    /// Learning-rate multiplier for scorer parameters.
    #[arg(long = "scorer-lr-scale")]
    scorer_lr_scale: Option<f64>,
    /// Disable the scorer's recency-prior initialization.
    #[arg(long = "no-recency-init", default_value_t = false)]
    no_recency_init: bool,
    /// Use the literal wide uniform init instead of 1/sqrt(d_in).
    #[arg(long = "literal-init", default_value_t = false)]
    literal_init: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Save the checkpoint blob as f32 instead of f64.
    #[arg(long = "f32-checkpoint", default_value_t = false)]
    f32_checkpoint: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Training output directory (config.txt + checkpoint/).
    #[arg(long)]
    checkpoint: PathBuf,
    /// val | test.
    #[arg(long, default_value = "test")]
    split: String,
    /// transductive | inductive.
    #[arg(long, default_value = "transductive")]
    mode: String,
    #[arg(long)]
    threads: Option<usize>,
    /// Metrics JSONL output path (defaults next to the checkpoint).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 100_000)]
    events: usize,
    #[arg(long, default_value_t = 500)]
    nodes: usize,
    /// Comma-separated strategies to measure.
    #[arg(long, default_value = "truncation,uniform,nlb,flash")]
    strategies: String,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long = "n-pool", default_value_t = 10)]
    n_pool: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// JSONL report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("TGSAMPLE_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
}

fn seed_or_default(flag: Option<u64>) -> u64 {
    flag.or_else(env_seed).unwrap_or(0)
}

fn parse_synth_kind(name: &str) -> Result<SyntheticKind> {
    match name {
        "thm1_cycle" => Ok(SyntheticKind::Thm1Cycle),
        "thm2_alternating" => Ok(SyntheticKind::Thm2Alternating),
        "lemma1_bipartite" => Ok(SyntheticKind::Lemma1Bipartite),
        other => bail!("unknown synthetic kind `{other}`"),
    }
}

fn init_threads(threads: usize) -> Result<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("thread pool init")?;
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let kind = parse_synth_kind(&args.synth)?;
    let spec = SyntheticSpec {
        kind,
        k: args.k,
        horizon: args.horizon,
        seed: seed_or_default(args.seed),
    };
    let graph = synthgen::generate(&spec)?;
    std::fs::create_dir_all(&args.out)?;
    let ds = Dataset::from_events(&args.synth, graph.events, graph.num_nodes);
    let events_path = args.out.join("events.csv");
    let pairs_path = args.out.join("pairs.csv");
    dataio::write_csv(&events_path, &ds)?;
    dataio::write_eval_pairs(&pairs_path, &graph.pairs)?;
    println!(
        "wrote {} events to {} and {} eval pairs to {}",
        ds.events.len(),
        events_path.display(),
        graph.pairs.len(),
        pairs_path.display()
    );
    Ok(())
}

/// Resolve flags over config file over defaults into one RunConfig.
fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let file_kv = match &args.config {
        Some(path) => {
            let kv = config::parse_kv_file(path)?;
            cfg.apply_kv(&kv)?;
            Some(kv)
        }
        None => None,
    };
    macro_rules! flag {
        ($field:ident) => {
            if let Some(v) = args.$field {
                cfg.$field = v;
            }
        };
    }
    if let Some(s) = &args.strategy {
        cfg.strategy = s.parse().map_err(|e| anyhow!("{e}"))?;
    }
    if let Some(b) = &args.backbone {
        cfg.backbone = b.parse().map_err(|e| anyhow!("{e}"))?;
    }
    flag!(k);
    flag!(n_pool);
    flag!(d_m);
    flag!(d_t);
    flag!(d_h);
    flag!(d_z);
    flag!(time_dim);
    flag!(epochs);
    flag!(patience);
    flag!(lr);
    flag!(lambda_rank);
    flag!(batch_size);
    flag!(inductive_frac);
    flag!(horizon);
    flag!(threads);
    flag!(scorer_warmup);
    flag!(scorer_ramp);
    flag!(scorer_lr_scale);
    if args.freeze_scorer {
        cfg.freeze_scorer = true;
    }
    if args.literal_init {
        cfg.literal_init = true;
    }
    if args.no_recency_init {
        cfg.recency_init = false;
    }
    // Seed precedence: flag, then config file, then env fallback.
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    } else if !file_kv.is_some_and(|kv| kv.contains_key("seed")) {
        if let Some(seed) = env_seed() {
            cfg.seed = seed;
        }
    }
    if let Some(d) = &args.data {
        cfg.data = Some(d.display().to_string());
    }
    if let Some(p) = &args.pairs {
        cfg.pairs = Some(p.display().to_string());
    }
    if let Some(s) = &args.synth {
        cfg.synth = Some(s.clone());
    }
    Ok(cfg)
}

/// Load or generate the dataset a config points at.
fn load_data(cfg: &RunConfig) -> Result<(Dataset, Option<Vec<synthgen::EvalPair>>)> {
    match (&cfg.data, &cfg.synth) {
        (Some(path), None) => {
            let ds = dataio::load_csv(Path::new(path))?;
            let pairs = match &cfg.pairs {
                Some(p) => Some(dataio::load_eval_pairs(Path::new(p))?),
                None => None,
            };
            Ok((ds, pairs))
        }
        (None, Some(kind)) => {
            let spec = SyntheticSpec {
                kind: parse_synth_kind(kind)?,
                k: cfg.k,
                horizon: cfg.horizon,
                seed: cfg.seed,
            };
            let graph = synthgen::generate(&spec)?;
            let ds = Dataset::from_events(kind, graph.events, graph.num_nodes);
            Ok((ds, Some(graph.pairs)))
        }
        (Some(_), Some(_)) => bail!("pass either --data or --synth, not both"),
        (None, None) => bail!("one of --data or --synth is required"),
    }
}

fn write_jsonl(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

fn cmd_train(args: RunArgs) -> Result<()> {
    let cfg = resolve_config(&args)?;
    init_threads(cfg.threads)?;
    let (ds, pairs) = load_data(&cfg)?;
    let split = chrono_split(
        &ds,
        &SplitSpec {
            inductive_node_frac: cfg.inductive_frac,
            seed: cfg.seed,
            ..Default::default()
        },
    )?;

    std::fs::create_dir_all(&args.out)?;
    dataio::write_split_manifest(&args.out.join("split.txt"), &split)?;

    let mut trainer = Trainer::new(cfg.train_config(), ds, split.clone(), pairs)?;
    let mask = if args.inductive {
        let m = dataio::inductive_mask(&trainer.dataset, &split, cfg.inductive_frac, cfg.seed)?;
        trainer.apply_inductive_mask(&m);
        Some(m)
    } else {
        None
    };

    let mut records: Vec<EpochRecord> = Vec::new();
    let summary = trainer.fit(|rec| {
        records.push(rec.clone());
        println!(
            "epoch {:>3} [{}] loss_task={:.4} ap={}",
            rec.epoch,
            rec.split,
            rec.loss_task.unwrap_or(f64::NAN),
            rec.ap
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "-".into()),
        );
    })?;

    let started = std::time::Instant::now();
    let test = trainer.evaluate(EvalSplit::Test, EvalMode::Transductive)?;
    records.push(EpochRecord {
        epoch: summary.best_epoch,
        split: "test".into(),
        loss_task: None,
        loss_rank: None,
        ap: Some(test.ap),
        auc: Some(test.auc),
        acc: Some(test.acc),
        wall_ms: started.elapsed().as_millis(),
    });
    if mask.is_some() {
        let started = std::time::Instant::now();
        let ind = trainer.evaluate(EvalSplit::Test, EvalMode::Inductive)?;
        records.push(EpochRecord {
            epoch: summary.best_epoch,
            split: "test_inductive".into(),
            loss_task: None,
            loss_rank: None,
            ap: Some(ind.ap),
            auc: Some(ind.auc),
            acc: Some(ind.acc),
            wall_ms: started.elapsed().as_millis(),
        });
    }

    write_jsonl(&args.out.join("metrics.jsonl"), &records)?;
    std::fs::write(args.out.join("config.txt"), cfg.to_kv())?;
    let dtype = if args.f32_checkpoint {
        checkpoint::Dtype::F32
    } else {
        checkpoint::Dtype::F64
    };
    checkpoint::save(&trainer.store, &args.out.join("checkpoint"), dtype)?;
    println!(
        "best epoch {} (val ap {:.4}); test ap {:.4} auc {:.4} acc {:.4}",
        summary.best_epoch, summary.best_val_ap, test.ap, test.auc, test.acc
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg_path = args.checkpoint.join("config.txt");
    let mut cfg = RunConfig::default();
    cfg.apply_kv(&config::parse_kv_file(&cfg_path)?)?;
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    init_threads(cfg.threads)?;

    let (ds, pairs) = load_data(&cfg)?;
    let split = chrono_split(
        &ds,
        &SplitSpec {
            inductive_node_frac: cfg.inductive_frac,
            seed: cfg.seed,
            ..Default::default()
        },
    )?;
    let mut trainer = Trainer::new(cfg.train_config(), ds, split.clone(), pairs)?;

    let mode = match args.mode.as_str() {
        "transductive" => EvalMode::Transductive,
        "inductive" => {
            let m = dataio::inductive_mask(&trainer.dataset, &split, cfg.inductive_frac, cfg.seed)?;
            trainer.apply_inductive_mask(&m);
            EvalMode::Inductive
        }
        other => bail!("unknown mode `{other}`"),
    };
    let split_sel = match args.split.as_str() {
        "val" => EvalSplit::Val,
        "test" => EvalSplit::Test,
        other => bail!("unknown split `{other}`"),
    };

    checkpoint::restore_into(&mut trainer.store, &args.checkpoint.join("checkpoint"))?;
    let started = std::time::Instant::now();
    let m = trainer.evaluate(split_sel, mode)?;
    let record = EpochRecord {
        epoch: 0,
        split: format!(
            "{}{}",
            args.split,
            if mode == EvalMode::Inductive {
                "_inductive"
            } else {
                ""
            }
        ),
        loss_task: None,
        loss_rank: None,
        ap: Some(m.ap),
        auc: Some(m.auc),
        acc: Some(m.acc),
        wall_ms: started.elapsed().as_millis(),
    };
    let out = args
        .out
        .unwrap_or_else(|| args.checkpoint.join("eval.jsonl"));
    write_jsonl(&out, &[record])?;
    println!(
        "{} ap {:.4} auc {:.4} acc {:.4} mrr {:.4}",
        args.split, m.ap, m.auc, m.acc, m.mrr
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let seed = seed_or_default(args.seed);
    let strategies: Vec<Strategy> = args
        .strategies
        .split(',')
        .map(|s| s.trim().parse().map_err(|e| anyhow!("{e}")))
        .collect::<Result<_>>()?;
    let threads = if args.threads == 0 {
        rayon::current_num_threads()
    } else {
        args.threads
    };
    let ds = generate_workload(&WorkloadSpec::uniform(args.nodes, args.events, seed));
    let cfg = BenchConfig {
        k: args.k,
        n_pool: if args.n_pool == 0 {
            None
        } else {
            Some(args.n_pool)
        },
        threads,
        reps: 5,
        predictions: 1000,
        seed,
    };
    let report = run_bench(&ds, &strategies, &cfg)?;
    print!("{}", report.render());
    if let Some(path) = args.out {
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(out, "{}", serde_json::to_string(&report)?)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}
