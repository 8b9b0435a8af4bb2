//! Throughput harness: end-to-end prediction rate per sampling strategy,
//! normalized to truncation, plus a sampling-only microbenchmark that
//! exposes each strategy's scaling in history length.
//!
//! Timing uses median-of-5 with one discarded warm-up pass. Content fields
//! (counts, workload descriptor) are deterministic; wall-clock fields are
//! not.

use crate::backbone::BackboneVariant;
use crate::ctdg::{Event, HistoryStore, NeighborRecord};
use crate::dataio::Dataset;
use crate::samplers::{sample_truncation, sample_uniform, NlbBuffer, Strategy};
use crate::seeds::{self, Purpose};
use crate::trainer::{TrainConfig, Trainer};
use crate::F;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("workload too small for stable timing ({got} events < {min})")]
    WorkloadTooSmall { got: usize, min: usize },
    #[error(transparent)]
    Train(#[from] crate::trainer::TrainError),
}

/// Synthetic interaction workload. `repeat_prob` biases destinations toward
/// a source's recent partners and `num_communities` adds drifting cluster
/// structure, which together make recency informative; both at their
/// neutral values (0.0 / 1) give a uniform random stream.
#[derive(Clone, Copy, Debug)]
pub struct WorkloadSpec {
    pub num_nodes: usize,
    pub num_events: usize,
    pub seed: u64,
    pub repeat_prob: f64,
    pub num_communities: usize,
    /// Per-event probability that the source hops to another community.
    pub churn: f64,
}

impl WorkloadSpec {
    pub fn uniform(num_nodes: usize, num_events: usize, seed: u64) -> Self {
        WorkloadSpec {
            num_nodes,
            num_events,
            seed,
            repeat_prob: 0.0,
            num_communities: 1,
            churn: 0.0,
        }
    }
}

/// Generate a workload stream (deterministic per spec).
pub fn generate_workload(spec: &WorkloadSpec) -> Dataset {
    let mut rng = seeds::stream(spec.seed, Purpose::Workload, 0, 0);
    let n = spec.num_nodes;
    let c = spec.num_communities.max(1);
    let mut community: Vec<usize> = (0..n).map(|v| v % c).collect();
    // Power-law-ish activity: weight 1/(i+1) over a shuffled node order.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut cum: Vec<f64> = Vec::with_capacity(n);
    let mut acc = 0.0;
    for i in 0..n {
        acc += 1.0 / (i as f64 + 1.0);
        cum.push(acc);
    }
    let total = acc;
    // Community member lists, kept in sync under churn.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
    for v in 0..n {
        members[community[v]].push(v);
    }
    let mut recent: Vec<Vec<usize>> = vec![Vec::new(); n];

    let mut events = Vec::with_capacity(spec.num_events);
    let mut t = 0.0;
    while events.len() < spec.num_events {
        t += rng.random_range(0.01..1.0);
        let u = total * rng.random::<f64>();
        let src = order[cum.partition_point(|&x| x < u).min(n - 1)];

        if spec.churn > 0.0 && rng.random::<f64>() < spec.churn {
            let old = community[src];
            let new = rng.random_range(0..c);
            if new != old {
                members[old].retain(|&v| v != src);
                members[new].push(src);
                community[src] = new;
            }
        }

        let dst = if !recent[src].is_empty() && rng.random::<f64>() < spec.repeat_prob {
            // Geometric preference for the most recent distinct partners.
            let mut i = 0;
            while i + 1 < recent[src].len() && rng.random::<f64>() < 0.5 {
                i += 1;
            }
            recent[src][recent[src].len() - 1 - i]
        } else {
            let pool = &members[community[src]];
            let mut d = pool[rng.random_range(0..pool.len())];
            let mut guard = 0;
            while d == src && guard < 16 {
                d = pool[rng.random_range(0..pool.len())];
                guard += 1;
            }
            if d == src {
                continue;
            }
            d
        };
        if dst == src {
            continue;
        }
        recent[src].retain(|&v| v != dst);
        recent[src].push(dst);
        if recent[src].len() > 8 {
            recent[src].remove(0);
        }
        recent[dst].retain(|&v| v != src);
        recent[dst].push(src);
        if recent[dst].len() > 8 {
            recent[dst].remove(0);
        }
        events.push(Event::new(src, dst, t));
    }
    Dataset::from_events("workload", events, n)
}

#[derive(Clone, Debug, Serialize)]
pub struct StrategyThroughput {
    pub strategy: String,
    pub edges_per_sec: f64,
    pub wall_ms_median: f64,
    pub relative_to_truncation_pct: f64,
    pub predictions: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MicroRow {
    pub strategy: String,
    pub ns_per_sample_small: f64,
    pub ns_per_sample_large: f64,
    pub history_small: usize,
    pub history_large: usize,
    /// large-time / small-time.
    pub growth_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParallelScaling {
    pub candidates: usize,
    pub single_thread_ns: f64,
    pub multi_thread_ns: f64,
    pub threads: usize,
    pub speedup: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub nodes: usize,
    pub events: usize,
    pub k: usize,
    pub n_pool: Option<usize>,
    pub threads: usize,
    pub throughput: Vec<StrategyThroughput>,
    pub micro: Vec<MicroRow>,
    pub parallel: Option<ParallelScaling>,
}

impl BenchReport {
    /// Human-readable table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "workload: {} nodes, {} events, k={}, threads={}\n",
            self.nodes, self.events, self.k, self.threads
        ));
        out.push_str(&format!(
            "{:<12} {:>14} {:>12} {:>10}\n",
            "strategy", "edges/sec", "wall ms", "rel %"
        ));
        for row in &self.throughput {
            out.push_str(&format!(
                "{:<12} {:>14.1} {:>12.1} {:>9.1}%\n",
                row.strategy, row.edges_per_sec, row.wall_ms_median, row.relative_to_truncation_pct
            ));
        }
        out.push_str(&format!(
            "\nsampling-only: ns/sample at |H|={} vs |H|={}\n",
            self.micro.first().map(|m| m.history_small).unwrap_or(0),
            self.micro.first().map(|m| m.history_large).unwrap_or(0),
        ));
        for m in &self.micro {
            out.push_str(&format!(
                "{:<12} {:>12.1} {:>12.1} {:>8.2}x\n",
                m.strategy, m.ns_per_sample_small, m.ns_per_sample_large, m.growth_ratio
            ));
        }
        if let Some(p) = &self.parallel {
            out.push_str(&format!(
                "\nscoring {} candidates: {:.1} ns single vs {:.1} ns with {} threads ({:.2}x)\n",
                p.candidates, p.single_thread_ns, p.multi_thread_ns, p.threads, p.speedup
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BenchConfig {
    pub k: usize,
    pub n_pool: Option<usize>,
    pub threads: usize,
    pub reps: usize,
    /// Cap on the number of timed predictions per repetition.
    pub predictions: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            k: 2,
            n_pool: Some(10),
            threads: 1,
            reps: 5,
            predictions: 1000,
            seed: 0,
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    xs[xs.len() / 2]
}

/// Measure end-to-end prediction throughput (selection + aggregation +
/// merge) per strategy over a shared workload and one set of backbone
/// weights, plus the sampling-only scaling microbenchmark.
pub fn run_bench(
    ds: &Dataset,
    strategies: &[Strategy],
    cfg: &BenchConfig,
) -> Result<BenchReport, BenchError> {
    const MIN_EVENTS: usize = 10_000;
    if ds.events.len() < MIN_EVENTS {
        return Err(BenchError::WorkloadTooSmall {
            got: ds.events.len(),
            min: MIN_EVENTS,
        });
    }

    // One model per strategy, all sharing the same seed so non-scorer
    // weights coincide; forward passes only.
    let split = crate::dataio::SplitRanges {
        train: 0..ds.events.len() - 2,
        val: ds.events.len() - 2..ds.events.len() - 1,
        test: ds.events.len() - 1..ds.events.len(),
    };

    let mut hist = HistoryStore::new();
    let mut nlb = NlbBuffer::new(ds.num_nodes, cfg.k);
    for (idx, e) in ds.events.iter().enumerate() {
        hist.append_event(e).expect("workload is time-ordered");
        let mut rng = seeds::stream(cfg.seed, Purpose::NlbReplace, 0, idx as u64);
        nlb.update(
            e.src,
            NeighborRecord {
                neighbor: e.dst,
                t: e.t,
                edge_feat_ref: 0,
            },
            &mut rng,
        );
        nlb.update(
            e.dst,
            NeighborRecord {
                neighbor: e.src,
                t: e.t,
                edge_feat_ref: 0,
            },
            &mut rng,
        );
    }
    let t_end = ds.events.last().unwrap().t + 1.0;

    // Probe pairs: the last `predictions` events, predicted at t_end.
    let probes: Vec<(usize, usize, f64, u64)> = ds
        .events
        .iter()
        .enumerate()
        .rev()
        .take(cfg.predictions)
        .map(|(i, e)| (e.src, e.dst, t_end, i as u64))
        .collect();

    let mut throughput = Vec::new();
    let mut trunc_eps = None;
    for &strategy in strategies {
        let mut tc = TrainConfig::new(strategy, BackboneVariant::AttnLite, cfg.k, cfg.seed);
        tc.n_pool = cfg.n_pool;
        tc.d_h = 32;
        tc.mlp_hidden = 32;
        let trainer = Trainer::new(tc, ds.clone(), split.clone(), None)?;
        let nlb_ref = (strategy == Strategy::Nlb).then_some(&nlb);

        let mut times = Vec::with_capacity(cfg.reps);
        for rep in 0..=cfg.reps {
            let started = std::time::Instant::now();
            for &(src, dst, t, key) in &probes {
                let p = trainer.predict_pair(&hist, nlb_ref, src, dst, t, 0, key);
                std::hint::black_box(p);
            }
            if rep > 0 {
                times.push(started.elapsed().as_secs_f64() * 1e3);
            }
        }
        let wall_ms = median(times);
        let eps = probes.len() as f64 / (wall_ms / 1e3);
        if strategy == Strategy::Truncation {
            trunc_eps = Some(eps);
        }
        throughput.push(StrategyThroughput {
            strategy: strategy.to_string(),
            edges_per_sec: eps,
            wall_ms_median: wall_ms,
            relative_to_truncation_pct: 0.0,
            predictions: probes.len(),
        });
    }
    if let Some(base) = trunc_eps {
        for row in &mut throughput {
            row.relative_to_truncation_pct = 100.0 * row.edges_per_sec / base;
        }
    }

    let micro = micro_bench(strategies, cfg);
    let parallel = strategies
        .contains(&Strategy::Flash)
        .then(|| parallel_scaling(cfg, 1000));

    Ok(BenchReport {
        nodes: ds.num_nodes,
        events: ds.events.len(),
        k: cfg.k,
        n_pool: cfg.n_pool,
        threads: cfg.threads,
        throughput,
        micro,
        parallel,
    })
}

/// Time selection alone on single-node histories of two sizes.
pub fn micro_bench(strategies: &[Strategy], cfg: &BenchConfig) -> Vec<MicroRow> {
    let small = 10usize;
    let large = 1000usize;
    strategies
        .iter()
        .map(|&s| {
            let t_small = median((0..5).map(|r| time_sampling(s, small, cfg, r)).collect());
            let t_large = median((0..5).map(|r| time_sampling(s, large, cfg, r)).collect());
            MicroRow {
                strategy: s.to_string(),
                ns_per_sample_small: t_small,
                ns_per_sample_large: t_large,
                history_small: small,
                history_large: large,
                growth_ratio: t_large / t_small,
            }
        })
        .collect()
}

fn build_history(len: usize) -> (HistoryStore, NlbBuffer) {
    let mut hist = HistoryStore::new();
    let mut nlb = NlbBuffer::new(len + 2, 2);
    for i in 0..len {
        let e = Event::new(0, 1 + i, i as f64);
        hist.append_event(&e).expect("ordered");
        let mut rng = seeds::stream(0, Purpose::NlbReplace, 1, i as u64);
        nlb.update(
            0,
            NeighborRecord {
                neighbor: e.dst,
                t: e.t,
                edge_feat_ref: 0,
            },
            &mut rng,
        );
    }
    (hist, nlb)
}

/// ns per sampling call at history length `len`.
fn time_sampling(strategy: Strategy, len: usize, cfg: &BenchConfig, rep: u64) -> f64 {
    let (hist, nlb) = build_history(len);
    let h = hist.history_query(0, len as f64 + 1.0).to_vec();
    // Large-history scorer calls are slow enough that fewer iterations
    // still resolve the timing.
    let iters: usize = if len <= 100 { 2000 } else { 100 };
    let mut rng = seeds::stream(cfg.seed, Purpose::UniformSelection, 100 + rep, len as u64);

    // Scorer with the full history as pool (the microbenchmark measures
    // scaling in |H|, so no cap).
    let scorer_setup = (strategy == Strategy::Flash).then(|| {
        let mut store = crate::optim::ParamStore::new();
        let mut init_rng = seeds::stream(cfg.seed, Purpose::Init, 9, 0);
        let mut scfg = crate::samplers::ScorerConfig::new(len + 2, 0);
        scfg.d_m = 8;
        scfg.d_t = 4;
        scfg.d_h = 16;
        scfg.mlp_hidden = 16;
        scfg.n_pool = None;
        let scorer = crate::samplers::Scorer::register(&mut store, scfg, &mut init_rng);
        (store, scorer)
    });

    let started = std::time::Instant::now();
    for _ in 0..iters {
        let s = match strategy {
            Strategy::Truncation => sample_truncation(&h, cfg.k),
            Strategy::Uniform => sample_uniform(&h, cfg.k, &mut rng),
            Strategy::Nlb => nlb.sample(0),
            Strategy::Flash => {
                let (store, scorer) = scorer_setup.as_ref().unwrap();
                scorer.select(store, &hist, &h, 0, 1, len as f64 + 1.0, cfg.k, &mut rng)
            }
        };
        std::hint::black_box(s.num_valid());
    }
    started.elapsed().as_nanos() as f64 / iters as f64
}

/// Candidate scoring is per-candidate independent; measure chunked parallel
/// scoring against single-thread scoring of one large candidate set.
pub fn parallel_scaling(cfg: &BenchConfig, candidates: usize) -> ParallelScaling {
    let (hist, _) = build_history(candidates);
    let h = hist.history_query(0, candidates as f64 + 1.0).to_vec();
    let mut store = crate::optim::ParamStore::new();
    let mut init_rng = seeds::stream(cfg.seed, Purpose::Init, 10, 0);
    let mut scfg = crate::samplers::ScorerConfig::new(candidates + 2, 0);
    scfg.n_pool = None;
    let scorer = crate::samplers::Scorer::register(&mut store, scfg, &mut init_rng);
    let cands = scorer.candidate_pool(&h);
    let t = candidates as f64 + 1.0;

    let time_with = |pool_threads: usize| -> f64 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(pool_threads)
            .build()
            .unwrap();
        let iters = 20;
        pool.install(|| {
            let started = std::time::Instant::now();
            for _ in 0..iters {
                let scores: Vec<Vec<F>> = cands
                    .par_chunks(64)
                    .map(|chunk| scorer.score_values(&store, &hist, 0, 1, t, chunk))
                    .collect();
                std::hint::black_box(scores.len());
            }
            started.elapsed().as_nanos() as f64 / iters as f64
        })
    };

    let single = time_with(1);
    let threads = cfg.threads.max(2);
    let multi = time_with(threads);
    ParallelScaling {
        candidates,
        single_thread_ns: single,
        multi_thread_ns: multi,
        threads,
        speedup: single / multi,
    }
}
