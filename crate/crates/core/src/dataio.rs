//! CSV ingestion, chronological splitting, inductive masking, and negative
//! sampling.
//!
//! The event format is a UTF-8 CSV with `.` decimals and header
//! `src,dst,t[,label][,f0..f{d_e-1}]`. Node ids are remapped to a dense
//! range in order of first appearance; rows are stably sorted by time.
//! Matched eval pairs travel in a second file with header
//! `src,pos_dst,neg_dst,t`, and split boundaries in a manifest of
//! `split,start_index,end_index` lines.

use crate::ctdg::Event;
use crate::seeds::{self, Purpose};
use crate::synthgen::EvalPair;
use crate::{NodeId, Time};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("empty file: {0}")]
    EmptyFile(String),
    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("non-finite feature or timestamp at row {0}")]
    NonFiniteFeature(usize),
    #[error("too few events to split ({got} < {min})")]
    TooFewEvents { got: usize, min: usize },
    #[error("stream cannot be split chronologically (equal-timestamp group spans a boundary)")]
    UnsplittableStream,
    #[error("split fractions must sum to 1")]
    BadFractions,
    #[error("inductive fraction must be in (0, 1)")]
    BadInductiveFraction,
    #[error("inductive mask leaves no evaluation events")]
    EmptyInductiveEval,
    #[error("negative-sampling universe is empty after exclusions")]
    NegativeUniverseEmpty,
    #[error("malformed manifest line {0}")]
    MalformedManifest(usize),
}

/// An in-memory interaction dataset: time-sorted events over dense node ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub events: Vec<Event>,
    pub num_nodes: usize,
    pub d_e: usize,
    /// Dynamic node-feature width; datasets here carry none.
    pub d_v: usize,
    pub bipartite: bool,
    pub name: String,
    /// Destination-side universe when bipartite (sorted, deduped).
    pub item_nodes: Vec<NodeId>,
}

impl Dataset {
    /// Assemble a dataset from already-dense events; detects bipartiteness
    /// by disjoint src/dst universes unless overridden via the field.
    pub fn from_events(name: &str, events: Vec<Event>, num_nodes: usize) -> Self {
        let d_e = events.first().map(|e| e.edge_feat.len()).unwrap_or(0);
        let srcs: BTreeSet<NodeId> = events.iter().map(|e| e.src).collect();
        let dsts: BTreeSet<NodeId> = events.iter().map(|e| e.dst).collect();
        let bipartite = !events.is_empty() && srcs.is_disjoint(&dsts);
        let item_nodes: Vec<NodeId> = dsts.into_iter().collect();
        Dataset {
            events,
            num_nodes,
            d_e,
            d_v: 0,
            bipartite,
            name: name.to_string(),
            item_nodes,
        }
    }
}

/// Chronological split fractions; defaults are 70/15/15 with 10% held-out
/// nodes for the inductive protocol.
#[derive(Clone, Copy, Debug)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub inductive_node_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.70,
            val_frac: 0.15,
            test_frac: 0.15,
            inductive_node_frac: 0.10,
            seed: 0,
        }
    }
}

/// Contiguous index ranges into the time-sorted event list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Load an event CSV. Ids are remapped densely in first-appearance order,
/// rows stably sorted by time.
pub fn load_csv(path: &Path) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(DataError::EmptyFile(path.display().to_string())),
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 3 || cols[0] != "src" || cols[1] != "dst" || cols[2] != "t" {
        return Err(DataError::MalformedRow {
            line: 1,
            reason: format!("header must start with src,dst,t (got `{header}`)"),
        });
    }
    let has_label = cols.get(3) == Some(&"label");
    let feat_start = if has_label { 4 } else { 3 };
    let d_e = cols.len() - feat_start;

    let mut remap: HashMap<u64, NodeId> = HashMap::new();
    let dense = |raw: u64, remap: &mut HashMap<u64, NodeId>| -> NodeId {
        let next = remap.len();
        *remap.entry(raw).or_insert(next)
    };

    let mut events = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != cols.len() {
            return Err(DataError::MalformedRow {
                line: line_no,
                reason: format!("expected {} columns, got {}", cols.len(), fields.len()),
            });
        }
        let parse_u64 = |s: &str| {
            s.parse::<u64>().map_err(|_| DataError::MalformedRow {
                line: line_no,
                reason: format!("bad integer `{s}`"),
            })
        };
        let parse_f64 = |s: &str| {
            s.parse::<f64>().map_err(|_| DataError::MalformedRow {
                line: line_no,
                reason: format!("bad float `{s}`"),
            })
        };
        let src = dense(parse_u64(fields[0])?, &mut remap);
        let dst = dense(parse_u64(fields[1])?, &mut remap);
        let t: Time = parse_f64(fields[2])?;
        let label = if has_label {
            Some(
                fields[3]
                    .parse::<i64>()
                    .map_err(|_| DataError::MalformedRow {
                        line: line_no,
                        reason: format!("bad label `{}`", fields[3]),
                    })?,
            )
        } else {
            None
        };
        let mut edge_feat = Vec::with_capacity(d_e);
        for f in &fields[feat_start..] {
            edge_feat.push(parse_f64(f)?);
        }
        if !t.is_finite() || t < 0.0 || edge_feat.iter().any(|x| !x.is_finite()) {
            return Err(DataError::NonFiniteFeature(line_no));
        }
        events.push(Event {
            src,
            dst,
            t,
            edge_feat,
            label,
        });
    }
    if events.is_empty() {
        return Err(DataError::EmptyFile(path.display().to_string()));
    }
    events.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    let num_nodes = remap.len();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut ds = Dataset::from_events(&name, events, num_nodes);
    ds.d_e = d_e;
    Ok(ds)
}

/// Write a dataset back out; floats print shortest-round-trip so a reload
/// is bit-exact.
pub fn write_csv(path: &Path, ds: &Dataset) -> Result<(), DataError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let has_label = ds.events.iter().any(|e| e.label.is_some());
    let mut header = String::from("src,dst,t");
    if has_label {
        header.push_str(",label");
    }
    for i in 0..ds.d_e {
        header.push_str(&format!(",f{i}"));
    }
    writeln!(out, "{header}")?;
    for e in &ds.events {
        let mut row = format!("{},{},{}", e.src, e.dst, e.t);
        if has_label {
            row.push_str(&format!(",{}", e.label.unwrap_or(0)));
        }
        for f in &e.edge_feat {
            row.push_str(&format!(",{f}"));
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

pub fn write_eval_pairs(path: &Path, pairs: &[EvalPair]) -> Result<(), DataError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "src,pos_dst,neg_dst,t")?;
    for p in pairs {
        writeln!(out, "{},{},{},{}", p.src, p.pos_dst, p.neg_dst, p.t)?;
    }
    Ok(())
}

pub fn load_eval_pairs(path: &Path) -> Result<Vec<EvalPair>, DataError> {
    let file = std::fs::File::open(path)?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 4 {
            return Err(DataError::MalformedRow {
                line: i + 1,
                reason: "eval pair rows have 4 columns".into(),
            });
        }
        let bad = |reason: &str| DataError::MalformedRow {
            line: i + 1,
            reason: reason.into(),
        };
        pairs.push(EvalPair {
            src: f[0].parse().map_err(|_| bad("bad src"))?,
            pos_dst: f[1].parse().map_err(|_| bad("bad pos_dst"))?,
            neg_dst: f[2].parse().map_err(|_| bad("bad neg_dst"))?,
            t: f[3].parse().map_err(|_| bad("bad t"))?,
        });
    }
    Ok(pairs)
}

/// Chronological split by event count. Boundaries never cut an
/// equal-timestamp group; a straddled group goes whole to the earlier
/// split.
pub fn chrono_split(ds: &Dataset, spec: &SplitSpec) -> Result<SplitRanges, DataError> {
    let n = ds.events.len();
    if n < 10 {
        return Err(DataError::TooFewEvents { got: n, min: 10 });
    }
    if (spec.train_frac + spec.val_frac + spec.test_frac - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions);
    }
    // Push a boundary forward past any equal-timestamp group it lands in.
    let snap = |mut b: usize| -> usize {
        while b > 0 && b < n && ds.events[b].t == ds.events[b - 1].t {
            b += 1;
        }
        b.min(n)
    };
    let b1 = snap((spec.train_frac * n as f64).floor() as usize);
    let b2 = snap(b1 + (spec.val_frac * n as f64).floor() as usize);
    if b1 == 0 || b1 >= n || b2 <= b1 || b2 >= n {
        return Err(DataError::UnsplittableStream);
    }
    Ok(SplitRanges {
        train: 0..b1,
        val: b1..b2,
        test: b2..n,
    })
}

/// Inductive protocol: a seeded sample of nodes is marked "new"; train
/// events touching them are dropped and inductive evaluation keeps only
/// val/test events touching at least one new node.
#[derive(Clone, Debug)]
pub struct InductiveMask {
    pub new_nodes: BTreeSet<NodeId>,
    /// Train-split event indices that survive the filter.
    pub train_indices: Vec<usize>,
    /// Val/test event indices touching >= 1 new node.
    pub eval_indices: Vec<usize>,
}

pub fn inductive_mask(
    ds: &Dataset,
    split: &SplitRanges,
    frac: f64,
    seed: u64,
) -> Result<InductiveMask, DataError> {
    if !(0.0..1.0).contains(&frac) || frac <= 0.0 {
        return Err(DataError::BadInductiveFraction);
    }
    let mut rng = seeds::stream(seed, Purpose::InductiveMask, 0, 0);
    let n_new = ((ds.num_nodes as f64) * frac).round().max(1.0) as usize;
    // Partial Fisher-Yates over all node ids.
    let mut ids: Vec<NodeId> = (0..ds.num_nodes).collect();
    for i in 0..n_new.min(ds.num_nodes) {
        let j = rng.random_range(i..ids.len());
        ids.swap(i, j);
    }
    let new_nodes: BTreeSet<NodeId> = ids[..n_new.min(ds.num_nodes)].iter().copied().collect();

    let touches = |e: &Event| new_nodes.contains(&e.src) || new_nodes.contains(&e.dst);
    let train_indices: Vec<usize> = split
        .train
        .clone()
        .filter(|&i| !touches(&ds.events[i]))
        .collect();
    let eval_indices: Vec<usize> = split
        .val
        .clone()
        .chain(split.test.clone())
        .filter(|&i| touches(&ds.events[i]))
        .collect();
    if eval_indices.is_empty() {
        return Err(DataError::EmptyInductiveEval);
    }
    Ok(InductiveMask {
        new_nodes,
        train_indices,
        eval_indices,
    })
}

/// Draw a negative destination for a positive event: same source and time,
/// destination uniform over the destination universe (item side when
/// bipartite, all nodes otherwise) minus the positive destination and the
/// source itself.
pub fn negative_sample(
    positive: &Event,
    ds: &Dataset,
    rng: &mut ChaCha8Rng,
) -> Result<Event, DataError> {
    let pick = |universe_len: usize,
                nth: &dyn Fn(usize) -> NodeId,
                excluded: &mut Vec<NodeId>,
                rng: &mut ChaCha8Rng|
     -> Result<NodeId, DataError> {
        excluded.sort_unstable();
        excluded.dedup();
        // Exclusions that are actually inside the universe, as positions.
        let mut ex_pos: Vec<usize> = Vec::new();
        for i in 0..universe_len {
            if excluded.binary_search(&nth(i)).is_ok() {
                ex_pos.push(i);
            }
        }
        let avail = universe_len - ex_pos.len();
        if avail == 0 {
            return Err(DataError::NegativeUniverseEmpty);
        }
        let mut idx = rng.random_range(0..avail);
        for &p in &ex_pos {
            if idx >= p {
                idx += 1;
            } else {
                break;
            }
        }
        Ok(nth(idx))
    };

    let mut excluded = vec![positive.dst, positive.src];
    let dst = if ds.bipartite {
        let items = &ds.item_nodes;
        pick(items.len(), &|i| items[i], &mut excluded, rng)?
    } else {
        pick(ds.num_nodes, &|i| i, &mut excluded, rng)?
    };
    Ok(Event {
        src: positive.src,
        dst,
        t: positive.t,
        edge_feat: vec![0.0; ds.d_e],
        label: None,
    })
}

/// Write split boundaries as `split,start_index,end_index` lines.
pub fn write_split_manifest(path: &Path, split: &SplitRanges) -> Result<(), DataError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "split,start_index,end_index")?;
    writeln!(out, "train,{},{}", split.train.start, split.train.end)?;
    writeln!(out, "val,{},{}", split.val.start, split.val.end)?;
    writeln!(out, "test,{},{}", split.test.start, split.test.end)?;
    Ok(())
}

pub fn load_split_manifest(path: &Path) -> Result<SplitRanges, DataError> {
    let file = std::fs::File::open(path)?;
    let mut ranges: HashMap<String, Range<usize>> = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        let bad = || DataError::MalformedManifest(i + 1);
        if f.len() != 3 {
            return Err(bad());
        }
        let start = f[1].parse().map_err(|_| bad())?;
        let end = f[2].parse().map_err(|_| bad())?;
        ranges.insert(f[0].to_string(), start..end);
    }
    let get = |k: &str| {
        ranges
            .get(k)
            .cloned()
            .ok_or(DataError::MalformedManifest(0))
    };
    Ok(SplitRanges {
        train: get("train")?,
        val: get("val")?,
        test: get("test")?,
    })
}
