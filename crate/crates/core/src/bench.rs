//! Packing-time benchmark: both packers on identical inputs across node
//! counts and seeds.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{default_size_dist, FlowCount, IatDist, RunConfig, FLOWS_PER_NODE_SQUARED};
use crate::error::{Error, Result};
use crate::packers::PackerKind;
use crate::pipeline::{self, Prepared};
use crate::shaping::{DistributionSpec, ShapingParams};
use crate::targets::NodeDistConfig;
use crate::topology::TopologyConfig;
use crate::trace::TrafficTrace;

fn default_node_counts() -> Vec<usize> {
    vec![8, 16, 32, 64]
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1]
}
fn default_racks() -> usize {
    4
}
fn default_capacity() -> f64 {
    1.0
}
fn default_load() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_repeats() -> usize {
    1
}
/// Fewer bins than the single-run default: the smallest plans shape only a
/// few hundred flows.
fn bench_shaping() -> ShapingParams {
    ShapingParams {
        num_bins: 20,
        ..ShapingParams::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchPlan {
    #[serde(default = "default_node_counts")]
    pub node_counts: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_racks")]
    pub num_racks: usize,
    #[serde(default = "default_capacity")]
    pub node_capacity: f64,
    #[serde(default = "default_load")]
    pub load_rate: f64,
    #[serde(default = "NodeDistConfig::university")]
    pub profile: NodeDistConfig,
    #[serde(default = "default_size_dist")]
    pub size_dist: DistributionSpec,
    #[serde(default = "bench_shaping")]
    pub shaping: ShapingParams,
    /// Discard one timed run per (node count, packer) before measuring.
    #[serde(default = "default_true")]
    pub warmup: bool,
    /// Timed runs per (node count, seed, packer); the fastest is reported.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Run (node count, seed) jobs concurrently. Timings then contend for cores.
    #[serde(default)]
    pub parallel: bool,
    /// Keep every packed trace in the result.
    #[serde(default)]
    pub keep_traces: bool,
}

impl Default for BenchPlan {
    fn default() -> Self {
        Self {
            node_counts: default_node_counts(),
            seeds: default_seeds(),
            num_racks: default_racks(),
            node_capacity: default_capacity(),
            load_rate: default_load(),
            profile: NodeDistConfig::university(),
            size_dist: default_size_dist(),
            shaping: bench_shaping(),
            warmup: true,
            repeats: default_repeats(),
            parallel: false,
            keep_traces: false,
        }
    }
}

impl BenchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.node_counts.is_empty() {
            return Err(Error::config("node_counts", "must not be empty"));
        }
        if self.node_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("node_counts", "must be strictly increasing"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats", "must be positive"));
        }
        if self.seeds.len() < 2 {
            return Err(Error::config("seeds", "at least two seeds are required"));
        }
        for &n in &self.node_counts {
            self.run_config(n, self.seeds[0]).validate()?;
        }
        Ok(())
    }

    /// Single-run configuration for one (node count, seed) cell.
    pub fn run_config(&self, num_nodes: usize, seed: u64) -> RunConfig {
        RunConfig {
            topology: TopologyConfig {
                num_nodes,
                num_racks: self.num_racks,
                node_capacity: self.node_capacity,
            },
            node_dist: self.profile.clone(),
            node_dist_csv: None,
            size_dist: self.size_dist.clone(),
            iat_dist: IatDist::default(),
            overall_load_rate: self.load_rate,
            num_flows: FlowCount::Count(FLOWS_PER_NODE_SQUARED * num_nodes * num_nodes),
            seed,
            packer: PackerKind::Vectorised,
            shaping: self.shaping.clone(),
        }
    }
}

/// One timed packer run. Failed runs carry no timing or distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub num_nodes: usize,
    pub packer: PackerKind,
    pub seed: u64,
    pub num_flows: usize,
    pub pack_seconds: Option<f64>,
    pub jsd: Option<f64>,
    #[serde(skip)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub num_nodes: usize,
    pub speedup_mean: f64,
    pub speedup_min: f64,
    pub speedup_max: f64,
}

/// Target and generated matrices for the first seed of a node count.
#[derive(Debug, Clone)]
pub struct Heatmap {
    pub num_nodes: usize,
    pub target: Vec<f64>,
    pub generated: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub summary: Vec<SpeedupRow>,
    pub heatmaps: Vec<Heatmap>,
    /// Traces aligned with `rows` when the plan keeps them.
    pub traces: Vec<Option<TrafficTrace>>,
    pub parallel: bool,
}

const PACKERS: [PackerKind; 2] = [PackerKind::Original, PackerKind::Vectorised];

struct Cell {
    rows: Vec<BenchRow>,
    traces: Vec<Option<TrafficTrace>>,
    heatmap: Option<Heatmap>,
}

fn run_cell(plan: &BenchPlan, n: usize, seed: u64, first_seed: bool) -> Cell {
    let num_flows = FLOWS_PER_NODE_SQUARED * n * n;
    let failed = |packer, msg: &str| BenchRow {
        num_nodes: n,
        packer,
        seed,
        num_flows,
        pack_seconds: None,
        jsd: None,
        error: Some(msg.to_string()),
    };

    let prepared: Prepared = match pipeline::prepare(&plan.run_config(n, seed)) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("n={n} seed={seed}: preparation failed: {e}");
            return Cell {
                rows: PACKERS.iter().map(|&k| failed(k, &e.to_string())).collect(),
                traces: vec![None, None],
                heatmap: None,
            };
        }
    };

    if plan.warmup && first_seed {
        for packer in PACKERS {
            let _ = pipeline::pack(&prepared, packer);
        }
    }
    // Repeats alternate between packers so both see the same machine state.
    let mut best: [Option<Result<pipeline::Packed>>; 2] = [None, None];
    for _ in 0..plan.repeats {
        for (slot, packer) in best.iter_mut().zip(PACKERS) {
            if matches!(slot, Some(Err(_))) {
                continue;
            }
            let run = pipeline::pack(&prepared, packer);
            let faster = match (&slot, &run) {
                (Some(Ok(old)), Ok(new)) => new.pack_seconds < old.pack_seconds,
                _ => true,
            };
            if faster {
                *slot = Some(run);
            }
        }
    }

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut generated = None;
    for (packer, outcome) in PACKERS.into_iter().zip(best) {
        match outcome.expect("at least one repeat") {
            Ok(packed) => {
                log::info!(
                    "n={n} seed={seed} {}: {:.4}s, JSD {:.5}",
                    packer.name(),
                    packed.pack_seconds,
                    packed.jsd
                );
                rows.push(BenchRow {
                    num_nodes: n,
                    packer,
                    seed,
                    num_flows,
                    pack_seconds: Some(packed.pack_seconds),
                    jsd: Some(packed.jsd),
                    error: None,
                });
                if packer == PackerKind::Vectorised && first_seed {
                    generated = crate::analysis::generated_node_distribution(&packed.assignment).ok();
                }
                traces.push(
                    plan.keep_traces
                        .then(|| pipeline::to_trace(&prepared, &packed)),
                );
            }
            Err(e) => {
                log::warn!("n={n} seed={seed} {}: {e}", packer.name());
                rows.push(failed(packer, &e.to_string()));
                traces.push(None);
            }
        }
    }
    let heatmap = first_seed.then(|| Heatmap {
        num_nodes: n,
        target: prepared.targets.fractions.clone(),
        generated,
    });
    Cell {
        rows,
        traces,
        heatmap,
    }
}

/// Time both packers for every (node count, seed) in the plan.
pub fn run_benchmark(plan: &BenchPlan) -> Result<BenchResult> {
    plan.validate()?;
    let jobs: Vec<(usize, u64, bool)> = plan
        .node_counts
        .iter()
        .flat_map(|&n| {
            plan.seeds
                .iter()
                .enumerate()
                .map(move |(i, &s)| (n, s, i == 0))
        })
        .collect();

    let cells: Vec<Cell> = if plan.parallel {
        jobs.par_iter()
            .map(|&(n, s, first)| run_cell(plan, n, s, first))
            .collect()
    } else {
        jobs.iter()
            .map(|&(n, s, first)| run_cell(plan, n, s, first))
            .collect()
    };

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut heatmaps = Vec::new();
    for cell in cells {
        rows.extend(cell.rows);
        traces.extend(cell.traces);
        heatmaps.extend(cell.heatmap);
    }
    let summary = summarize(&rows);
    Ok(BenchResult {
        rows,
        summary,
        heatmaps,
        traces,
        parallel: plan.parallel,
    })
}

/// Speedup of the vectorised packer per node count: ratio of mean times,
/// with the per-seed ratio range as the dispersion band.
pub fn summarize(rows: &[BenchRow]) -> Vec<SpeedupRow> {
    let mut by_cell: BTreeMap<(usize, u64), [Option<f64>; 2]> = BTreeMap::new();
    for r in rows {
        let slot = match r.packer {
            PackerKind::Original => 0,
            PackerKind::Vectorised => 1,
        };
        by_cell.entry((r.num_nodes, r.seed)).or_default()[slot] = r.pack_seconds;
    }
    let mut by_n: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for ((n, _), times) in by_cell {
        if let [Some(o), Some(v)] = times {
            by_n.entry(n).or_default().push((o, v));
        }
    }
    by_n.into_iter()
        .filter(|(_, pairs)| !pairs.is_empty())
        .map(|(n, pairs)| {
            let k = pairs.len() as f64;
            let mean_o = pairs.iter().map(|p| p.0).sum::<f64>() / k;
            let mean_v = pairs.iter().map(|p| p.1).sum::<f64>() / k;
            let ratios: Vec<f64> = pairs.iter().map(|(o, v)| o / v).collect();
            SpeedupRow {
                num_nodes: n,
                speedup_mean: mean_o / mean_v,
                speedup_min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
                speedup_max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

/// Write rows as CSV: `num_nodes,packer,seed,num_flows,pack_seconds,jsd`.
pub fn write_rows_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Write the summary as CSV: `num_nodes,speedup_mean,speedup_min,speedup_max`.
pub fn write_summary_csv<W: std::io::Write>(rows: &[SpeedupRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Domain(format!("csv: {other:?}")),
    }
}
