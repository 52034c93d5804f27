//! End-to-end generation: shaping, target construction, packing, trace.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{self, jensen_shannon_distance};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::packers::{Assignment, PackerKind};
use crate::shaping::{shape_flow_set, Shaped};
use crate::targets::{build_node_distribution, TargetLoads};
use crate::topology::{PairSpace, TopologyConfig};
use crate::trace::{FlowRecord, TraceMetadata, TrafficTrace, TOOL_VERSION};

// Independent ChaCha streams per stage, all keyed by the run seed.
const SHAPING_STREAM: u64 = 0;
const NODE_DIST_STREAM: u64 = 1;
const PACKING_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Everything needed to run a packer.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Resolved configuration (no `"auto"` left).
    pub config: RunConfig,
    pub topology: TopologyConfig,
    pub pair_space: PairSpace,
    pub shaped: Shaped,
    pub targets: TargetLoads,
}

/// Stage one plus target construction.
pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    let config = config.resolve()?;
    let topology = config.topology.clone();
    let pair_space = PairSpace::build(&topology)?;

    let shaped = shape_flow_set(
        &config.size_dist,
        &config.iat_spec(),
        config.num_flows(),
        &config.shaping,
        &mut stream(config.seed, SHAPING_STREAM),
    )?;

    let fractions = match &config.node_dist_csv {
        Some(path) => {
            let (n, fr) = analysis::read_heatmap_csv(path)?;
            if n != topology.num_nodes {
                return Err(Error::config(
                    "node_dist_csv",
                    format!("matrix has {n} nodes, topology has {}", topology.num_nodes),
                ));
            }
            let total: f64 = fr.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::config(
                    "node_dist_csv",
                    format!("fractions sum to {total}, not 1"),
                ));
            }
            fr
        }
        None => build_node_distribution(
            &config.node_dist,
            &pair_space,
            &topology,
            &mut stream(config.node_dist_seed(), NODE_DIST_STREAM),
        )?,
    };

    let targets = TargetLoads::new(
        fractions,
        config.overall_load_rate,
        &topology,
        shaped.flows.duration,
    )?;

    Ok(Prepared {
        config,
        topology,
        pair_space,
        shaped,
        targets,
    })
}

#[derive(Debug, Clone)]
pub struct Packed {
    pub packer: PackerKind,
    pub assignment: Assignment,
    /// Wall-clock time spent in the packer alone.
    pub pack_seconds: f64,
    /// Distance between the target and the packed per-pair distribution.
    pub jsd: f64,
}

/// Run one packer on prepared inputs.
pub fn pack(prepared: &Prepared, packer: PackerKind) -> Result<Packed> {
    let mut rng = stream(prepared.config.seed, PACKING_STREAM);
    let start = Instant::now();
    let assignment = packer.pack(
        &prepared.shaped.flows,
        &prepared.targets,
        &prepared.topology,
        &prepared.pair_space,
        &mut rng,
    )?;
    let pack_seconds = start.elapsed().as_secs_f64();
    let generated = analysis::generated_node_distribution(&assignment)?;
    let jsd = jensen_shannon_distance(&prepared.targets.fractions, &generated)?;
    Ok(Packed {
        packer,
        assignment,
        pack_seconds,
        jsd,
    })
}

/// Trace rows for a packed flow set, with a config echo naming `packer`.
pub fn to_trace(prepared: &Prepared, packed: &Packed) -> TrafficTrace {
    let flows = &prepared.shaped.flows;
    let rows = packed
        .assignment
        .pair_of_flow
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let (src, dst) = prepared.pair_space.pair(p);
            FlowRecord {
                flow_id: i,
                arrival_time: flows.arrival_times[i],
                size: flows.sizes[i],
                src,
                dst,
            }
        })
        .collect();
    let mut config = prepared.config.clone();
    config.packer = packed.packer;
    TrafficTrace {
        metadata: Some(TraceMetadata {
            tool_version: TOOL_VERSION.to_string(),
            seed: config.seed,
            config,
        }),
        rows,
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub prepared: Prepared,
    pub packed: Packed,
    pub trace: TrafficTrace,
}

/// Full pipeline with the configured packer.
pub fn generate(config: &RunConfig) -> Result<Generated> {
    let prepared = prepare(config)?;
    let packed = pack(&prepared, prepared.config.packer)?;
    let trace = to_trace(&prepared, &packed);
    Ok(Generated {
        prepared,
        packed,
        trace,
    })
}
