//! `tracegen`: generate, analyze, and benchmark synthetic traffic traces.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use tracegen::analysis::{
    self, audit_capacity, export_heatmap, jensen_shannon_distance, HeatmapFormat,
};
use tracegen::bench::{self, BenchPlan};
use tracegen::config::{FlowCount, RunConfig};
use tracegen::packers::PackerKind;
use tracegen::pipeline;
use tracegen::topology::PairSpace;
use tracegen::trace::TrafficTrace;
use tracegen::Error;

const CONFIG_HELP: &str = "\
Config is a JSON document:
  topology       {num_nodes, num_racks, node_capacity (default 1.0)}
  node_dist      {interrack_fraction, skew_node_fraction, skew_load_fraction, rng_seed?}
  node_dist_csv  optional n×n fraction matrix used instead of node_dist
  size_dist      {family, <params>, value_bounds: [min, max]}
  iat_dist       same shape, or \"auto\" (default): exponential gaps matching the load rate
  overall_load_rate  default 0.5
  num_flows      integer or \"auto\" (default) = 5·num_nodes²
  seed           default 0
  packer         \"vectorised\" (default) or \"original\"
  shaping        {jsd_threshold 0.1, max_attempts 10, num_bins 50}
Families: uniform{low,high}, lognormal{mu,sigma}, pareto{shape,scale},
weibull{shape,scale}, exponential{rate}, multimodal_mixture{components:[{weight,family,...}]}.

Exit codes: 0 success, 1 runtime failure (shaping, packing, capacity violations), 2 config or input error.";

#[derive(Debug, Parser)]
#[command(name = "tracegen", version, about = "Flow-level datacenter traffic trace generator", after_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Shape flows, build targets, pack, and write a trace CSV.
    Generate {
        /// JSON run configuration.
        config: PathBuf,
        /// Output trace CSV.
        #[arg(short, long)]
        out: PathBuf,
        /// Target matrix CSV (defaults to `<out stem>.target.csv`).
        #[arg(long)]
        target_out: Option<PathBuf>,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        racks: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        packer: Option<PackerKind>,
        #[arg(long)]
        flows: Option<usize>,
        #[arg(long)]
        load: Option<f64>,
    },
    /// Audit a trace for capacity violations and compare it with a target matrix.
    Analyze {
        trace: PathBuf,
        /// Dense n×n target fraction CSV.
        target: PathBuf,
        /// Also write the generated matrix as a heatmap (.csv or .pgm).
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// Time both packers over a plan and write result CSVs.
    Bench {
        /// JSON bench plan (all fields optional).
        plan: Option<PathBuf>,
        #[arg(short, long, default_value = "bench-out")]
        out_dir: PathBuf,
        /// Comma-separated node counts overriding the plan.
        #[arg(long, value_delimiter = ',')]
        nodes: Option<Vec<usize>>,
        /// Comma-separated seeds overriding the plan.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Timed runs per packer; the fastest is kept.
        #[arg(long)]
        repeats: Option<usize>,
        /// Run cells concurrently (timings contend for cores).
        #[arg(long)]
        parallel: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            config,
            out,
            target_out,
            nodes,
            racks,
            seed,
            packer,
            flows,
            load,
        } => cmd_generate(
            &config,
            &out,
            target_out.as_deref(),
            Overrides {
                nodes,
                racks,
                seed,
                packer,
                flows,
                load,
            },
        ),
        Command::Analyze {
            trace,
            target,
            heatmap,
        } => cmd_analyze(&trace, &target, heatmap.as_deref()),
        Command::Bench {
            plan,
            out_dir,
            nodes,
            seeds,
            repeats,
            parallel,
        } => cmd_bench(plan.as_deref(), &out_dir, nodes, seeds, repeats, parallel),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

struct Overrides {
    nodes: Option<usize>,
    racks: Option<usize>,
    seed: Option<u64>,
    packer: Option<PackerKind>,
    flows: Option<usize>,
    load: Option<f64>,
}

fn read_config(path: &Path) -> Result<RunConfig, Error> {
    let text = fs::read_to_string(path)?;
    let mut config = RunConfig::from_json(&text).map_err(|e| e.at_path(path))?;
    // relative matrix paths are relative to the config file
    if let Some(csv) = &config.node_dist_csv {
        if csv.is_relative() {
            if let Some(dir) = path.parent() {
                config.node_dist_csv = Some(dir.join(csv));
            }
        }
    }
    Ok(config)
}

fn default_target_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    out.with_file_name(format!("{stem}.target.csv"))
}

fn cmd_generate(
    config_path: &Path,
    out: &Path,
    target_out: Option<&Path>,
    ov: Overrides,
) -> Result<u8, Error> {
    let mut config = read_config(config_path)?;
    if let Some(n) = ov.nodes {
        config.topology.num_nodes = n;
    }
    if let Some(r) = ov.racks {
        config.topology.num_racks = r;
    }
    if let Some(s) = ov.seed {
        config.seed = s;
    }
    if let Some(p) = ov.packer {
        config.packer = p;
    }
    if let Some(f) = ov.flows {
        config.num_flows = FlowCount::Count(f);
    }
    if let Some(l) = ov.load {
        config.overall_load_rate = l;
    }

    let generated = pipeline::generate(&config)?;
    generated.trace.write_file(out)?;
    let target_path = target_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_target_path(out));
    export_heatmap(
        &generated.prepared.targets.fractions,
        generated.prepared.topology.num_nodes,
        &target_path,
        HeatmapFormat::Csv,
    )?;

    let summary = json!({
        "jsd": generated.packed.jsd,
        "pack_seconds": generated.packed.pack_seconds,
        "shaping_attempts": generated.prepared.shaped.attempts,
        "num_flows": generated.trace.rows.len(),
        "packer": generated.packed.packer,
        "trace": out.display().to_string(),
        "target": target_path.display().to_string(),
    });
    println!("{summary}");
    Ok(0)
}

fn cmd_analyze(trace_path: &Path, target_path: &Path, heatmap: Option<&Path>) -> Result<u8, Error> {
    let trace = TrafficTrace::read_file(trace_path)?;
    let (n, target) = analysis::read_heatmap_csv(target_path)?;
    let topology = match &trace.metadata {
        Some(meta) => meta.config.topology.clone(),
        None => {
            return Err(Error::Parse {
                path: Some(trace_path.to_path_buf()),
                line: 1,
                message: "trace has no config echo; topology unknown".into(),
            })
        }
    };
    if topology.num_nodes != n {
        return Err(Error::Domain(format!(
            "target has {n} nodes but the trace topology has {}",
            topology.num_nodes
        )));
    }
    let target = renormalize(target)?;

    let mut report = audit_capacity(&trace, &topology)?;
    let pair_space = PairSpace::build(&topology)?;
    let info = analysis::trace_pair_info(&trace, &pair_space)?;
    if info.iter().any(|&x| x > 0) {
        let generated = analysis::normalize(&info)?;
        report.jsd = Some(jensen_shannon_distance(&target, &generated)?);
        if let Some(path) = heatmap {
            export_heatmap(&generated, n, path, heatmap_format(path))?;
        }
    }
    println!(
        "{}",
        serde_json::to_string(&report).expect("report serializes")
    );
    Ok(if report.violations.is_empty() { 0 } else { 1 })
}

/// Fractions read back from text may drift from 1 by a few ulps per entry.
fn renormalize(v: Vec<f64>) -> Result<Vec<f64>, Error> {
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!("target fractions sum to {total}")));
    }
    Ok(v.into_iter().map(|x| x / total).collect())
}

fn heatmap_format(path: &Path) -> HeatmapFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => HeatmapFormat::Pgm,
        _ => HeatmapFormat::Csv,
    }
}

fn cmd_bench(
    plan_path: Option<&Path>,
    out_dir: &Path,
    nodes: Option<Vec<usize>>,
    seeds: Option<Vec<u64>>,
    repeats: Option<usize>,
    parallel: bool,
) -> Result<u8, Error> {
    let mut plan = match plan_path {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            serde_json::from_str::<BenchPlan>(&text).map_err(|e| Error::Parse {
                path: Some(p.to_path_buf()),
                line: e.line(),
                message: e.to_string(),
            })?
        }
        None => BenchPlan::default(),
    };
    if let Some(n) = nodes {
        plan.node_counts = n;
    }
    if let Some(s) = seeds {
        plan.seeds = s;
    }
    if let Some(r) = repeats {
        plan.repeats = r;
    }
    plan.parallel |= parallel;
    plan.keep_traces = false;

    let result = bench::run_benchmark(&plan)?;
    fs::create_dir_all(out_dir)?;
    bench::write_rows_csv(&result.rows, fs::File::create(out_dir.join("results.csv"))?)?;
    bench::write_summary_csv(&result.summary, fs::File::create(out_dir.join("summary.csv"))?)?;
    for h in &result.heatmaps {
        export_heatmap(
            &h.target,
            h.num_nodes,
            out_dir.join(format!("heatmap_n{}.csv", h.num_nodes)),
            HeatmapFormat::Csv,
        )?;
        if let Some(g) = &h.generated {
            export_heatmap(
                g,
                h.num_nodes,
                out_dir.join(format!("generated_n{}.csv", h.num_nodes)),
                HeatmapFormat::Csv,
            )?;
        }
    }
    let failures: Vec<_> = result
        .rows
        .iter()
        .filter_map(|r| {
            r.error.as_ref().map(|e| {
                json!({"num_nodes": r.num_nodes, "packer": r.packer, "seed": r.seed, "error": e})
            })
        })
        .collect();
    let meta = json!({
        "plan": plan,
        "parallel": result.parallel,
        "note": if result.parallel {
            "cells ran concurrently; pack_seconds include contention between cells"
        } else {
            "cells ran sequentially"
        },
        "failures": failures,
        "tool_version": tracegen::trace::TOOL_VERSION,
    });
    fs::write(
        out_dir.join("bench_meta.json"),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )?;
    println!(
        "{}",
        serde_json::to_string(&result.summary).expect("summary serializes")
    );
    Ok(0)
}
