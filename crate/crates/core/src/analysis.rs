//! Validation and reporting: Jensen-Shannon distance, capacity audits of
//! finished traces, and heatmap export.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packers::Assignment;
use crate::topology::{NodeId, PairSpace, TopologyConfig};
use crate::trace::TrafficTrace;

const NORMALIZATION_TOL: f64 = 1e-9;

fn check_distribution(name: &str, v: &[f64]) -> Result<()> {
    if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::Domain(format!(
            "{name} has an invalid probability entry {x}"
        )));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Domain(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Jensen-Shannon distance with base-2 logarithms, in `[0, 1]`.
///
/// Both inputs must be probability vectors of equal length.
pub fn jensen_shannon_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Domain(format!(
            "length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    check_distribution("p", p)?;
    check_distribution("q", q)?;
    Ok(js_distance_unchecked(p, q))
}

pub(crate) fn js_distance_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let mut div = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            div += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            div += 0.5 * b * (b / m).log2();
        }
    }
    div.clamp(0.0, 1.0).sqrt()
}

/// Normalize a non-negative weight vector to sum to one.
pub fn normalize(weights: &[u64]) -> Result<Vec<f64>> {
    let total: u128 = weights.iter().map(|&w| w as u128).sum();
    if total == 0 {
        return Err(Error::Domain("total information is zero".into()));
    }
    let total = total as f64;
    Ok(weights.iter().map(|&w| w as f64 / total).collect())
}

/// Per-pair share of the information actually packed.
pub fn generated_node_distribution(assignment: &Assignment) -> Result<Vec<f64>> {
    normalize(&assignment.final_state.actual_info)
}

/// Per-pair information totals recomputed from trace rows.
pub fn trace_pair_info(trace: &TrafficTrace, pair_space: &PairSpace) -> Result<Vec<u64>> {
    let mut info = vec![0u64; pair_space.len()];
    for row in &trace.rows {
        let idx = pair_space.index_of(row.src, row.dst).ok_or_else(|| {
            Error::Domain(format!(
                "flow {} uses pair ({}, {}) outside the pair space",
                row.flow_id, row.src, row.dst
            ))
        })?;
        info[idx] = info[idx].checked_add(row.size).ok_or_else(|| {
            Error::Domain(format!("information on pair {idx} overflows at flow {}", row.flow_id))
        })?;
    }
    Ok(info)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortSide {
    Src,
    Dst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub node: NodeId,
    pub side: PortSide,
    /// Information above the port's capacity over the trace duration.
    pub excess: f64,
}

/// Capacity audit and, when a target is supplied, distance to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub jsd: Option<f64>,
    /// Per node: (src total + dst total) / (node_capacity × duration).
    pub per_node_load: Vec<f64>,
    pub max_port_utilization: f64,
    pub violations: Vec<Violation>,
}

/// Recompute per-port totals from trace rows and compare with port capacity.
///
/// Uses only the rows and the topology; no packer state is consulted.
pub fn audit_capacity(trace: &TrafficTrace, topology: &TopologyConfig) -> Result<MatrixReport> {
    topology.validate()?;
    let n = topology.num_nodes;
    let mut src_total = vec![0u128; n];
    let mut dst_total = vec![0u128; n];
    for row in &trace.rows {
        if row.src >= n || row.dst >= n {
            return Err(Error::Domain(format!(
                "flow {} references a node outside 0..{n}",
                row.flow_id
            )));
        }
        src_total[row.src] += row.size as u128;
        dst_total[row.dst] += row.size as u128;
    }

    let duration = trace.duration();
    let port_cap = topology.port_capacity_exact(duration);
    let node_cap = topology.node_capacity * duration;
    let util = |total: u128| {
        if total == 0 {
            0.0
        } else if port_cap > 0.0 {
            total as f64 / port_cap
        } else {
            f64::INFINITY
        }
    };

    let mut violations = Vec::new();
    let mut max_util = 0.0f64;
    let mut per_node_load = Vec::with_capacity(n);
    for node in 0..n {
        for (side, total) in [(PortSide::Src, src_total[node]), (PortSide::Dst, dst_total[node])] {
            max_util = max_util.max(util(total));
            if total as f64 > port_cap {
                violations.push(Violation {
                    node,
                    side,
                    excess: total as f64 - port_cap,
                });
            }
        }
        let both = src_total[node] + dst_total[node];
        per_node_load.push(if both == 0 {
            0.0
        } else if node_cap > 0.0 {
            both as f64 / node_cap
        } else {
            f64::INFINITY
        });
    }

    Ok(MatrixReport {
        jsd: None,
        per_node_load,
        max_port_utilization: max_util,
        violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapFormat {
    Csv,
    Pgm,
}

/// Expand a flattened pair vector into a dense `n × n` matrix with a zero diagonal.
pub fn to_matrix(fractions: &[f64], num_nodes: usize) -> Result<Vec<Vec<f64>>> {
    if fractions.len() != num_nodes * num_nodes.saturating_sub(1) {
        return Err(Error::Domain(format!(
            "{} entries do not form a pair vector for {num_nodes} nodes",
            fractions.len()
        )));
    }
    let mut it = fractions.iter();
    Ok((0..num_nodes)
        .map(|r| {
            (0..num_nodes)
                .map(|c| if r == c { 0.0 } else { *it.next().unwrap() })
                .collect()
        })
        .collect())
}

/// Write a pair vector as a header-less CSV matrix or an 8-bit PGM image.
pub fn export_heatmap(
    fractions: &[f64],
    num_nodes: usize,
    path: impl AsRef<Path>,
    format: HeatmapFormat,
) -> Result<()> {
    let matrix = to_matrix(fractions, num_nodes)?;
    let mut out = BufWriter::new(fs::File::create(path.as_ref())?);
    match format {
        HeatmapFormat::Csv => {
            for row in &matrix {
                let line = row
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                writeln!(out, "{line}")?;
            }
        }
        HeatmapFormat::Pgm => {
            let max = fractions.iter().copied().fold(0.0f64, f64::max);
            write!(out, "P5\n{num_nodes} {num_nodes}\n255\n")?;
            let bytes: Vec<u8> = matrix
                .iter()
                .flatten()
                .map(|&v| {
                    if max > 0.0 {
                        (v / max * 255.0).round().clamp(0.0, 255.0) as u8
                    } else {
                        0
                    }
                })
                .collect();
            out.write_all(&bytes)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a dense `n × n` CSV matrix back into a flattened pair vector.
///
/// Returns the node count and the off-diagonal entries in pair order.
pub fn read_heatmap_csv(path: impl AsRef<Path>) -> Result<(usize, Vec<f64>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_heatmap_csv(&text).map_err(|e| e.at_path(path))
}

pub fn parse_heatmap_csv(text: &str) -> Result<(usize, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>()
                    .map_err(|_| Error::parse(i + 1, format!("not a number: {cell:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::parse(1, "empty matrix"));
    }
    let mut flat = Vec::with_capacity(n * (n - 1));
    for (r, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::parse(
                r + 1,
                format!("expected {n} columns, found {}", row.len()),
            ));
        }
        for (c, &v) in row.iter().enumerate() {
            if r != c {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::parse(r + 1, format!("invalid fraction {v}")));
                }
                flat.push(v);
            }
        }
    }
    Ok((n, flat))
}
