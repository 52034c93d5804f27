//! Trace CSV format.
//!
//! ```text
//! # tracegen-trace v1
//! # tool_version: 0.1.0
//! # seed: 42
//! # config: {"topology":{...},...}
//! flow_id,arrival_time,size,src,dst
//! 0,0,1523,3,6
//! ```
//!
//! Metadata lines start with `#` so plain CSV readers can skip them. The
//! config echo is the fully resolved run configuration.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::topology::NodeId;

pub const FORMAT_LINE: &str = "# tracegen-trace v1";
pub const HEADER: &str = "flow_id,arrival_time,size,src,dst";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRecord {
    pub flow_id: usize,
    pub arrival_time: f64,
    pub size: u64,
    pub src: NodeId,
    pub dst: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMetadata {
    pub tool_version: String,
    pub seed: u64,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficTrace {
    pub metadata: Option<TraceMetadata>,
    pub rows: Vec<FlowRecord>,
}

impl TrafficTrace {
    pub fn from_rows(rows: Vec<FlowRecord>) -> Self {
        Self {
            metadata: None,
            rows,
        }
    }

    /// Time between the first and last arrival.
    pub fn duration(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => b.arrival_time - a.arrival_time,
            _ => 0.0,
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{FORMAT_LINE}")?;
        if let Some(meta) = &self.metadata {
            let config = serde_json::to_string(&meta.config)
                .map_err(|e| Error::Domain(format!("cannot serialize config: {e}")))?;
            writeln!(out, "# tool_version: {}", meta.tool_version)?;
            writeln!(out, "# seed: {}", meta.seed)?;
            writeln!(out, "# config: {config}")?;
        }
        writeln!(out, "{HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.flow_id, r.arrival_time, r.size, r.src, r.dst
            )?;
        }
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        self.write(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| e.at_path(path))
    }

    /// Parse a trace; errors carry the 1-based line number.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tool_version = None;
        let mut seed = None;
        let mut config = None;
        let mut rows = Vec::new();
        let mut linenos = Vec::new();
        let mut seen_header = false;

        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("tool_version:") {
                    tool_version = Some(v.trim().to_string());
                } else if let Some(v) = comment.strip_prefix("seed:") {
                    seed = Some(
                        v.trim()
                            .parse::<u64>()
                            .map_err(|e| Error::parse(lineno, format!("bad seed: {e}")))?,
                    );
                } else if let Some(v) = comment.strip_prefix("config:") {
                    config = Some(
                        serde_json::from_str::<RunConfig>(v.trim())
                            .map_err(|e| Error::parse(lineno, format!("bad config echo: {e}")))?,
                    );
                }
                continue;
            }
            if !seen_header {
                if line.trim() != HEADER {
                    return Err(Error::parse(lineno, format!("expected header {HEADER:?}")));
                }
                seen_header = true;
                continue;
            }
            rows.push(parse_row(line, lineno)?);
            linenos.push(lineno);
        }
        if !seen_header {
            return Err(Error::parse(text.lines().count().max(1), "missing header row"));
        }
        validate_rows(&rows, &linenos)?;

        let metadata = match (tool_version, seed, config) {
            (Some(tool_version), Some(seed), Some(config)) => Some(TraceMetadata {
                tool_version,
                seed,
                config,
            }),
            _ => None,
        };
        Ok(Self { metadata, rows })
    }
}

fn parse_row(line: &str, lineno: usize) -> Result<FlowRecord> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(Error::parse(
            lineno,
            format!("expected 5 fields, found {}", fields.len()),
        ));
    }
    fn field<T: std::str::FromStr>(s: &str, name: &str, lineno: usize) -> Result<T> {
        s.parse()
            .map_err(|_| Error::parse(lineno, format!("invalid {name}: {s:?}")))
    }
    let arrival_time: f64 = field(fields[1], "arrival_time", lineno)?;
    if !arrival_time.is_finite() {
        return Err(Error::parse(lineno, "arrival_time must be finite"));
    }
    Ok(FlowRecord {
        flow_id: field(fields[0], "flow_id", lineno)?,
        arrival_time,
        size: field(fields[2], "size", lineno)?,
        src: field(fields[3], "src", lineno)?,
        dst: field(fields[4], "dst", lineno)?,
    })
}

fn validate_rows(rows: &[FlowRecord], linenos: &[usize]) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        let at = linenos[i];
        if r.flow_id != i {
            return Err(Error::parse(at, format!("expected flow id {i}, found {}", r.flow_id)));
        }
        if r.src == r.dst {
            return Err(Error::parse(at, "src equals dst"));
        }
        if i > 0 && rows[i - 1].arrival_time > r.arrival_time {
            return Err(Error::parse(at, "arrival time decreases"));
        }
    }
    Ok(())
}
