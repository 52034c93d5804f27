//! Node and rack layout, and the directed source-destination pair space that
//! packing operates over.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node identifier in `0..num_nodes`.
pub type NodeId = usize;

fn default_node_capacity() -> f64 {
    1.0
}

/// Physical layout: `num_nodes` nodes split evenly into `num_racks` racks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub num_nodes: usize,
    pub num_racks: usize,
    /// Full-duplex line rate in information units per time unit.
    #[serde(default = "default_node_capacity")]
    pub node_capacity: f64,
}

impl TopologyConfig {
    pub fn new(num_nodes: usize, num_racks: usize, node_capacity: f64) -> Result<Self> {
        let config = Self {
            num_nodes,
            num_racks,
            node_capacity,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 {
            return Err(Error::config("topology.num_nodes", "must be positive"));
        }
        if self.num_racks == 0 {
            return Err(Error::config("topology.num_racks", "must be positive"));
        }
        if !self.num_nodes.is_multiple_of(self.num_racks) {
            return Err(Error::config(
                "topology.num_racks",
                format!(
                    "{} racks do not evenly divide {} nodes",
                    self.num_racks, self.num_nodes
                ),
            ));
        }
        if !(self.node_capacity.is_finite() && self.node_capacity > 0.0) {
            return Err(Error::config(
                "topology.node_capacity",
                "must be a positive finite number",
            ));
        }
        Ok(())
    }

    pub fn nodes_per_rack(&self) -> usize {
        self.num_nodes / self.num_racks
    }

    /// Rack containing `node`. Racks are contiguous blocks of node ids.
    pub fn rack_of(&self, node: NodeId) -> Result<usize> {
        if node >= self.num_nodes {
            return Err(Error::Domain(format!(
                "node {node} out of range for {} nodes",
                self.num_nodes
            )));
        }
        Ok(node / self.nodes_per_rack())
    }

    /// Port capacity per direction over `duration`, in whole information units.
    ///
    /// Half the line rate is reserved for each of the source and destination
    /// roles. Rounded down so integer ledgers never exceed the real bound.
    pub fn port_capacity(&self, duration: f64) -> u64 {
        (self.port_capacity_exact(duration)).floor() as u64
    }

    pub fn port_capacity_exact(&self, duration: f64) -> f64 {
        self.node_capacity / 2.0 * duration
    }

    /// Sum of one-directional port rates across all nodes.
    pub fn aggregate_capacity_rate(&self) -> f64 {
        self.num_nodes as f64 * (self.node_capacity / 2.0)
    }
}

/// Every directed `(src, dst)` pair with `src != dst`, in row-major order.
#[derive(Debug, Clone)]
pub struct PairSpace {
    num_nodes: usize,
    pairs: Vec<(NodeId, NodeId)>,
    index_of: HashMap<(NodeId, NodeId), usize>,
    by_src: Vec<Vec<usize>>,
    by_dst: Vec<Vec<usize>>,
}

impl PairSpace {
    pub fn build(config: &TopologyConfig) -> Result<Self> {
        config.validate()?;
        let n = config.num_nodes;
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1));
        let mut by_src = vec![Vec::with_capacity(n.saturating_sub(1)); n];
        let mut by_dst = vec![Vec::with_capacity(n.saturating_sub(1)); n];
        for src in 0..n {
            for dst in 0..n {
                if src == dst {
                    continue;
                }
                let idx = pairs.len();
                pairs.push((src, dst));
                by_src[src].push(idx);
                by_dst[dst].push(idx);
            }
        }
        let index_of = pairs.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        Ok(Self {
            num_nodes: n,
            pairs,
            index_of,
            by_src,
            by_dst,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(NodeId, NodeId)] {
        &self.pairs
    }

    pub fn pair(&self, idx: usize) -> (NodeId, NodeId) {
        self.pairs[idx]
    }

    pub fn index_of(&self, src: NodeId, dst: NodeId) -> Option<usize> {
        self.index_of.get(&(src, dst)).copied()
    }

    /// Pair indices whose source is `node`.
    pub fn pairs_by_src(&self, node: NodeId) -> &[usize] {
        &self.by_src[node]
    }

    /// Pair indices whose destination is `node`.
    pub fn pairs_by_dst(&self, node: NodeId) -> &[usize] {
        &self.by_dst[node]
    }
}
