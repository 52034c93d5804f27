//! JSON run configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packers::PackerKind;
use crate::shaping::{DistributionSpec, Family, ShapingParams};
use crate::targets::NodeDistConfig;
use crate::topology::TopologyConfig;

/// Flows generated per squared node count when `num_flows` is `"auto"`.
pub const FLOWS_PER_NODE_SQUARED: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Auto {
    #[serde(rename = "auto")]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FlowCount {
    Count(usize),
    Auto(Auto),
}

impl Default for FlowCount {
    fn default() -> Self {
        FlowCount::Auto(Auto::Auto)
    }
}

impl FlowCount {
    pub fn resolve(self, num_nodes: usize) -> usize {
        match self {
            FlowCount::Count(n) => n,
            FlowCount::Auto(_) => FLOWS_PER_NODE_SQUARED * num_nodes * num_nodes,
        }
    }
}

/// Inter-arrival distribution, or `"auto"` to derive one from the load rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IatDist {
    Spec(DistributionSpec),
    Auto(Auto),
}

impl Default for IatDist {
    fn default() -> Self {
        IatDist::Auto(Auto::Auto)
    }
}

/// Exponential gaps whose mean makes the expected offered load equal
/// `load × aggregate port rate` for flows drawn from `size_dist`.
pub fn calibrated_iat(
    size_dist: &DistributionSpec,
    overall_load_rate: f64,
    topology: &TopologyConfig,
) -> DistributionSpec {
    let mean_gap = size_dist.clamped_mean() / (overall_load_rate * topology.aggregate_capacity_rate());
    DistributionSpec::new(
        Family::Exponential {
            rate: 1.0 / mean_gap,
        },
        mean_gap * 1e-3,
        mean_gap * 20.0,
    )
}

/// Lognormal sizes with median ≈1100 units, clamped to `[1, 1e5]`.
pub fn default_size_dist() -> DistributionSpec {
    DistributionSpec::new(Family::Lognormal { mu: 7.0, sigma: 1.0 }, 1.0, 1e5)
}

fn default_load_rate() -> f64 {
    0.5
}

fn default_packer() -> PackerKind {
    PackerKind::Vectorised
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub topology: TopologyConfig,
    pub node_dist: NodeDistConfig,
    /// Dense `n × n` fraction matrix used verbatim instead of `node_dist`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_dist_csv: Option<PathBuf>,
    pub size_dist: DistributionSpec,
    #[serde(default)]
    pub iat_dist: IatDist,
    #[serde(default = "default_load_rate")]
    pub overall_load_rate: f64,
    #[serde(default)]
    pub num_flows: FlowCount,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_packer")]
    pub packer: PackerKind,
    #[serde(default)]
    pub shaping: ShapingParams,
}

impl RunConfig {
    /// University-style workload on `num_nodes` nodes in four racks at 50% load.
    pub fn university(num_nodes: usize, seed: u64) -> Self {
        Self {
            topology: TopologyConfig {
                num_nodes,
                num_racks: 4,
                node_capacity: 1.0,
            },
            node_dist: NodeDistConfig::university(),
            node_dist_csv: None,
            size_dist: default_size_dist(),
            iat_dist: IatDist::default(),
            overall_load_rate: 0.5,
            num_flows: FlowCount::default(),
            seed,
            packer: PackerKind::Vectorised,
            shaping: ShapingParams::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: None,
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.node_dist.validate()?;
        self.size_dist.validate("size_dist")?;
        if let IatDist::Spec(spec) = &self.iat_dist {
            spec.validate("iat_dist")?;
        }
        if !(self.overall_load_rate > 0.0 && self.overall_load_rate <= 1.0) {
            return Err(Error::config(
                "overall_load_rate",
                format!("{} is outside (0, 1]", self.overall_load_rate),
            ));
        }
        if self.num_flows.resolve(self.topology.num_nodes) < 2 {
            return Err(Error::config("num_flows", "at least two flows are required"));
        }
        self.shaping.validate()
    }

    /// Validate and replace every `"auto"` with its concrete value.
    pub fn resolve(&self) -> Result<Self> {
        self.validate()?;
        let mut out = self.clone();
        out.num_flows = FlowCount::Count(self.num_flows.resolve(self.topology.num_nodes));
        if let IatDist::Auto(_) = out.iat_dist {
            out.iat_dist = IatDist::Spec(calibrated_iat(
                &self.size_dist,
                self.overall_load_rate,
                &self.topology,
            ));
        }
        Ok(out)
    }

    pub fn num_flows(&self) -> usize {
        self.num_flows.resolve(self.topology.num_nodes)
    }

    /// Concrete inter-arrival spec.
    pub fn iat_spec(&self) -> DistributionSpec {
        match &self.iat_dist {
            IatDist::Spec(s) => s.clone(),
            IatDist::Auto(_) => {
                calibrated_iat(&self.size_dist, self.overall_load_rate, &self.topology)
            }
        }
    }

    pub fn node_dist_seed(&self) -> u64 {
        self.node_dist.rng_seed.unwrap_or(self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::from_json(
            r#"{
                "topology": {"num_nodes": 16, "num_racks": 4},
                "node_dist": {"interrack_fraction": 0.7, "skew_node_fraction": 0.2, "skew_load_fraction": 0.55},
                "size_dist": {"family": "lognormal", "mu": 7.0, "sigma": 1.0, "value_bounds": [1.0, 100000.0]},
                "num_flows": "auto",
                "seed": 3
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.num_flows(), 1280);
        assert_eq!(cfg.packer, PackerKind::Vectorised);
        assert_eq!(cfg.topology.node_capacity, 1.0);
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.num_flows, FlowCount::Count(1280));
        assert!(matches!(resolved.iat_dist, IatDist::Spec(_)));
    }

    #[test]
    fn explicit_counts_and_specs() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{
                "topology": {"num_nodes": 4, "num_racks": 2, "node_capacity": 2.0},
                "node_dist": {"interrack_fraction": 0.5, "skew_node_fraction": 0.25, "skew_load_fraction": 0.5},
                "size_dist": {"family": "uniform", "low": 1.0, "high": 1.0, "value_bounds": [1.0, 1.0]},
                "iat_dist": {"family": "exponential", "rate": 2.0, "value_bounds": [0.01, 10.0]},
                "num_flows": 10,
                "packer": "original"
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.num_flows(), 10);
        assert_eq!(cfg.packer, PackerKind::Original);
    }

    #[test]
    fn zero_load_rate_names_field() {
        let mut cfg = RunConfig::university(8, 1);
        cfg.overall_load_rate = 0.0;
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "overall_load_rate"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut v = serde_json::to_value(RunConfig::university(8, 1)).unwrap();
        v["bogus"] = 1.into();
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn calibration_matches_offered_load() {
        let topo = TopologyConfig::new(16, 4, 1.0).unwrap();
        let size = default_size_dist();
        let iat = calibrated_iat(&size, 0.5, &topo);
        let Family::Exponential { rate } = iat.family else {
            panic!("expected exponential")
        };
        // offered load = mean size / mean gap relative to aggregate port rate
        assert_relative_eq!(size.clamped_mean() * rate / topo.aggregate_capacity_rate(), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::university(8, 42).resolve().unwrap();
        let back = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, back);
    }
}
