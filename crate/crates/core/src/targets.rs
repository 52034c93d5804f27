//! Target traffic matrix construction and conversion into per-pair
//! information targets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{PairSpace, TopologyConfig};

/// Shape of the target node distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDistConfig {
    /// Share of load on pairs whose endpoints sit in different racks.
    pub interrack_fraction: f64,
    /// Fraction of nodes designated hot.
    pub skew_node_fraction: f64,
    /// Share of load on pairs touching at least one hot node.
    pub skew_load_fraction: f64,
    /// Seed for hot-node selection; falls back to the run seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
}

impl NodeDistConfig {
    /// ≈70% inter-rack traffic, ≈20% of nodes requesting ≈55% of the load.
    pub fn university() -> Self {
        Self {
            interrack_fraction: 0.7,
            skew_node_fraction: 0.2,
            skew_load_fraction: 0.55,
            rng_seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |field: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("node_dist.{field}"), format!("{v} is outside [0, 1]")))
            }
        };
        unit("interrack_fraction", self.interrack_fraction)?;
        unit("skew_load_fraction", self.skew_load_fraction)?;
        if !(self.skew_node_fraction > 0.0 && self.skew_node_fraction <= 1.0) {
            return Err(Error::config(
                "node_dist.skew_node_fraction",
                format!("{} is outside (0, 1]", self.skew_node_fraction),
            ));
        }
        Ok(())
    }

    /// Number of hot nodes, `ceil(skew_node_fraction · n)`.
    pub fn num_hot(&self, num_nodes: usize) -> usize {
        // absorb float noise such as 0.7 * 10 = 7.000000000000001
        let raw = self.skew_node_fraction * num_nodes as f64;
        ((raw - 1e-9).ceil() as usize).clamp(1, num_nodes)
    }
}

/// Load group of a pair: hot/cold crossed with inter/intra-rack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    HotInter = 0,
    HotIntra = 1,
    ColdInter = 2,
    ColdIntra = 3,
}

impl Group {
    pub fn of(hot: bool, inter: bool) -> Self {
        match (hot, inter) {
            (true, true) => Group::HotInter,
            (true, false) => Group::HotIntra,
            (false, true) => Group::ColdInter,
            (false, false) => Group::ColdIntra,
        }
    }
}

/// Pick hot nodes uniformly at random.
pub fn choose_hot_nodes<R: Rng + ?Sized>(
    config: &NodeDistConfig,
    num_nodes: usize,
    rng: &mut R,
) -> Vec<bool> {
    let mut hot = vec![false; num_nodes];
    for i in rand::seq::index::sample(rng, num_nodes, config.num_hot(num_nodes)) {
        hot[i] = true;
    }
    hot
}

/// Build per-pair load fractions, choosing the hot set with `rng`.
pub fn build_node_distribution<R: Rng + ?Sized>(
    config: &NodeDistConfig,
    pair_space: &PairSpace,
    topology: &TopologyConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    config.validate()?;
    let hot = choose_hot_nodes(config, topology.num_nodes, rng);
    node_distribution_for(config, pair_space, topology, &hot)
}

/// Build per-pair load fractions for a given hot set.
///
/// The four group masses satisfy the inter-rack and hot-load marginals. With
/// every group populated the split is the product of the marginals; an empty
/// group pins the single remaining degree of freedom.
pub fn node_distribution_for(
    config: &NodeDistConfig,
    pair_space: &PairSpace,
    topology: &TopologyConfig,
    hot: &[bool],
) -> Result<Vec<f64>> {
    config.validate()?;
    if hot.len() != topology.num_nodes || pair_space.num_nodes() != topology.num_nodes {
        return Err(Error::Domain("pair space and hot set must match the topology".into()));
    }
    let rack = |n: usize| n / topology.nodes_per_rack();
    let groups: Vec<Group> = pair_space
        .pairs()
        .iter()
        .map(|&(s, d)| Group::of(hot[s] || hot[d], rack(s) != rack(d)))
        .collect();
    let mut counts = [0usize; 4];
    for &g in &groups {
        counts[g as usize] += 1;
    }

    let inter = config.interrack_fraction;
    let hot_load = config.skew_load_fraction;
    // Masses parameterized by x = HotInter mass.
    let masses_at = |x: f64| [x, hot_load - x, inter - x, 1.0 - hot_load - inter + x];
    // Value of x that zeroes each group.
    let zero_at = [0.0, hot_load, inter, hot_load + inter - 1.0];

    let mut pinned: Option<f64> = None;
    for g in 0..4 {
        if counts[g] > 0 {
            continue;
        }
        match pinned {
            None => pinned = Some(zero_at[g]),
            Some(x) if (x - zero_at[g]).abs() <= 1e-12 => {}
            Some(_) => {
                return Err(Error::Infeasible(format!(
                    "empty pair groups cannot all carry zero load \
                     (interrack {inter}, hot load {hot_load})"
                )))
            }
        }
    }
    let x = pinned.unwrap_or(inter * hot_load);
    let masses = masses_at(x);
    if masses.iter().any(|&m| m < -1e-12) {
        return Err(Error::Infeasible(format!(
            "interrack fraction {inter} and hot load fraction {hot_load} \
             cannot be realised with the available pair groups"
        )));
    }

    let per_pair: Vec<f64> = (0..4)
        .map(|g| {
            if counts[g] == 0 {
                0.0
            } else {
                masses[g].max(0.0) / counts[g] as f64
            }
        })
        .collect();
    Ok(groups.iter().map(|&g| per_pair[g as usize]).collect())
}

/// Real-valued per-pair information targets over `duration`.
///
/// `target[i] = fractions[i] · load · aggregate_capacity_rate · duration`.
pub fn compute_pair_target_info(
    fractions: &[f64],
    overall_load_rate: f64,
    topology: &TopologyConfig,
    duration: f64,
) -> Result<Vec<f64>> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::Domain(format!("duration must be positive, got {duration}")));
    }
    if !(overall_load_rate > 0.0 && overall_load_rate <= 1.0) {
        return Err(Error::config(
            "overall_load_rate",
            format!("{overall_load_rate} is outside (0, 1]"),
        ));
    }
    let rate = overall_load_rate * topology.aggregate_capacity_rate();
    Ok(fractions.iter().map(|&f| f * rate * duration).collect())
}

/// Per-pair fractions and their integer information targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetLoads {
    pub fractions: Vec<f64>,
    /// Targets rounded half-up to whole information units.
    pub target_info: Vec<u64>,
    pub overall_load_rate: f64,
    pub duration: f64,
}

impl TargetLoads {
    pub fn new(
        fractions: Vec<f64>,
        overall_load_rate: f64,
        topology: &TopologyConfig,
        duration: f64,
    ) -> Result<Self> {
        let sum: f64 = fractions.iter().sum();
        if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "pair fractions must be non-negative and sum to 1 (sum {sum})"
            )));
        }
        let target_info = compute_pair_target_info(&fractions, overall_load_rate, topology, duration)?
            .into_iter()
            .map(|v| (v + 0.5).floor() as u64)
            .collect();
        Ok(Self {
            fractions,
            target_info,
            overall_load_rate,
            duration,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, racks: usize) -> (TopologyConfig, PairSpace) {
        let t = TopologyConfig::new(n, racks, 1.0).unwrap();
        let ps = PairSpace::build(&t).unwrap();
        (t, ps)
    }

    /// Group sums (inter-rack share, hot share) computed straight from the definition.
    fn group_sums(fr: &[f64], ps: &PairSpace, t: &TopologyConfig, hot: &[bool]) -> (f64, f64) {
        let mut inter = 0.0;
        let mut hot_sum = 0.0;
        for (i, &(s, d)) in ps.pairs().iter().enumerate() {
            if t.rack_of(s).unwrap() != t.rack_of(d).unwrap() {
                inter += fr[i];
            }
            if hot[s] || hot[d] {
                hot_sum += fr[i];
            }
        }
        (inter, hot_sum)
    }

    #[test]
    fn single_active_group() {
        let (t, ps) = setup(4, 2);
        let cfg = NodeDistConfig {
            interrack_fraction: 1.0,
            skew_node_fraction: 1.0,
            skew_load_fraction: 1.0,
            rng_seed: None,
        };
        let fr = build_node_distribution(&cfg, &ps, &t, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for (i, &(s, d)) in ps.pairs().iter().enumerate() {
            let expect = if s / 2 != d / 2 { 0.125 } else { 0.0 };
            assert_eq!(fr[i], expect);
        }
    }

    #[test]
    fn university_profile_splits() {
        for n in [8, 64] {
            let (t, ps) = setup(n, 4);
            let cfg = NodeDistConfig::university();
            let hot = choose_hot_nodes(&cfg, n, &mut ChaCha8Rng::seed_from_u64(5));
            assert_eq!(hot.iter().filter(|&&h| h).count(), cfg.num_hot(n));
            let fr = node_distribution_for(&cfg, &ps, &t, &hot).unwrap();
            assert_abs_diff_eq!(fr.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            let (inter, hot_sum) = group_sums(&fr, &ps, &t, &hot);
            assert_abs_diff_eq!(inter, 0.7, epsilon = 1e-6);
            assert_abs_diff_eq!(hot_sum, 0.55, epsilon = 1e-6);
        }
    }

    #[test]
    fn hot_count_rounds_up() {
        let cfg = NodeDistConfig::university();
        assert_eq!(cfg.num_hot(8), 2);
        assert_eq!(cfg.num_hot(64), 13);
        assert_eq!(cfg.num_hot(5), 1);
    }

    #[test]
    fn no_intra_pairs_is_infeasible() {
        let (t, ps) = setup(2, 2);
        let cfg = NodeDistConfig {
            interrack_fraction: 0.9,
            ..NodeDistConfig::university()
        };
        let err = build_node_distribution(&cfg, &ps, &t, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Infeasible(_))));
    }

    #[test]
    fn empty_cold_intra_group_pins_split() {
        // 4 nodes in 2 racks, hot nodes 0 and 2: no cold-cold intra pair
        let (t, ps) = setup(4, 2);
        let cfg = NodeDistConfig {
            interrack_fraction: 0.6,
            skew_node_fraction: 0.5,
            skew_load_fraction: 0.7,
            rng_seed: None,
        };
        let hot = [true, false, true, false];
        let fr = node_distribution_for(&cfg, &ps, &t, &hot).unwrap();
        let (inter, hot_sum) = group_sums(&fr, &ps, &t, &hot);
        assert_abs_diff_eq!(inter, 0.6, epsilon = 1e-9);
        assert_abs_diff_eq!(hot_sum, 0.7, epsilon = 1e-9);
    }

    #[test]
    fn target_formula() {
        // 4 nodes of capacity 4 → aggregate rate 8
        let t = TopologyConfig::new(4, 1, 4.0).unwrap();
        assert_eq!(
            compute_pair_target_info(&[0.5, 0.5], 0.5, &t, 10.0).unwrap(),
            vec![20.0, 20.0]
        );
        let v = compute_pair_target_info(&[0.2, 0.0, 0.8], 0.5, &t, 3.0).unwrap();
        assert_eq!(v[1], 0.0);
        assert_abs_diff_eq!(v.iter().sum::<f64>(), 0.5 * 8.0 * 3.0, epsilon = 1e-12);
        assert!(matches!(
            compute_pair_target_info(&[1.0], 0.5, &t, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn rounding_half_up() {
        let t = TopologyConfig::new(2, 1, 2.0).unwrap();
        // aggregate rate 2, load 1, duration 1 → [0.5, 1.5]
        let tl = TargetLoads::new(vec![0.25, 0.75], 1.0, &t, 1.0).unwrap();
        assert_eq!(tl.target_info, vec![1, 2]);
    }

    proptest! {
        #[test]
        fn group_sums_hold(
            racks in 1usize..5,
            per in 2usize..6,
            inter in 0.0f64..=1.0,
            skew_node in 0.05f64..=0.6,
            skew_load in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let n = racks * per;
            let (t, ps) = setup(n, racks);
            let cfg = NodeDistConfig {
                interrack_fraction: if racks == 1 { 0.0 } else { inter },
                skew_node_fraction: skew_node,
                skew_load_fraction: skew_load,
                rng_seed: None,
            };
            let hot = choose_hot_nodes(&cfg, n, &mut ChaCha8Rng::seed_from_u64(seed));
            match node_distribution_for(&cfg, &ps, &t, &hot) {
                Ok(fr) => {
                    prop_assert!(fr.iter().all(|&f| f >= 0.0));
                    prop_assert!((fr.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    let (i, h) = group_sums(&fr, &ps, &t, &hot);
                    prop_assert!((i - cfg.interrack_fraction).abs() < 1e-6);
                    prop_assert!((h - skew_load).abs() < 1e-6);
                }
                Err(e) => prop_assert!(matches!(e, Error::Infeasible(_))),
            }
        }

        #[test]
        fn doubling_duration_doubles_targets(d in 0.001f64..1e6, seed in any::<u64>()) {
            let (t, ps) = setup(8, 4);
            let fr = build_node_distribution(
                &NodeDistConfig::university(), &ps, &t, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let a = compute_pair_target_info(&fr, 0.5, &t, d).unwrap();
            let b = compute_pair_target_info(&fr, 0.5, &t, 2.0 * d).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(2.0 * x, *y);
            }
        }

        #[test]
        fn rack_preserving_relabel(seed in any::<u64>(), perm_seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let (t, ps) = setup(12, 3);
            let cfg = NodeDistConfig::university();
            let hot = choose_hot_nodes(&cfg, 12, &mut ChaCha8Rng::seed_from_u64(seed));
            let fr = node_distribution_for(&cfg, &ps, &t, &hot).unwrap();

            // shuffle nodes within each rack
            let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
            let mut perm: Vec<usize> = (0..12).collect();
            for rack in perm.chunks_mut(4) {
                rack.shuffle(&mut rng);
            }
            let mut hot2 = vec![false; 12];
            for (old, &new) in perm.iter().enumerate() {
                hot2[new] = hot[old];
            }
            let fr2 = node_distribution_for(&cfg, &ps, &t, &hot2).unwrap();
            for (i, &(s, d)) in ps.pairs().iter().enumerate() {
                let j = ps.index_of(perm[s], perm[d]).unwrap();
                prop_assert_eq!(fr[i], fr2[j]);
            }
        }
    }
}
