//! Stage two: assign every flow a source-destination pair.
//!
//! Two packers share the same ledger ([`PackingState`]):
//!
//! - [`pack_original`] sorts the pairs by information already assigned and
//!   makes up to two linear passes per flow, first looking for a pair still
//!   below its target and then for any pair with spare capacity.
//! - [`pack_vectorised`] masks out pairs without capacity, scores the rest by
//!   `2·target − actual` and picks uniformly among the maxima.
//!
//! Information is counted in whole units so every ledger check is exact.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shaping::FlowSet;
use crate::targets::TargetLoads;
use crate::topology::{PairSpace, TopologyConfig};

/// Per-pair and per-port information ledgers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackingState {
    pub actual_info: Vec<u64>,
    pub src_port_remaining: Vec<u64>,
    pub dst_port_remaining: Vec<u64>,
    /// `min(src_port_remaining[src], dst_port_remaining[dst])` for each pair.
    pub pair_remaining: Vec<u64>,
}

impl PackingState {
    /// Every port starts with `port_capacity` units of headroom.
    pub fn new(pair_space: &PairSpace, port_capacity: u64) -> Self {
        let n = pair_space.num_nodes();
        Self {
            actual_info: vec![0; pair_space.len()],
            src_port_remaining: vec![port_capacity; n],
            dst_port_remaining: vec![port_capacity; n],
            pair_remaining: vec![port_capacity; pair_space.len()],
        }
    }

    /// Port headroom over the flows' duration for `topology`.
    pub fn for_duration(pair_space: &PairSpace, topology: &TopologyConfig, duration: f64) -> Self {
        Self::new(pair_space, topology.port_capacity(duration))
    }
}

/// Pair chosen for every flow, plus the resulting ledgers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub pair_of_flow: Vec<usize>,
    pub final_state: PackingState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PackerKind {
    Original,
    #[serde(alias = "vectorized")]
    Vectorised,
}

impl PackerKind {
    pub fn name(self) -> &'static str {
        match self {
            PackerKind::Original => "original",
            PackerKind::Vectorised => "vectorised",
        }
    }

    pub fn pack<R: Rng + ?Sized>(
        self,
        flows: &FlowSet,
        targets: &TargetLoads,
        topology: &TopologyConfig,
        pair_space: &PairSpace,
        rng: &mut R,
    ) -> Result<Assignment> {
        match self {
            PackerKind::Original => pack_original(flows, targets, topology, pair_space),
            PackerKind::Vectorised => pack_vectorised(flows, targets, topology, pair_space, rng),
        }
    }
}

impl std::str::FromStr for PackerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(PackerKind::Original),
            "vectorised" | "vectorized" => Ok(PackerKind::Vectorised),
            other => Err(Error::config("packer", format!("unknown packer {other:?}"))),
        }
    }
}

/// `mask[i]` is true when pair `i` can still take `flow_size` units.
pub fn pair_mask(state: &PackingState, flow_size: u64) -> Vec<bool> {
    let mut mask = Vec::new();
    fill_pair_mask(&state.pair_remaining, flow_size, &mut mask);
    mask
}

fn fill_pair_mask(pair_remaining: &[u64], flow_size: u64, mask: &mut Vec<bool>) {
    mask.clear();
    mask.extend(pair_remaining.iter().map(|&c| c >= flow_size));
}

// Ledger totals stay far below 2^62 units.
#[inline]
fn score(target: u64, actual: u64) -> i64 {
    2 * target as i64 - actual as i64
}

/// Pick uniformly among unmasked pairs maximizing `2·target − actual`.
pub fn select_pair<R: Rng + ?Sized>(
    target_info: &[u64],
    actual_info: &[u64],
    mask: &[bool],
    rng: &mut R,
) -> Result<usize> {
    let mut best = i64::MIN;
    let mut ties = 0usize;
    for i in 0..mask.len() {
        if !mask[i] {
            continue;
        }
        let s = score(target_info[i], actual_info[i]);
        if s > best {
            best = s;
            ties = 1;
        } else if s == best {
            ties += 1;
        }
    }
    if ties == 0 {
        return Err(Error::NoFeasiblePair);
    }
    let mut k = if ties == 1 { 0 } else { rng.random_range(0..ties) };
    for i in 0..mask.len() {
        if mask[i] && score(target_info[i], actual_info[i]) == best {
            if k == 0 {
                return Ok(i);
            }
            k -= 1;
        }
    }
    unreachable!("argmax set counted {ties} members")
}

/// Charge `flow_size` to pair `chosen` and refresh the capacities of every
/// pair sharing its source or destination.
pub fn update_trackers(
    state: &mut PackingState,
    flow_size: u64,
    chosen: usize,
    pair_space: &PairSpace,
) -> Result<()> {
    let remaining = state.pair_remaining[chosen];
    if remaining < flow_size {
        return Err(Error::CapacityViolation {
            pair: chosen,
            requested: flow_size,
            remaining,
        });
    }
    let (src, dst) = pair_space.pair(chosen);
    state.actual_info[chosen] += flow_size;
    state.src_port_remaining[src] -= flow_size;
    state.dst_port_remaining[dst] -= flow_size;

    let src_rem = state.src_port_remaining[src];
    for &p in pair_space.pairs_by_src(src) {
        let d = pair_space.pair(p).1;
        state.pair_remaining[p] = src_rem.min(state.dst_port_remaining[d]);
    }
    let dst_rem = state.dst_port_remaining[dst];
    for &p in pair_space.pairs_by_dst(dst) {
        let s = pair_space.pair(p).0;
        state.pair_remaining[p] = state.src_port_remaining[s].min(dst_rem);
    }
    Ok(())
}

fn check_inputs(flows: &FlowSet, targets: &TargetLoads, pair_space: &PairSpace) -> Result<()> {
    if targets.target_info.len() != pair_space.len() {
        return Err(Error::Domain(format!(
            "{} targets for {} pairs",
            targets.target_info.len(),
            pair_space.len()
        )));
    }
    if targets.duration != flows.duration {
        return Err(Error::Domain(format!(
            "target duration {} differs from flow duration {}",
            targets.duration, flows.duration
        )));
    }
    Ok(())
}

/// Mask, score, and randomly tie-break every flow in arrival order.
///
/// Scores `2·target − actual` are kept in a vector and refreshed only for the
/// chosen pair; each flow then costs one chunked scan over the pairs (masked
/// maximum and tie count) plus a partial scan to locate the drawn tie.
/// Choices and random draws match [`pair_mask`] followed by [`select_pair`].
pub fn pack_vectorised<R: Rng + ?Sized>(
    flows: &FlowSet,
    targets: &TargetLoads,
    topology: &TopologyConfig,
    pair_space: &PairSpace,
    rng: &mut R,
) -> Result<Assignment> {
    check_inputs(flows, targets, pair_space)?;
    let mut state = PackingState::for_duration(pair_space, topology, flows.duration);
    let mut pair_of_flow = Vec::with_capacity(flows.len());
    let mut scores: Vec<i64> = targets
        .target_info
        .iter()
        .map(|&t| score(t, 0))
        .collect();

    for (flow, &size) in flows.sizes.iter().enumerate() {
        let chosen = select_masked(&state.pair_remaining, &scores, size, rng)
            .ok_or(Error::PackingInfeasible { flow, size })?;
        update_trackers(&mut state, size, chosen, pair_space)?;
        scores[chosen] = score(targets.target_info[chosen], state.actual_info[chosen]);
        pair_of_flow.push(chosen);
    }

    Ok(Assignment {
        pair_of_flow,
        final_state: state,
    })
}

// No feasible score can reach this: 2·target − actual > −2^62.
const MASKED: i64 = i64::MIN;

const CHUNK: usize = 64;

fn select_masked<R: Rng + ?Sized>(
    pair_remaining: &[u64],
    scores: &[i64],
    size: u64,
    rng: &mut R,
) -> Option<usize> {
    let masked = |(&rem, &s): (&u64, &i64)| if rem >= size { s } else { MASKED };
    // Chunk maxima are branch-free; ties are counted only in chunks that
    // reach the running maximum.
    let mut best = MASKED;
    let mut ties = 0usize;
    for (rem, sc) in pair_remaining.chunks(CHUNK).zip(scores.chunks(CHUNK)) {
        let m = rem.iter().zip(sc).map(masked).fold(MASKED, i64::max);
        if m < best {
            continue;
        }
        let c = rem.iter().zip(sc).map(masked).filter(|&s| s == m).count();
        if m > best {
            best = m;
            ties = c;
        } else {
            ties += c;
        }
    }
    if best == MASKED {
        return None;
    }
    let k = if ties == 1 { 0 } else { rng.random_range(0..ties) };
    pair_remaining
        .iter()
        .zip(scores)
        .map(masked)
        .enumerate()
        .filter(|&(_, s)| s == best)
        .nth(k)
        .map(|(i, _)| i)
}

/// Two-pass packer over pairs sorted by assigned information, descending.
///
/// Pass one takes the first pair that stays within its target and its
/// capacity; pass two falls back to the first pair with enough capacity.
/// Ties in the sort keep ascending pair order.
pub fn pack_original(
    flows: &FlowSet,
    targets: &TargetLoads,
    topology: &TopologyConfig,
    pair_space: &PairSpace,
) -> Result<Assignment> {
    check_inputs(flows, targets, pair_space)?;
    let mut state = PackingState::for_duration(pair_space, topology, flows.duration);
    let mut pair_of_flow = Vec::with_capacity(flows.len());
    let mut order: Vec<usize> = Vec::with_capacity(pair_space.len());

    for (flow, &size) in flows.sizes.iter().enumerate() {
        order.clear();
        order.extend(0..pair_space.len());
        let actual = &state.actual_info;
        order.sort_by(|&a, &b| actual[b].cmp(&actual[a]));

        let fits = |p: usize| state.pair_remaining[p] >= size;
        let chosen = order
            .iter()
            .copied()
            .find(|&p| actual[p] + size <= targets.target_info[p] && fits(p))
            .or_else(|| order.iter().copied().find(|&p| fits(p)))
            .ok_or(Error::PackingInfeasible { flow, size })?;

        update_trackers(&mut state, size, chosen, pair_space)?;
        pair_of_flow.push(chosen);
    }

    Ok(Assignment {
        pair_of_flow,
        final_state: state,
    })
}
