//! Capacity safety, conservation and trace closure for both packers.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tracegen::config::RunConfig;
use tracegen::packers::PackerKind;
use tracegen::pipeline;
use tracegen::shaping::{FlowSet, ShapingParams};
use tracegen::targets::TargetLoads;
use tracegen::topology::{PairSpace, TopologyConfig};
use tracegen::trace::TrafficTrace;
use tracegen::Error;

fn instance() -> impl Strategy<Value = (usize, Vec<u64>, Vec<f64>, Vec<u32>, f64, f64, u64)> {
    (2usize..7).prop_flat_map(|n| {
        let p = n * (n - 1);
        (
            Just(n),
            prop::collection::vec(1u64..60, 2..120),
            prop::collection::vec(0.0f64..1.0, 1..60),
            prop::collection::vec(0u32..5, p),
            0.05f64..1.0,
            0.5f64..40.0,
            any::<u64>(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn packers_respect_ports_and_conserve(
        (n, sizes, gaps, weights, load, cap, seed) in instance()
    ) {
        let mut t = 0.0;
        let mut arrivals = vec![0.0];
        for i in 1..sizes.len() {
            t += gaps[i % gaps.len()] + 1e-3;
            arrivals.push(t);
        }
        let flows = FlowSet::new(sizes.clone(), arrivals).unwrap();
        let topo = TopologyConfig::new(n, 1, cap).unwrap();
        let ps = PairSpace::build(&topo).unwrap();
        let w: Vec<f64> = weights.iter().map(|&x| x as f64 + 0.01).collect();
        let total: f64 = w.iter().sum();
        let fr: Vec<f64> = w.iter().map(|x| x / total).collect();
        let targets = TargetLoads::new(fr, load, &topo, flows.duration).unwrap();
        let port_cap = (cap / 2.0 * flows.duration).floor() as u64;

        for kind in [PackerKind::Original, PackerKind::Vectorised] {
            match kind.pack(&flows, &targets, &topo, &ps, &mut ChaCha8Rng::seed_from_u64(seed)) {
                Ok(a) => {
                    let mut src = vec![0u64; n];
                    let mut dst = vec![0u64; n];
                    let mut per_pair = vec![0u64; ps.len()];
                    for (f, &p) in a.pair_of_flow.iter().enumerate() {
                        let (s, d) = ps.pair(p);
                        src[s] += sizes[f];
                        dst[d] += sizes[f];
                        per_pair[p] += sizes[f];
                    }
                    prop_assert!(src.iter().chain(&dst).all(|&x| x <= port_cap));
                    prop_assert_eq!(&per_pair, &a.final_state.actual_info);
                    let packed: u128 = a.final_state.actual_info.iter().map(|&x| x as u128).sum();
                    prop_assert_eq!(packed, flows.total_size());
                    for node in 0..n {
                        prop_assert_eq!(a.final_state.src_port_remaining[node], port_cap - src[node]);
                        prop_assert_eq!(a.final_state.dst_port_remaining[node], port_cap - dst[node]);
                    }
                }
                Err(Error::PackingInfeasible { flow, size }) => {
                    prop_assert_eq!(sizes[flow], size);
                }
                Err(e) => prop_assert!(false, "{kind:?}: {e}"),
            }
        }
    }
}

fn small(n: usize, seed: u64) -> RunConfig {
    let mut c = RunConfig::university(n, seed);
    c.shaping = ShapingParams {
        num_bins: 20,
        ..ShapingParams::default()
    };
    c
}

#[test]
fn config_echo_reproduces_trace() {
    for packer in [PackerKind::Original, PackerKind::Vectorised] {
        let mut cfg = small(16, 5);
        cfg.packer = packer;
        let first = pipeline::generate(&cfg).unwrap().trace;
        let mut bytes = Vec::new();
        first.write(&mut bytes).unwrap();

        let parsed = TrafficTrace::parse(std::str::from_utf8(&bytes).unwrap()).unwrap();
        let echo = parsed.metadata.as_ref().unwrap().config.clone();
        assert_eq!(echo.packer, packer);
        let again = pipeline::generate(&echo).unwrap().trace;
        let mut bytes2 = Vec::new();
        again.write(&mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
        assert_eq!(parsed, again);
    }
}

#[test]
fn packers_see_identical_inputs() {
    let prepared = pipeline::prepare(&small(8, 3)).unwrap();
    let a = pipeline::pack(&prepared, PackerKind::Original).unwrap();
    let b = pipeline::pack(&prepared, PackerKind::Vectorised).unwrap();
    let sum = |x: &[u64]| x.iter().map(|&v| v as u128).sum::<u128>();
    assert_eq!(sum(&a.assignment.final_state.actual_info), prepared.shaped.flows.total_size());
    assert_eq!(sum(&b.assignment.final_state.actual_info), prepared.shaped.flows.total_size());
}
