mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rlnoc_core::model::{generate_rlrec, Cycles, FlowSpec, Flowset, NetworkTopology};
use rlnoc_core::{analyze, ProtocolMode};

use common::*;

fn topo(n: u32) -> Arc<NetworkTopology> {
    Arc::new(generate_rlrec(n, n, 1).unwrap())
}

fn flowset_strategy(max_flows: usize) -> impl Strategy<Value = (u32, Vec<FlowSpec>)> {
    (3u32..=5).prop_flat_map(move |n| {
        let cores = n * n;
        let one = (0..cores, 1..cores, 2u64..40, 100u64..4000, 0u64..50, 0u32..=3).prop_map(
            move |(src, off, len, period, jitter_pct, ml)| {
                let mut f = flow(0, src, (src + off) % cores, len, period, Some(ml));
                f.jitter = period * jitter_pct / 100;
                f
            },
        );
        (Just(n), prop::collection::vec(one, 1..=max_flows))
    })
    .prop_map(|(n, mut flows)| {
        for (i, f) in flows.iter_mut().enumerate() {
            f.id = rlnoc_core::FlowId(i as u32);
        }
        (n, flows)
    })
}

fn build(n: u32, flows: Vec<FlowSpec>, h: Cycles) -> Flowset {
    Flowset::new(topo(n), flows, h).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn proposed_never_exceeds_baseline((n, flows) in flowset_strategy(20)) {
        let set = build(n, flows, 1);
        let base = analyze(&set, ProtocolMode::Baseline);
        let prop = analyze(&set, ProtocolMode::Proposed);
        for (b, p) in base.flows.iter().zip(&prop.flows) {
            if b.converged {
                prop_assert!(p.converged);
                prop_assert!(p.response <= b.response, "{} > {}", p.response, b.response);
                prop_assert!(p.ipre_idle <= b.ipre_idle);
            }
        }
        prop_assert!(prop.schedulable || !base.schedulable);
    }

    #[test]
    fn zero_maxloop_reports_match((n, flows) in flowset_strategy(20)) {
        let set = build(n, flows, 1).with_maxloop(0);
        prop_assert!(analyze(&set, ProtocolMode::Baseline).same_bounds(&analyze(&set, ProtocolMode::Proposed)));
    }

    #[test]
    fn header_only_packets_match((n, mut flows) in flowset_strategy(20), h in 1u64..4) {
        for f in &mut flows {
            f.length = h;
        }
        let set = build(n, flows, h);
        prop_assert!(analyze(&set, ProtocolMode::Baseline).same_bounds(&analyze(&set, ProtocolMode::Proposed)));
    }

    #[test]
    fn more_interferers_never_help((n, flows) in flowset_strategy(12), extra in 1usize..6) {
        let keep = flows.len().saturating_sub(extra).max(1);
        let small = build(n, flows[..keep].to_vec(), 1);
        let big = build(n, flows, 1);
        for mode in ProtocolMode::ALL {
            let a = analyze(&small, mode);
            let b = analyze(&big, mode);
            for (x, y) in a.flows.iter().zip(&b.flows) {
                if y.converged {
                    prop_assert!(x.converged);
                    prop_assert!(x.response <= y.response);
                }
            }
        }
    }

    #[test]
    fn more_deflections_never_help((n, flows) in flowset_strategy(12), m in 0u32..3) {
        let set = build(n, flows, 1);
        for mode in ProtocolMode::ALL {
            let a = analyze(&set.with_maxloop(m), mode);
            let b = analyze(&set.with_maxloop(m + 1), mode);
            for (x, y) in a.flows.iter().zip(&b.flows) {
                if y.converged {
                    prop_assert!(x.converged && x.response <= y.response);
                }
            }
        }
    }

    #[test]
    fn bounds_are_least_fixed_points((n, flows) in flowset_strategy(3)) {
        let set = build(n, flows, 1);
        for mode in ProtocolMode::ALL {
            let report = analyze(&set, mode);
            if report.flows.iter().all(|f| f.converged) {
                let expect = reference_bounds(&set, mode).expect("reference converges too");
                let got: Vec<Cycles> = report.flows.iter().map(|f| f.response).collect();
                prop_assert_eq!(got, expect);
            }
        }
    }

    #[test]
    fn ring_sets_partition((n, flows) in flowset_strategy(20)) {
        let set = build(n, flows, 1);
        for (i, f) in set.flows().iter().enumerate() {
            let s = set.interference_indices(i);
            let mut both: Vec<usize> = s.upstream.iter().chain(&s.deflected).copied().collect();
            both.sort_unstable();
            let mut ring = s.ring.clone();
            ring.sort_unstable();
            prop_assert_eq!(&both, &ring);
            prop_assert_eq!(both.len(), s.upstream.len() + s.deflected.len());
            for &j in &ring {
                prop_assert!(j != i && set.flows()[j].ring == f.ring);
            }
            prop_assert!(set.no_load_latency(f) >= f.length + 2);
        }
    }
}

#[test]
fn rlrec_connects_every_pair() {
    for n in 2..=9 {
        assert!(all_pairs_connected(&generate_rlrec(n, n, 1).unwrap()), "{n}x{n}");
    }
}
