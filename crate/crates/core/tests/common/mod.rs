//! Reference computations for the integration tests, written directly from
//! the bound definitions rather than through the library's helpers.

#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rlnoc_core::model::{generate_rlrec, CoreId, Cycles, FlowId, FlowSpec, Flowset, NetworkTopology};
use rlnoc_core::ProtocolMode;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn grid(n: u32) -> Arc<NetworkTopology> {
    Arc::new(generate_rlrec(n, n, 1).unwrap())
}

pub fn flow(id: u32, src: u32, dst: u32, length: Cycles, period: Cycles, maxloop: Option<u32>) -> FlowSpec {
    FlowSpec {
        id: FlowId(id),
        period,
        deadline: period,
        length,
        jitter: 0,
        src: CoreId(src),
        dst: CoreId(dst),
        maxloop,
    }
}

/// `n` flows over distinct random core pairs.
pub fn random_specs(
    rng: &mut impl Rng,
    cores: u32,
    n: usize,
    length: (Cycles, Cycles),
    period: (Cycles, Cycles),
    maxloop: Option<u32>,
) -> Vec<FlowSpec> {
    (0..n)
        .map(|i| {
            let src = rng.random_range(0..cores);
            let dst = (src + rng.random_range(1..cores)) % cores;
            let t = rng.random_range(period.0..=period.1);
            let mut f = flow(i as u32, src, dst, rng.random_range(length.0..=length.1), t, maxloop);
            f.jitter = rng.random_range(0..=t / 2);
            f
        })
        .collect()
}

/// Flits of `j` charged per activation to the busy period of `i`.
pub fn charge(set: &Flowset, i: usize, j: usize, mode: ProtocolMode) -> Cycles {
    let (fi, fj) = (&set.flows()[i], &set.flows()[j]);
    if i == j || fi.ring != fj.ring {
        return 0;
    }
    let path = set.ring_of(fj).path(fj.src, fj.dst).unwrap();
    let m = fj.maxloop as Cycles;
    if path.contains(&fi.src.switch()) {
        fj.length * (1 + m)
    } else {
        match mode {
            ProtocolMode::Baseline => fj.length * m,
            ProtocolMode::Proposed => set.header_len() * m,
        }
    }
}

fn busy_limit(set: &Flowset, i: usize) -> Cycles {
    let f = &set.flows()[i];
    (f.deadline.max(f.period) * (1 + f.maxloop as Cycles)).min(1 << 20)
}

/// Least `I` in `1..=limit` solving the busy-period equation, by scanning.
pub fn busy_period_scan(set: &Flowset, i: usize, mode: ProtocolMode, jk: &[Cycles]) -> Option<Cycles> {
    let flows = set.flows();
    (1..=busy_limit(set, i)).find(|&x| {
        let rhs: Cycles = 1 + (0..flows.len())
            .map(|j| {
                let c = charge(set, i, j, mode);
                if c == 0 {
                    0
                } else {
                    (x + flows[j].jitter + jk[j]).div_ceil(flows[j].period) * c
                }
            })
            .sum::<Cycles>();
        rhs == x
    })
}

/// Whole-flowset bounds by plain iteration on the interference jitter.
/// `None` when any busy period has no solution below its limit.
pub fn reference_bounds(set: &Flowset, mode: ProtocolMode) -> Option<Vec<Cycles>> {
    let flows = set.flows();
    let n = flows.len();
    let c: Vec<Cycles> = flows
        .iter()
        .map(|f| set.ring_of(f).hops(f.src.switch(), f.dst.switch()).unwrap() as Cycles + 1 + f.length)
        .collect();
    let mut jk = vec![0; n];
    loop {
        let idle: Vec<Cycles> = (0..n)
            .map(|i| busy_period_scan(set, i, mode, &jk))
            .collect::<Option<_>>()?;
        let r: Vec<Cycles> = (0..n)
            .map(|i| {
                let f = &flows[i];
                let ring = set.ring_of(f);
                let hops = ring.hops(f.src.switch(), f.dst.switch()).unwrap() as Cycles;
                let (len, b, m) = (ring.len() as Cycles, ring.buffer_size, f.maxloop as Cycles);
                let queue: Cycles = (0..n)
                    .filter(|&j| j != i && flows[j].src == f.src)
                    .map(|j| flows[j].length + idle[j])
                    .sum();
                c[i] + len * m + idle[i] + queue + hops * b + m * len * b
            })
            .collect();
        let next: Vec<Cycles> = (0..n).map(|i| r[i] - c[i]).collect();
        if next == jk {
            return Some(r);
        }
        if r.iter().zip(flows).any(|(&r, f)| r > 64 * f.deadline.max(f.period)) {
            return None;
        }
        jk = next;
    }
}

/// Every ordered pair of distinct switches shares at least one ring.
pub fn all_pairs_connected(topo: &NetworkTopology) -> bool {
    let n = topo.rows * topo.cols;
    (0..n).all(|a| {
        (0..n).filter(|&b| b != a).all(|b| {
            topo.rings.iter().any(|r| {
                r.switches.iter().any(|s| s.0 == a) && r.switches.iter().any(|s| s.0 == b)
            })
        })
    })
}
