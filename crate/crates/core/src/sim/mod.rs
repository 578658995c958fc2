//! Cycle-accurate model of a routerless ring network.
//!
//! Every switch has, per ring, an input register, a packet buffer and an
//! output register, plus one injection link and one ejection link shared by
//! all of its rings. Each cycle a switch:
//!
//! 1. ejects arriving flits addressed to it if the ejection link is free
//!    (simultaneous headers are served oldest injection first), and deflects
//!    the rest;
//! 2. drives each ring output from, in priority order, an in-progress
//!    injection, the packet buffer, the input register; anything displaced
//!    is buffered;
//! 3. starts a new injection only on a ring whose input register and buffer
//!    are both empty.
//!
//! A packet released at cycle `t` can start injecting at `t + 1`, so an
//! unloaded packet is fully ejected exactly `C_i` cycles after release.

mod network;
mod trace;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::ProtocolMode;
use crate::model::{Cycles, Flow, Flowset, RingId, SwitchId};

pub use network::Network;
pub use trace::{FlowSummary, PacketRecord, SimTrace, Violation};

/// Routing fields of a header flit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeaderFields {
    pub dest: SwitchId,
    /// Switch where the packet entered the ring.
    pub origin: SwitchId,
    /// Set by the destination when only the header was deflected; tells the
    /// origin to re-inject the payload.
    pub reinject: bool,
    /// First injection cycle, used for Oldest-First arbitration.
    pub injected_at: Cycles,
}

/// What happens to a packet whose header finds the ejection link busy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeflectAction {
    /// The whole packet loops around the ring.
    ForwardPacket,
    /// The header loops back to its origin; the payload is dropped here.
    ForwardHeaderDropPayload,
}

/// Deflects a header at its destination switch.
pub fn deflect(mode: ProtocolMode, header: &mut HeaderFields) -> DeflectAction {
    match mode {
        ProtocolMode::Baseline => DeflectAction::ForwardPacket,
        ProtocolMode::Proposed => {
            header.reinject = true;
            DeflectAction::ForwardHeaderDropPayload
        }
    }
}

/// How packets of each flow are released.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReleasePattern {
    /// Strictly periodic, first release at `offset`.
    Periodic { offset: Cycles },
    /// Release `k` at `k * T + u`, with `u` drawn uniformly from `0..=J`.
    PeriodicWithJitter,
    /// Inter-release gaps drawn uniformly from `T..=2T`.
    Sporadic,
}

impl ReleasePattern {
    /// All flows release at cycle 0 and then every period.
    pub const SYNCHRONOUS: ReleasePattern = ReleasePattern::Periodic { offset: 0 };

    /// Release times of `flow` before `horizon`.
    pub fn releases(&self, flow: &Flow, flow_index: usize, seed: u64, horizon: Cycles) -> Vec<Cycles> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (flow_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut out = Vec::new();
        match *self {
            ReleasePattern::Periodic { offset } => {
                let mut t = offset;
                while t < horizon {
                    out.push(t);
                    t += flow.period;
                }
            }
            ReleasePattern::PeriodicWithJitter => {
                let mut k = 0;
                loop {
                    let base = k * flow.period;
                    if base >= horizon {
                        break;
                    }
                    let t = base + rng.random_range(0..=flow.jitter);
                    if t < horizon {
                        out.push(t);
                    }
                    k += 1;
                }
            }
            ReleasePattern::Sporadic => {
                let mut t = rng.random_range(0..flow.period);
                while t < horizon {
                    out.push(t);
                    t += rng.random_range(flow.period..=2 * flow.period);
                }
            }
        }
        out
    }
}

/// Default horizon cap, in cycles.
pub const DEFAULT_HORIZON_CAP: Cycles = 1_000_000;

/// Twice the longest period per flow, capped.
pub fn default_horizon(set: &Flowset, cap: Cycles) -> Cycles {
    let max_t = set.flows().iter().map(|f| f.period).max().unwrap_or(0);
    (2 * max_t * set.len() as Cycles).min(cap).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub mode: ProtocolMode,
    pub pattern: ReleasePattern,
    /// Packets are released strictly before this cycle.
    pub horizon: Cycles,
    pub seed: u64,
    /// Analytic bounds per flow (indexed like [`Flowset::flows`]); packets
    /// exceeding them are flagged.
    pub bounds: Option<Vec<Cycles>>,
    /// Extra cycles after the horizon for in-flight packets to drain.
    pub drain: Option<Cycles>,
    /// Per-cycle flit conservation and ordering checks.
    pub protocol_check: bool,
}

impl SimConfig {
    pub fn new(mode: ProtocolMode, horizon: Cycles) -> Self {
        SimConfig {
            mode,
            pattern: ReleasePattern::SYNCHRONOUS,
            horizon,
            seed: 0,
            bounds: None,
            drain: None,
            protocol_check: false,
        }
    }
}

/// Internal consistency failures. Any of these is a simulator bug.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("cycle {cycle}: packet buffer of {ring} at {switch} holds {occupancy} flits, capacity {capacity}")]
    BufferOverflow {
        cycle: Cycles,
        ring: RingId,
        switch: SwitchId,
        occupancy: usize,
        capacity: Cycles,
    },
    #[error("cycle {cycle}: {detail}")]
    Invariant { cycle: Cycles, detail: String },
    #[error("bounds given for {got} flows, flowset has {want}")]
    BoundsSize { got: usize, want: usize },
}

/// Simulates `set` from an empty network until every released packet is
/// delivered (or the drain window runs out).
pub fn run(set: &Flowset, config: &SimConfig) -> Result<SimTrace, SimError> {
    let mut net = Network::new(set, config)?;
    net.run_to_completion()?;
    Ok(net.into_trace())
}
