use std::fmt;

use crate::analysis::ProtocolMode;
use crate::model::{Cycles, FlowId, RingId, SwitchId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    pub flow: FlowId,
    pub seq: u32,
    pub release: Cycles,
    pub inject_start: Option<Cycles>,
    pub inject_end: Option<Cycles>,
    /// Cycle after the last flit left on the ejection link.
    pub eject_end: Option<Cycles>,
    pub deflections: u32,
    /// `eject_end - release`
    pub latency: Option<Cycles>,
    pub violated_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    BoundExceeded {
        flow: FlowId,
        seq: u32,
        latency: Cycles,
        bound: Cycles,
    },
    Undelivered {
        flow: FlowId,
        seq: u32,
    },
    /// A returning header reached its origin after the flow had released
    /// its next packet, so the payload was no longer retained.
    PayloadEvicted {
        flow: FlowId,
        seq: u32,
        cycle: Cycles,
    },
    /// Packet buffer held more than `B` flits. Only reachable with
    /// header-only deflection, when a returning header was itself buffered.
    BufferOverflow {
        ring: RingId,
        switch: SwitchId,
        cycle: Cycles,
        occupancy: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BoundExceeded {
                flow,
                seq,
                latency,
                bound,
            } => write!(f, "{flow}#{seq}: latency {latency} exceeds bound {bound}"),
            Violation::Undelivered { flow, seq } => write!(f, "{flow}#{seq}: not delivered"),
            Violation::PayloadEvicted { flow, seq, cycle } => {
                write!(f, "{flow}#{seq}: payload evicted before re-injection at cycle {cycle}")
            }
            Violation::BufferOverflow {
                ring,
                switch,
                cycle,
                occupancy,
            } => write!(f, "cycle {cycle}: {ring} buffer at {switch} holds {occupancy} flits"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowSummary {
    pub flow: FlowId,
    pub packets: u32,
    pub delivered: u32,
    pub max_latency: Cycles,
    pub max_deflections: u32,
    pub bound: Option<Cycles>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTrace {
    pub mode: ProtocolMode,
    pub seed: u64,
    pub horizon: Cycles,
    /// Cycle at which the simulation stopped.
    pub end_cycle: Cycles,
    pub packets: Vec<PacketRecord>,
    pub flows: Vec<FlowSummary>,
    /// Flits placed on ring links.
    pub flit_hops: u64,
    pub injected_flits: u64,
    pub ejected_flits: u64,
    /// Payload flits dropped at a deflecting destination.
    pub discarded_flits: u64,
    pub peak_buffer: usize,
    pub violations: Vec<Violation>,
}

impl SimTrace {
    pub const CSV_HEADER: &'static str =
        "flow_id,packet_seq,release,inject_start,eject_end,deflections,latency,violated_bound";
    pub const SUMMARY_HEADER: &'static str =
        "flow_id,packets,delivered,max_latency,max_deflections,bound";

    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        fn opt(v: Option<Cycles>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        self.packets.iter().map(|p| {
            format!(
                "{},{},{},{},{},{},{},{}",
                p.flow.0,
                p.seq,
                p.release,
                opt(p.inject_start),
                opt(p.eject_end),
                p.deflections,
                opt(p.latency),
                p.violated_bound
            )
        })
    }

    pub fn summary_rows(&self) -> impl Iterator<Item = String> + '_ {
        self.flows.iter().map(|f| {
            format!(
                "{},{},{},{},{},{}",
                f.flow.0,
                f.packets,
                f.delivered,
                f.max_latency,
                f.max_deflections,
                f.bound.map(|b| b.to_string()).unwrap_or_default()
            )
        })
    }

    pub fn bound_violations(&self) -> usize {
        self.packets.iter().filter(|p| p.violated_bound).count()
    }

    pub fn total_deflections(&self) -> u64 {
        self.packets.iter().map(|p| p.deflections as u64).sum()
    }
}
