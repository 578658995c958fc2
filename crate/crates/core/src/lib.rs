//! Worst-case latency analysis and cycle-accurate simulation for
//! routerless ring networks-on-chip with packet-level deflection.
//!
//! Two protocols are modelled side by side:
//!
//! * [`ProtocolMode::Baseline`]: a packet that finds its ejection link busy
//!   is deflected whole and loops around its ring.
//! * [`ProtocolMode::Proposed`]: only the header loops; the destination
//!   drops the payload and the source switch re-injects it behind the
//!   returning header.

pub mod analysis;
pub mod bench;
pub mod model;
pub mod sim;

pub use analysis::{analyze, AnalysisReport, FlowAnalysis, ProtocolMode};
pub use model::{CoreId, Cycles, Flow, FlowId, FlowSpec, Flowset, NetworkTopology, RingId, SwitchId};
