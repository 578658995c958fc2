//! Network model: switches on a grid, unidirectional rings, and the
//! real-time flows mapped onto them.
//!
//! Everything in this module is immutable once built. The analysis,
//! simulator and benchmark harness all borrow from a [`Flowset`].

mod flow;
pub mod io;
mod rlrec;
mod topology;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use flow::{Flow, FlowSpec, Flowset, InterferenceSets};
pub use rlrec::generate_rlrec;
pub use topology::{NetworkTopology, Ring};

/// Time in clock cycles.
pub type Cycles = u64;

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident, $prefix:literal) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// A processing core. Core `k` is attached to switch `k`.
    CoreId,
    "core"
);
id_type!(
    /// A switch, numbered row-major on the grid.
    SwitchId,
    "sw"
);
id_type!(RingId, "ring");
id_type!(FlowId, "flow");

impl CoreId {
    pub fn switch(self) -> SwitchId {
        SwitchId(self.0)
    }
}

impl SwitchId {
    pub fn core(self) -> CoreId {
        CoreId(self.0)
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("RLrec needs a square grid with at least 2 rows, got {rows}x{cols}")]
    BadGrid { rows: u32, cols: u32 },
    #[error("{ring}: switch {switch} is outside the {rows}x{cols} grid")]
    SwitchOutOfGrid {
        ring: RingId,
        switch: SwitchId,
        rows: u32,
        cols: u32,
    },
    #[error("{ring}: needs at least 2 switches")]
    RingTooShort { ring: RingId },
    #[error("{ring}: switch {switch} appears more than once")]
    DuplicateSwitch { ring: RingId, switch: SwitchId },
    #[error("{a} and {b} share no ring")]
    Disconnected { a: CoreId, b: CoreId },
    #[error("{core} is not on {ring}")]
    NotOnRing { core: CoreId, ring: RingId },
    #[error("{flow}: source and destination are both {core}")]
    SameEndpoints { flow: FlowId, core: CoreId },
    #[error("{flow}: invalid field `{field}`: {reason}")]
    InvalidFlow {
        flow: FlowId,
        field: &'static str,
        reason: String,
    },
    #[error("{flow} appears more than once")]
    DuplicateFlow { flow: FlowId },
    #[error("unknown {0}")]
    UnknownFlow(FlowId),
    #[error("{0}")]
    Parse(String),
}
