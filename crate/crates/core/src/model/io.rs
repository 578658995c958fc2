//! JSON interchange format for topologies and flowsets.
//!
//! ```json
//! { "rows": 4, "cols": 4,
//!   "rings": [[0, 1, 5, 4], ...],
//!   "flows": [{"id": 0, "T": 1000, "D": 1000, "L": 16, "J": 0, "src": 0, "dst": 5}] }
//! ```
//!
//! `rings` is optional; when absent the RLrec layout for the grid is used.
//! All times are integer cycles.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{generate_rlrec, Cycles, FlowSpec, Flowset, ModelError, NetworkTopology, SwitchId};

fn default_header_len() -> Cycles {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowsetFile {
    pub rows: u32,
    pub cols: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rings: Option<Vec<Vec<SwitchId>>>,
    #[serde(default = "default_header_len")]
    pub header_len: Cycles,
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
}

impl FlowsetFile {
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn topology(&self) -> Result<NetworkTopology, ModelError> {
        match &self.rings {
            Some(rings) => NetworkTopology::new(self.rows, self.cols, rings.clone(), 1),
            None => generate_rlrec(self.rows, self.cols, 1),
        }
    }

    pub fn into_flowset(self) -> Result<Flowset, ModelError> {
        let topo = Arc::new(self.topology()?);
        Flowset::new(topo, self.flows, self.header_len)
    }

    pub fn from_topology(topo: &NetworkTopology) -> Self {
        FlowsetFile {
            rows: topo.rows,
            cols: topo.cols,
            rings: Some(topo.rings.iter().map(|r| r.switches.clone()).collect()),
            header_len: 1,
            flows: Vec::new(),
        }
    }

    /// Full description of a flowset, rings and derived `maxloop` included.
    pub fn from_flowset(set: &Flowset) -> Self {
        FlowsetFile {
            header_len: set.header_len(),
            flows: set.specs(),
            ..Self::from_topology(set.topology())
        }
    }
}
