use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{CoreId, Cycles, FlowId, ModelError, NetworkTopology, Ring, RingId};

/// Flow parameters as supplied by the user, before ring assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub id: FlowId,
    #[serde(rename = "T")]
    pub period: Cycles,
    #[serde(rename = "D")]
    pub deadline: Cycles,
    #[serde(rename = "L")]
    pub length: Cycles,
    #[serde(rename = "J")]
    pub jitter: Cycles,
    pub src: CoreId,
    pub dst: CoreId,
    /// Permitted deflections; derived from ejection-link competition when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maxloop: Option<u32>,
}

/// A flow mapped onto a ring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flow {
    pub id: FlowId,
    pub period: Cycles,
    pub deadline: Cycles,
    /// Packet length in flits, header included.
    pub length: Cycles,
    pub jitter: Cycles,
    pub src: CoreId,
    pub dst: CoreId,
    pub ring: RingId,
    pub maxloop: u32,
}

impl Flow {
    pub fn spec(&self) -> FlowSpec {
        FlowSpec {
            id: self.id,
            period: self.period,
            deadline: self.deadline,
            length: self.length,
            jitter: self.jitter,
            src: self.src,
            dst: self.dst,
            maxloop: Some(self.maxloop),
        }
    }
}

/// Interferer sets of one flow, see [`Flowset::interference_sets`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterferenceSets<T> {
    /// Other flows on the same ring.
    pub ring: Vec<T>,
    /// Other flows queued on the same injection link.
    pub injection: Vec<T>,
    /// Ring flows whose path crosses the source switch.
    pub upstream: Vec<T>,
    /// Ring flows that only cross the source switch when deflected.
    pub deflected: Vec<T>,
}

impl<T> Default for InterferenceSets<T> {
    fn default() -> Self {
        InterferenceSets {
            ring: Vec::new(),
            injection: Vec::new(),
            upstream: Vec::new(),
            deflected: Vec::new(),
        }
    }
}

/// A set of flows mapped onto a topology. Each ring's buffer is sized to
/// the longest packet assigned to it.
#[derive(Debug, Clone)]
pub struct Flowset {
    topology: Arc<NetworkTopology>,
    flows: Vec<Flow>,
    header_len: Cycles,
    index: HashMap<FlowId, usize>,
}

impl Flowset {
    /// Validates the flows, maps each onto its shortest ring and sizes the
    /// ring buffers. Missing `maxloop` values are filled in with
    /// [`Flowset::maxloop_oldest_first`].
    pub fn new(
        topology: Arc<NetworkTopology>,
        specs: Vec<FlowSpec>,
        header_len: Cycles,
    ) -> Result<Self, ModelError> {
        let n_cores = topology.n_switches() as u32;
        let mut index = HashMap::with_capacity(specs.len());
        let mut flows = Vec::with_capacity(specs.len());
        for (k, s) in specs.iter().enumerate() {
            validate(s, header_len, n_cores)?;
            if index.insert(s.id, k).is_some() {
                return Err(ModelError::DuplicateFlow { flow: s.id });
            }
            let ring = topology
                .best_ring(s.src, s.dst)
                .ok_or(ModelError::Disconnected { a: s.src, b: s.dst })?;
            flows.push(Flow {
                id: s.id,
                period: s.period,
                deadline: s.deadline,
                length: s.length,
                jitter: s.jitter,
                src: s.src,
                dst: s.dst,
                ring,
                maxloop: s.maxloop.unwrap_or(0),
            });
        }

        let mut buffers: Vec<Cycles> = topology.rings.iter().map(|r| r.buffer_size).collect();
        let mut sized = vec![false; buffers.len()];
        for f in &flows {
            let r = f.ring.index();
            buffers[r] = if sized[r] { buffers[r].max(f.length) } else { f.length };
            sized[r] = true;
        }
        let topology = if topology.rings.iter().zip(&buffers).all(|(r, &b)| r.buffer_size == b) {
            topology
        } else {
            Arc::new(topology.with_buffers(&buffers))
        };

        let mut set = Flowset {
            topology,
            flows,
            header_len,
            index,
        };
        let derived: Vec<Option<u32>> = specs
            .iter()
            .enumerate()
            .map(|(k, s)| match s.maxloop {
                Some(_) => None,
                None => Some(set.maxloop_at(k)),
            })
            .collect();
        for (flow, m) in set.flows.iter_mut().zip(derived) {
            if let Some(m) = m {
                flow.maxloop = m;
            }
        }
        Ok(set)
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn shared_topology(&self) -> Arc<NetworkTopology> {
        Arc::clone(&self.topology)
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    /// Header length `H` in flits.
    pub fn header_len(&self) -> Cycles {
        self.header_len
    }

    pub fn index_of(&self, id: FlowId) -> Result<usize, ModelError> {
        self.index.get(&id).copied().ok_or(ModelError::UnknownFlow(id))
    }

    pub fn flow(&self, id: FlowId) -> Result<&Flow, ModelError> {
        Ok(&self.flows[self.index_of(id)?])
    }

    pub fn ring_of(&self, flow: &Flow) -> &Ring {
        self.topology.ring(flow.ring)
    }

    pub fn specs(&self) -> Vec<FlowSpec> {
        self.flows.iter().map(Flow::spec).collect()
    }

    /// Same flows with every `maxloop` set to `maxloop`.
    pub fn with_maxloop(&self, maxloop: u32) -> Flowset {
        let mut set = self.clone();
        for f in &mut set.flows {
            f.maxloop = maxloop;
        }
        set
    }

    /// Same flows with every `maxloop` derived from ejection-link competition.
    pub fn with_oldest_first_maxloop(&self) -> Flowset {
        let mut set = self.clone();
        for k in 0..set.flows.len() {
            set.flows[k].maxloop = self.maxloop_at(k);
        }
        set
    }

    /// `|dpath|`: ring links from source to destination switch.
    pub fn hops(&self, flow: &Flow) -> Cycles {
        self.ring_of(flow)
            .hops(flow.src.switch(), flow.dst.switch())
            .expect("flow endpoints are on its ring") as Cycles
    }

    /// Latency of a packet on an idle network: injection link, ring links,
    /// ejection link, plus one cycle per payload flit.
    pub fn no_load_latency(&self, flow: &Flow) -> Cycles {
        let links = self.hops(flow) + 2;
        links + flow.length - 1
    }

    pub fn interference_sets(&self, id: FlowId) -> Result<InterferenceSets<FlowId>, ModelError> {
        let sets = self.interference_indices(self.index_of(id)?);
        let ids = |v: Vec<usize>| v.into_iter().map(|k| self.flows[k].id).collect();
        Ok(InterferenceSets {
            ring: ids(sets.ring),
            injection: ids(sets.injection),
            upstream: ids(sets.upstream),
            deflected: ids(sets.deflected),
        })
    }

    /// Index-based interferer sets for the flow at position `i`.
    pub fn interference_indices(&self, i: usize) -> InterferenceSets<usize> {
        let fi = &self.flows[i];
        let ring = self.ring_of(fi);
        let source = fi.src.switch();
        let mut sets = InterferenceSets::default();
        for (j, fj) in self.flows.iter().enumerate() {
            if j == i {
                continue;
            }
            if fj.src == fi.src {
                sets.injection.push(j);
            }
            if fj.ring != fi.ring {
                continue;
            }
            sets.ring.push(j);
            if ring.path_contains(fj.src.switch(), fj.dst.switch(), source) {
                sets.upstream.push(j);
            } else {
                sets.deflected.push(j);
            }
        }
        sets
    }

    /// Deflection bound under Oldest-First ejection arbitration: the number
    /// of other flows on other rings that eject at the same switch.
    pub fn maxloop_oldest_first(&self, id: FlowId) -> Result<u32, ModelError> {
        Ok(self.maxloop_at(self.index_of(id)?))
    }

    fn maxloop_at(&self, i: usize) -> u32 {
        let fi = &self.flows[i];
        let sharing = self.topology.ejection_sharing(fi.dst.switch());
        self.flows
            .iter()
            .enumerate()
            .filter(|&(j, fj)| {
                j != i && fj.dst == fi.dst && fj.ring != fi.ring && sharing.contains(&fj.ring)
            })
            .count() as u32
    }
}

fn validate(s: &FlowSpec, header_len: Cycles, n_cores: u32) -> Result<(), ModelError> {
    let bad = |field, reason: String| ModelError::InvalidFlow {
        flow: s.id,
        field,
        reason,
    };
    if s.period == 0 {
        return Err(bad("T", "period must be positive".into()));
    }
    if s.deadline == 0 || s.deadline > s.period {
        return Err(bad(
            "D",
            format!("deadline {} must be in 1..=T ({})", s.deadline, s.period),
        ));
    }
    if header_len == 0 || s.length < header_len {
        return Err(bad(
            "L",
            format!("length {} is shorter than the header ({header_len})", s.length),
        ));
    }
    for (field, core) in [("src", s.src), ("dst", s.dst)] {
        if core.0 >= n_cores {
            return Err(bad(field, format!("{core} outside the {n_cores}-core grid")));
        }
    }
    if s.src == s.dst {
        return Err(ModelError::SameEndpoints {
            flow: s.id,
            core: s.src,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_rlrec, SwitchId};

    pub(crate) fn spec(id: u32, src: u32, dst: u32, length: Cycles) -> FlowSpec {
        FlowSpec {
            id: FlowId(id),
            period: 1000,
            deadline: 1000,
            length,
            jitter: 0,
            src: CoreId(src),
            dst: CoreId(dst),
            maxloop: Some(0),
        }
    }

    fn fig2() -> Arc<NetworkTopology> {
        let ids = [0, 1, 2, 3, 7, 6, 5, 4].map(SwitchId).to_vec();
        Arc::new(NetworkTopology::new(2, 4, vec![ids], 8).unwrap())
    }

    #[test]
    fn no_load_latency_examples() {
        // xi2 = switch 1, xi5 = switch 7
        let fs = Flowset::new(fig2(), vec![spec(0, 1, 7, 8), spec(1, 2, 3, 1), spec(2, 1, 7, 1)], 1)
            .unwrap();
        assert_eq!(fs.no_load_latency(&fs.flows()[0]), 12);
        assert_eq!(fs.no_load_latency(&fs.flows()[1]), 3);
        assert_eq!(fs.no_load_latency(&fs.flows()[2]), 5);
    }

    #[test]
    fn single_flow_has_no_interferers() {
        let fs = Flowset::new(fig2(), vec![spec(0, 1, 7, 8)], 1).unwrap();
        assert_eq!(fs.interference_sets(FlowId(0)).unwrap(), InterferenceSets::default());
    }

    #[test]
    fn upstream_vs_deflected() {
        // ring order: 0 1 2 3 7 6 5 4; flow 0 sources at switch 2.
        let through = Flowset::new(fig2(), vec![spec(0, 2, 7, 4), spec(1, 1, 3, 4)], 1).unwrap();
        let s = through.interference_sets(FlowId(0)).unwrap();
        assert_eq!(s.ring, vec![FlowId(1)]);
        assert_eq!(s.upstream, vec![FlowId(1)]);
        assert!(s.deflected.is_empty());

        let avoiding = Flowset::new(fig2(), vec![spec(0, 2, 7, 4), spec(1, 6, 4, 4)], 1).unwrap();
        let s = avoiding.interference_sets(FlowId(0)).unwrap();
        assert!(s.upstream.is_empty());
        assert_eq!(s.deflected, vec![FlowId(1)]);
    }

    #[test]
    fn path_endpoint_counts_as_upstream() {
        // flow 1 ends at flow 0's source switch
        let fs = Flowset::new(fig2(), vec![spec(0, 2, 7, 4), spec(1, 0, 2, 4)], 1).unwrap();
        assert_eq!(fs.interference_sets(FlowId(0)).unwrap().upstream, vec![FlowId(1)]);
    }

    #[test]
    fn injection_sharers() {
        let fs = Flowset::new(fig2(), vec![spec(0, 2, 7, 4), spec(1, 2, 3, 4), spec(2, 3, 2, 4)], 1)
            .unwrap();
        assert_eq!(fs.interference_sets(FlowId(0)).unwrap().injection, vec![FlowId(1)]);
    }

    #[test]
    fn unknown_flow() {
        let fs = Flowset::new(fig2(), vec![spec(0, 2, 7, 4)], 1).unwrap();
        assert_eq!(fs.interference_sets(FlowId(9)).unwrap_err(), ModelError::UnknownFlow(FlowId(9)));
    }

    #[test]
    fn buffers_sized_to_longest_packet() {
        let fs = Flowset::new(fig2(), vec![spec(0, 2, 7, 4), spec(1, 3, 2, 13)], 1).unwrap();
        assert_eq!(fs.topology().rings[0].buffer_size, 13);
    }

    #[test]
    fn maxloop_counts_other_rings_only() {
        let topo = Arc::new(generate_rlrec(4, 4, 1).unwrap());
        let base = Flowset::new(topo.clone(), vec![spec(0, 0, 5, 4)], 1).unwrap();
        assert_eq!(base.maxloop_oldest_first(FlowId(0)).unwrap(), 0);

        // Find two sources that reach switch 5 over rings other than flow 0's.
        let ring0 = base.flows()[0].ring;
        let others: Vec<u32> = (0..16)
            .filter(|&s| s != 5 && s != 0 && topo.best_ring(CoreId(s), CoreId(5)) != Some(ring0))
            .take(2)
            .collect();
        let fs = Flowset::new(
            topo.clone(),
            vec![spec(0, 0, 5, 4), spec(1, others[0], 5, 4), spec(2, others[1], 5, 4)],
            1,
        )
        .unwrap();
        assert_eq!(fs.maxloop_oldest_first(FlowId(0)).unwrap(), 2);

        // 2x2 grid: one ring, no competition even with a shared destination.
        let small = Arc::new(generate_rlrec(2, 2, 1).unwrap());
        let fs = Flowset::new(small, vec![spec(0, 0, 3, 4), spec(1, 1, 3, 4)], 1).unwrap();
        assert_eq!(fs.maxloop_oldest_first(FlowId(0)).unwrap(), 0);
    }

    #[test]
    fn missing_maxloop_is_derived() {
        let topo = Arc::new(generate_rlrec(4, 4, 1).unwrap());
        let mut a = spec(0, 0, 5, 4);
        a.maxloop = None;
        let ring0 = topo.best_ring(CoreId(0), CoreId(5)).unwrap();
        let other = (1..16)
            .find(|&s| s != 5 && topo.best_ring(CoreId(s), CoreId(5)) != Some(ring0))
            .unwrap();
        let fs = Flowset::new(topo, vec![a, spec(1, other, 5, 4)], 1).unwrap();
        assert_eq!(fs.flows()[0].maxloop, 1);
        assert_eq!(fs.flows()[1].maxloop, 0);
    }

    #[test]
    fn invalid_flows_rejected() {
        let topo = fig2();
        let mut s = spec(0, 1, 2, 4);
        s.deadline = 2000;
        let err = Flowset::new(topo.clone(), vec![s], 1).unwrap_err();
        assert!(matches!(err, ModelError::InvalidFlow { field: "D", .. }));

        let err = Flowset::new(topo.clone(), vec![spec(0, 1, 1, 4)], 1).unwrap_err();
        assert!(matches!(err, ModelError::SameEndpoints { .. }));

        let err = Flowset::new(topo.clone(), vec![spec(0, 1, 2, 1)], 2).unwrap_err();
        assert!(matches!(err, ModelError::InvalidFlow { field: "L", .. }));

        let err = Flowset::new(topo.clone(), vec![spec(0, 1, 20, 4)], 1).unwrap_err();
        assert!(matches!(err, ModelError::InvalidFlow { field: "dst", .. }));

        let err = Flowset::new(topo, vec![spec(0, 1, 2, 4), spec(0, 2, 3, 4)], 1).unwrap_err();
        assert_eq!(err, ModelError::DuplicateFlow { flow: FlowId(0) });
    }
}
