use serde::Serialize;

use super::{CoreId, Cycles, ModelError, RingId, SwitchId};

/// A unidirectional ring. Flits travel from `switches[k]` to
/// `switches[(k + 1) % len]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Ring {
    pub id: RingId,
    pub switches: Vec<SwitchId>,
    /// Packet buffer per switch on this ring, in flits.
    pub buffer_size: Cycles,
    #[serde(skip)]
    position: Vec<Option<u32>>,
}

impl Ring {
    fn new(
        id: RingId,
        switches: Vec<SwitchId>,
        buffer_size: Cycles,
        n_switches: usize,
    ) -> Result<Self, ModelError> {
        if switches.len() < 2 {
            return Err(ModelError::RingTooShort { ring: id });
        }
        let mut position = vec![None; n_switches];
        for (k, &sw) in switches.iter().enumerate() {
            let slot = position
                .get_mut(sw.index())
                .expect("caller checks grid bounds");
            if slot.is_some() {
                return Err(ModelError::DuplicateSwitch { ring: id, switch: sw });
            }
            *slot = Some(k as u32);
        }
        Ok(Ring {
            id,
            switches,
            buffer_size,
            position,
        })
    }

    /// Number of switches on the ring (`r` in the latency formulas).
    pub fn len(&self) -> usize {
        self.switches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.switches.is_empty()
    }

    pub fn position(&self, sw: SwitchId) -> Option<usize> {
        self.position.get(sw.index()).copied().flatten().map(|p| p as usize)
    }

    pub fn contains(&self, sw: SwitchId) -> bool {
        self.position(sw).is_some()
    }

    /// Switch following `pos` in ring order.
    pub fn next_position(&self, pos: usize) -> usize {
        (pos + 1) % self.len()
    }

    /// Ring links between the two switches, following ring direction.
    /// Equals `|dpath|`. Returns `None` if either switch is off the ring.
    pub fn hops(&self, from: SwitchId, to: SwitchId) -> Option<usize> {
        let a = self.position(from)?;
        let b = self.position(to)?;
        Some((b + self.len() - a) % self.len())
    }

    /// Ordered switches from `src`'s switch to `dst`'s switch, both inclusive.
    pub fn path(&self, src: CoreId, dst: CoreId) -> Result<Vec<SwitchId>, ModelError> {
        let start = self.position(src.switch()).ok_or(ModelError::NotOnRing {
            core: src,
            ring: self.id,
        })?;
        let hops = self
            .hops(src.switch(), dst.switch())
            .ok_or(ModelError::NotOnRing {
                core: dst,
                ring: self.id,
            })?;
        Ok((0..=hops)
            .map(|k| self.switches[(start + k) % self.len()])
            .collect())
    }

    /// Whether `sw` lies on the path `from -> to` (endpoints included).
    pub fn path_contains(&self, from: SwitchId, to: SwitchId, sw: SwitchId) -> bool {
        match (self.hops(from, to), self.hops(from, sw)) {
            (Some(span), Some(offset)) => offset <= span,
            _ => false,
        }
    }
}

/// Grid of switches plus the rings laid over it. Every switch has one
/// injection and one ejection link, each shared by all rings through it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NetworkTopology {
    pub rows: u32,
    pub cols: u32,
    pub rings: Vec<Ring>,
    #[serde(skip)]
    rings_at: Vec<Vec<RingId>>,
}

impl NetworkTopology {
    /// Builds and validates a topology. Ring ids are assigned in order.
    pub fn new(
        rows: u32,
        cols: u32,
        rings: Vec<Vec<SwitchId>>,
        buffer_size: Cycles,
    ) -> Result<Self, ModelError> {
        let n = (rows * cols) as usize;
        let mut built = Vec::with_capacity(rings.len());
        for (k, switches) in rings.into_iter().enumerate() {
            let id = RingId(k as u32);
            if let Some(&sw) = switches.iter().find(|sw| sw.index() >= n) {
                return Err(ModelError::SwitchOutOfGrid {
                    ring: id,
                    switch: sw,
                    rows,
                    cols,
                });
            }
            built.push(Ring::new(id, switches, buffer_size, n)?);
        }
        let mut rings_at = vec![Vec::new(); n];
        for ring in &built {
            for sw in &ring.switches {
                rings_at[sw.index()].push(ring.id);
            }
        }
        let topo = NetworkTopology {
            rows,
            cols,
            rings: built,
            rings_at,
        };
        topo.check_connectivity()?;
        Ok(topo)
    }

    pub fn n_switches(&self) -> usize {
        (self.rows * self.cols) as usize
    }

    pub fn ring(&self, id: RingId) -> &Ring {
        &self.rings[id.index()]
    }

    pub fn switch_at(&self, row: u32, col: u32) -> SwitchId {
        SwitchId(row * self.cols + col)
    }

    /// Rings sharing the ejection link of `sw`.
    pub fn ejection_sharing(&self, sw: SwitchId) -> &[RingId] {
        &self.rings_at[sw.index()]
    }

    /// Rings sharing the injection link of `sw`.
    pub fn injection_sharing(&self, sw: SwitchId) -> &[RingId] {
        &self.rings_at[sw.index()]
    }

    /// Ring with the shortest path from `src` to `dst`; ties go to the
    /// lowest ring id.
    pub fn best_ring(&self, src: CoreId, dst: CoreId) -> Option<RingId> {
        self.rings
            .iter()
            .filter_map(|r| r.hops(src.switch(), dst.switch()).map(|h| (h, r.id)))
            .min()
            .map(|(_, id)| id)
    }

    fn check_connectivity(&self) -> Result<(), ModelError> {
        let n = self.n_switches();
        for a in 0..n {
            for b in (a + 1)..n {
                let (sa, sb) = (SwitchId(a as u32), SwitchId(b as u32));
                let shared = self.rings_at[a]
                    .iter()
                    .any(|&r| self.ring(r).contains(sb));
                if !shared {
                    return Err(ModelError::Disconnected {
                        a: sa.core(),
                        b: sb.core(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Copy of this topology with per-ring buffer sizes replaced.
    pub(crate) fn with_buffers(&self, buffers: &[Cycles]) -> Self {
        let mut t = self.clone();
        for (ring, &b) in t.rings.iter_mut().zip(buffers) {
            ring.buffer_size = b;
        }
        t
    }
}
