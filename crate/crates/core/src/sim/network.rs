use std::collections::VecDeque;

use super::trace::{FlowSummary, PacketRecord, SimTrace, Violation};
use super::{deflect, HeaderFields, SimConfig, SimError};
use crate::analysis::ProtocolMode;
use crate::model::{Cycles, Flowset, RingId, SwitchId};

#[derive(Debug, Clone, Copy)]
struct Flit {
    packet: u32,
    /// Position in the packet; 0 is the flit carrying the header fields.
    index: u32,
    /// Bumped on every payload re-injection so stale payload is recognised.
    pass: u32,
    header: Option<HeaderFields>,
}

/// Flits being pushed into a ring output from the local core.
#[derive(Debug, Clone, Copy)]
struct Stream {
    packet: u32,
    next: u32,
    end: u32,
    pass: u32,
    /// First injection (holds the injection link) rather than a payload
    /// re-injection behind a returning header.
    fresh: bool,
}

#[derive(Debug, Default)]
struct Port {
    incoming: Option<Flit>,
    buffer: VecDeque<Flit>,
    stream: Option<Stream>,
}

#[derive(Debug, Default)]
struct SwitchState {
    queue: VecDeque<u32>,
    /// First cycle the injection link can take a new packet.
    link_free_at: Cycles,
    eject_free_at: Cycles,
    eject_owner: Option<u32>,
}

#[derive(Debug)]
struct Packet {
    flow: usize,
    seq: u32,
    release: Cycles,
    next_release: Option<Cycles>,
    inject_start: Option<Cycles>,
    inject_end: Option<Cycles>,
    eject_end: Option<Cycles>,
    deflections: u32,
    pass: u32,
    ejecting: bool,
    ejected: u32,
    /// Flagged header has passed its origin; the payload follows its last
    /// header flit.
    rearmed: bool,
}

/// Complete network state. Advance it with [`Network::step`].
pub struct Network<'a> {
    set: &'a Flowset,
    mode: ProtocolMode,
    header_len: u32,
    protocol_check: bool,
    seed: u64,
    horizon: Cycles,
    end: Cycles,
    bounds: Option<Vec<Cycles>>,

    ring_base: Vec<usize>,
    port_ring: Vec<(u32, u32)>,
    port_switch: Vec<SwitchId>,
    source_port: Vec<usize>,
    ports: Vec<Port>,
    switches: Vec<SwitchState>,
    packets: Vec<Packet>,
    release_order: Vec<u32>,
    next_release: usize,

    cycle: Cycles,
    in_flight: u64,
    flit_hops: u64,
    injected: u64,
    ejected: u64,
    discarded: u64,
    peak_buffer: usize,
    violations: Vec<Violation>,

    consumed: Vec<bool>,
    quiet: Vec<bool>,
    outputs: Vec<Option<Flit>>,
    contenders: Vec<(Cycles, RingId, usize)>,
}

impl<'a> Network<'a> {
    pub fn new(set: &'a Flowset, config: &SimConfig) -> Result<Self, SimError> {
        if let Some(b) = &config.bounds {
            if b.len() != set.len() {
                return Err(SimError::BoundsSize {
                    got: b.len(),
                    want: set.len(),
                });
            }
        }
        let topo = set.topology();
        let mut ring_base = Vec::with_capacity(topo.rings.len());
        let mut port_ring = Vec::new();
        let mut port_switch = Vec::new();
        for ring in &topo.rings {
            ring_base.push(port_ring.len());
            for (k, &sw) in ring.switches.iter().enumerate() {
                port_ring.push((ring.id.0, k as u32));
                port_switch.push(sw);
            }
        }
        let n_ports = port_ring.len();
        let source_port = set
            .flows()
            .iter()
            .map(|f| {
                let ring = set.ring_of(f);
                ring_base[ring.id.index()] + ring.position(f.src.switch()).expect("source on ring")
            })
            .collect();

        let mut packets = Vec::new();
        for (i, flow) in set.flows().iter().enumerate() {
            let releases = config.pattern.releases(flow, i, config.seed, config.horizon);
            for (seq, &release) in releases.iter().enumerate() {
                packets.push(Packet {
                    flow: i,
                    seq: seq as u32,
                    release,
                    next_release: releases.get(seq + 1).copied(),
                    inject_start: None,
                    inject_end: None,
                    eject_end: None,
                    deflections: 0,
                    pass: 0,
                    ejecting: false,
                    ejected: 0,
                    rearmed: false,
                });
            }
        }
        let mut release_order: Vec<u32> = (0..packets.len() as u32).collect();
        release_order.sort_by_key(|&p| (packets[p as usize].release, packets[p as usize].flow));

        let max_period = set.flows().iter().map(|f| f.period).max().unwrap_or(0);
        let drain = config.drain.unwrap_or(2 * max_period + 1000);

        Ok(Network {
            set,
            mode: config.mode,
            header_len: set.header_len() as u32,
            protocol_check: config.protocol_check,
            seed: config.seed,
            horizon: config.horizon,
            end: config.horizon + drain,
            bounds: config.bounds.clone(),
            ring_base,
            port_ring,
            port_switch,
            source_port,
            ports: (0..n_ports).map(|_| Port::default()).collect(),
            switches: (0..topo.n_switches()).map(|_| SwitchState::default()).collect(),
            packets,
            release_order,
            next_release: 0,
            cycle: 0,
            in_flight: 0,
            flit_hops: 0,
            injected: 0,
            ejected: 0,
            discarded: 0,
            peak_buffer: 0,
            violations: Vec::new(),
            consumed: vec![false; n_ports],
            quiet: vec![false; n_ports],
            outputs: vec![None; n_ports],
            contenders: Vec::new(),
        })
    }

    pub fn cycle(&self) -> Cycles {
        self.cycle
    }

    /// No flit anywhere and nothing waiting to inject.
    pub fn is_idle(&self) -> bool {
        self.in_flight == 0
            && self.ports.iter().all(|p| p.stream.is_none())
            && self.switches.iter().all(|s| s.queue.is_empty())
    }

    /// Flits currently on links or in packet buffers.
    pub fn flits_in_flight(&self) -> u64 {
        self.in_flight
    }

    pub fn run_to_completion(&mut self) -> Result<(), SimError> {
        loop {
            if self.is_idle() {
                let Some(&next) = self.release_order.get(self.next_release) else {
                    break;
                };
                // a packet released at t may start injecting at t + 1
                self.cycle = self.cycle.max(self.packets[next as usize].release + 1);
            }
            if self.cycle >= self.end {
                break;
            }
            self.step()?;
        }
        Ok(())
    }

    fn length(&self, packet: u32) -> u32 {
        self.set.flows()[self.packets[packet as usize].flow].length as u32
    }

    fn dest(&self, packet: u32) -> SwitchId {
        self.set.flows()[self.packets[packet as usize].flow].dst.switch()
    }

    fn origin(&self, packet: u32) -> SwitchId {
        self.set.flows()[self.packets[packet as usize].flow].src.switch()
    }

    fn invariant(&self, detail: String) -> SimError {
        SimError::Invariant {
            cycle: self.cycle,
            detail,
        }
    }

    fn eject(&mut self, port: usize, flit: Flit) -> Result<(), SimError> {
        let t = self.cycle;
        let sw = self.port_switch[port].index();
        if self.protocol_check {
            let pk = &self.packets[flit.packet as usize];
            if flit.index != pk.ejected {
                return Err(self.invariant(format!(
                    "packet {} ejected flit {} after {} flits",
                    flit.packet, flit.index, pk.ejected
                )));
            }
            if self.switches[sw].eject_owner != Some(flit.packet) || t >= self.switches[sw].eject_free_at {
                return Err(self.invariant(format!(
                    "packet {} ejected at {} without holding the link",
                    flit.packet, self.port_switch[port]
                )));
            }
        }
        let len = self.length(flit.packet);
        let pk = &mut self.packets[flit.packet as usize];
        pk.ejected += 1;
        if pk.ejected == len {
            pk.eject_end = Some(t + 1);
            pk.ejecting = false;
        }
        self.ejected += 1;
        self.in_flight -= 1;
        self.consumed[port] = true;
        Ok(())
    }

    /// Advances the network by one clock cycle.
    pub fn step(&mut self) -> Result<(), SimError> {
        let t = self.cycle;
        let h = self.header_len;

        while let Some(&p) = self.release_order.get(self.next_release) {
            let pk = &self.packets[p as usize];
            if pk.release >= t {
                break;
            }
            let src = self.set.flows()[pk.flow].src.switch();
            self.switches[src.index()].queue.push_back(p);
            self.next_release += 1;
        }

        // ejection and deflection
        self.consumed.fill(false);
        self.contenders.clear();
        for port in 0..self.ports.len() {
            let Some(flit) = self.ports[port].incoming else {
                continue;
            };
            if self.port_switch[port] != self.dest(flit.packet) {
                continue;
            }
            let pk = &self.packets[flit.packet as usize];
            if let Some(hdr) = flit.header {
                if !hdr.reinject {
                    let ring = RingId(self.port_ring[port].0);
                    self.contenders.push((hdr.injected_at, ring, port));
                }
            } else if flit.index < h {
                if pk.ejecting {
                    self.eject(port, flit)?;
                }
            } else if pk.ejecting && flit.pass == pk.pass {
                self.eject(port, flit)?;
            } else if self.mode == ProtocolMode::Proposed {
                self.discarded += 1;
                self.in_flight -= 1;
                self.consumed[port] = true;
            }
        }
        self.contenders.sort_unstable();
        for k in 0..self.contenders.len() {
            let (_, _, port) = self.contenders[k];
            let mut flit = self.ports[port].incoming.expect("contender has a flit");
            let sw = self.port_switch[port].index();
            if t >= self.switches[sw].eject_free_at {
                let len = self.length(flit.packet) as Cycles;
                self.switches[sw].eject_free_at = t + len;
                self.switches[sw].eject_owner = Some(flit.packet);
                self.packets[flit.packet as usize].ejecting = true;
                self.eject(port, flit)?;
            } else {
                let hdr = flit.header.as_mut().expect("contenders are headers");
                deflect(self.mode, hdr);
                self.packets[flit.packet as usize].deflections += 1;
                self.ports[port].incoming = Some(flit);
            }
        }

        // ring outputs: stream > buffer > input
        for port in 0..self.ports.len() {
            let raw = self.ports[port].incoming.take();
            let fwd = if self.consumed[port] { None } else { raw };
            let p = &mut self.ports[port];
            let mut finished = None;
            let streamed = p.stream.is_some();
            let out = if let Some(st) = p.stream.as_mut() {
                let flit = Flit {
                    packet: st.packet,
                    index: st.next,
                    pass: st.pass,
                    header: None,
                };
                st.next += 1;
                self.injected += 1;
                self.in_flight += 1;
                if st.next == st.end {
                    finished = Some(*st);
                    p.stream = None;
                }
                p.buffer.extend(fwd);
                Some(flit)
            } else if let Some(f) = p.buffer.pop_front() {
                p.buffer.extend(fwd);
                Some(f)
            } else {
                fwd
            };
            if let Some(st) = finished {
                if st.fresh {
                    self.packets[st.packet as usize].inject_end = Some(t + 1);
                }
            }
            self.check_buffer(port)?;
            self.quiet[port] = raw.is_none() && out.is_none();
            self.outputs[port] = out;
            if let (Some(flit), false) = (out, streamed) {
                self.on_forward(port, flit);
            }
        }

        // new injections
        for sw in 0..self.switches.len() {
            let s = &self.switches[sw];
            if t < s.link_free_at {
                continue;
            }
            let Some(&packet) = s.queue.front() else {
                continue;
            };
            let flow = self.packets[packet as usize].flow;
            let port = self.source_port[flow];
            if !self.quiet[port] {
                continue;
            }
            let len = self.length(packet);
            self.switches[sw].queue.pop_front();
            self.outputs[port] = Some(Flit {
                packet,
                index: 0,
                pass: 0,
                header: Some(HeaderFields {
                    dest: self.dest(packet),
                    origin: SwitchId(sw as u32),
                    reinject: false,
                    injected_at: t,
                }),
            });
            self.injected += 1;
            self.in_flight += 1;
            self.packets[packet as usize].inject_start = Some(t);
            self.switches[sw].link_free_at = t + len as Cycles;
            if len > 1 {
                self.ports[port].stream = Some(Stream {
                    packet,
                    next: 1,
                    end: len,
                    pass: 0,
                    fresh: true,
                });
            } else {
                self.packets[packet as usize].inject_end = Some(t + 1);
            }
        }

        // links
        for (r, &base) in self.ring_base.iter().enumerate() {
            let len = self.set.topology().rings[r].len();
            for k in 0..len {
                let out = self.outputs[base + k].take();
                if out.is_some() {
                    self.flit_hops += 1;
                }
                self.ports[base + (k + 1) % len].incoming = out;
            }
        }

        if self.protocol_check {
            let held: u64 = self
                .ports
                .iter()
                .map(|p| p.buffer.len() as u64 + p.incoming.is_some() as u64)
                .sum();
            if held != self.in_flight || self.injected != self.ejected + self.discarded + self.in_flight {
                return Err(self.invariant(format!(
                    "flit conservation: {held} held, {} in flight, {} injected, {} ejected, {} discarded",
                    self.in_flight, self.injected, self.ejected, self.discarded
                )));
            }
        }
        self.cycle += 1;
        Ok(())
    }

    /// Handles a returning header as it leaves its origin switch.
    fn on_forward(&mut self, port: usize, mut flit: Flit) {
        if self.port_switch[port] != self.origin(flit.packet) {
            return;
        }
        if let Some(hdr) = flit.header.as_mut().filter(|h| h.reinject) {
            hdr.reinject = false;
            self.outputs[port] = Some(flit);
            self.packets[flit.packet as usize].rearmed = true;
        }
        if flit.index + 1 != self.header_len || !self.packets[flit.packet as usize].rearmed {
            return;
        }
        // last header flit leaves the origin: stream the retained payload behind it
        let t = self.cycle;
        let len = self.length(flit.packet);
        let pk = &mut self.packets[flit.packet as usize];
        pk.rearmed = false;
        pk.pass += 1;
        if pk.next_release.is_some_and(|r| r <= t) {
            let flow = self.set.flows()[pk.flow].id;
            self.violations.push(Violation::PayloadEvicted {
                flow,
                seq: pk.seq,
                cycle: t,
            });
        }
        if len > self.header_len {
            self.ports[port].stream = Some(Stream {
                packet: flit.packet,
                next: self.header_len,
                end: len,
                pass: pk.pass,
                fresh: false,
            });
        }
    }

    fn check_buffer(&mut self, port: usize) -> Result<(), SimError> {
        let occupancy = self.ports[port].buffer.len();
        self.peak_buffer = self.peak_buffer.max(occupancy);
        let (ring, _) = self.port_ring[port];
        let capacity = self.set.topology().rings[ring as usize].buffer_size;
        if occupancy as Cycles <= capacity {
            return Ok(());
        }
        let (ring, switch) = (RingId(ring), self.port_switch[port]);
        match self.mode {
            ProtocolMode::Baseline => Err(SimError::BufferOverflow {
                cycle: self.cycle,
                ring,
                switch,
                occupancy,
                capacity,
            }),
            ProtocolMode::Proposed => {
                if occupancy as Cycles == capacity + 1 {
                    self.violations.push(Violation::BufferOverflow {
                        ring,
                        switch,
                        cycle: self.cycle,
                        occupancy,
                    });
                }
                Ok(())
            }
        }
    }

    pub fn into_trace(self) -> SimTrace {
        let flows = self.set.flows();
        let mut summaries: Vec<FlowSummary> = flows
            .iter()
            .enumerate()
            .map(|(i, f)| FlowSummary {
                flow: f.id,
                packets: 0,
                delivered: 0,
                max_latency: 0,
                max_deflections: 0,
                bound: self.bounds.as_ref().map(|b| b[i]),
            })
            .collect();
        let mut violations = self.violations;
        let mut records = Vec::with_capacity(self.packets.len());
        for pk in &self.packets {
            let id = flows[pk.flow].id;
            let latency = pk.eject_end.map(|e| e - pk.release);
            let bound = self.bounds.as_ref().map(|b| b[pk.flow]);
            let violated = match (latency, bound) {
                (None, _) => true,
                (Some(l), Some(b)) => l > b,
                (Some(_), None) => false,
            };
            match (latency, bound) {
                (None, _) => violations.push(Violation::Undelivered { flow: id, seq: pk.seq }),
                (Some(l), Some(b)) if l > b => violations.push(Violation::BoundExceeded {
                    flow: id,
                    seq: pk.seq,
                    latency: l,
                    bound: b,
                }),
                _ => {}
            }
            let s = &mut summaries[pk.flow];
            s.packets += 1;
            if let Some(l) = latency {
                s.delivered += 1;
                s.max_latency = s.max_latency.max(l);
            }
            s.max_deflections = s.max_deflections.max(pk.deflections);
            records.push(PacketRecord {
                flow: id,
                seq: pk.seq,
                release: pk.release,
                inject_start: pk.inject_start,
                inject_end: pk.inject_end,
                eject_end: pk.eject_end,
                deflections: pk.deflections,
                latency,
                violated_bound: violated,
            });
        }
        SimTrace {
            mode: self.mode,
            seed: self.seed,
            horizon: self.horizon,
            end_cycle: self.cycle,
            packets: records,
            flows: summaries,
            flit_hops: self.flit_hops,
            injected_flits: self.injected,
            ejected_flits: self.ejected,
            discarded_flits: self.discarded,
            peak_buffer: self.peak_buffer,
            violations,
        }
    }
}
