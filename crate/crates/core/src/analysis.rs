//! Worst-case latency bounds for every flow of a [`Flowset`].
//!
//! The bound of flow `i` is
//!
//! ```text
//! R_i = C_i + r * maxloop_i + I_pre_queue + I_pre_idle + I_pos
//! ```
//!
//! where `I_pre_idle` is the longest busy period of the output port at the
//! source switch, `I_pre_queue` the time spent behind other packets of the
//! same core and `I_pos` the buffering and deflection delay after
//! injection. The two protocols differ only in `I_pre_idle`: with
//! header-only deflection, flows that cross the source switch only while
//! deflected cost `H` flits per deflection instead of a full packet.
//!
//! Interference jitter is taken as `R_j - C_j` and resolved by iterating
//! whole-flowset passes from zero jitter until no bound changes.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::model::{Cycles, FlowId, Flowset, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolMode {
    /// Full-packet deflection.
    Baseline,
    /// Header-only deflection with payload re-injection at the source.
    Proposed,
}

impl ProtocolMode {
    pub const ALL: [ProtocolMode; 2] = [ProtocolMode::Baseline, ProtocolMode::Proposed];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolMode::Baseline => "baseline",
            ProtocolMode::Proposed => "proposed",
        }
    }
}

impl fmt::Display for ProtocolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(ProtocolMode::Baseline),
            "proposed" => Ok(ProtocolMode::Proposed),
            _ => Err(format!("unknown protocol `{s}` (expected baseline or proposed)")),
        }
    }
}

/// Default ceiling for the busy-period search.
pub const DEFAULT_HARD_CAP: Cycles = 1 << 20;

const MAX_PASSES: u32 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisOptions {
    /// Absolute limit on `I_pre_idle`, in cycles.
    pub hard_cap: Cycles,
    /// Stop as soon as one flow is known to miss its deadline. The
    /// flowset verdict is unaffected; per-flow bounds are left partial.
    pub stop_on_deadline_miss: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            hard_cap: DEFAULT_HARD_CAP,
            stop_on_deadline_miss: false,
        }
    }
}

/// Busy-period search exceeded its limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("busy period of {flow} exceeds {limit} cycles")]
pub struct Divergence {
    pub flow: FlowId,
    pub limit: Cycles,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diverged(#[from] Divergence),
    #[error("jitter map has {got} entries for {want} flows")]
    JitterMapSize { got: usize, want: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlowAnalysis {
    pub flow: FlowId,
    /// `C_i`
    pub no_load: Cycles,
    pub ipre_idle: Cycles,
    pub ipre_queue: Cycles,
    pub ipos: Cycles,
    /// `R_i`. Meaningless when `converged` is false.
    pub response: Cycles,
    pub deadline: Cycles,
    /// `R_i - C_i`, the jitter this flow imposes on the flows it delays.
    pub interference_jitter: Cycles,
    pub schedulable: bool,
    pub converged: bool,
    /// Busy-period iterations, summed over all passes.
    pub iterations: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub mode: ProtocolMode,
    pub flows: Vec<FlowAnalysis>,
    pub schedulable: bool,
    /// Whole-flowset passes of the interference-jitter iteration.
    pub passes: u32,
    pub wall_time: Duration,
}

impl AnalysisReport {
    /// True when both reports carry identical per-flow results.
    pub fn same_bounds(&self, other: &AnalysisReport) -> bool {
        self.flows == other.flows && self.schedulable == other.schedulable
    }

    pub fn flow(&self, id: FlowId) -> Option<&FlowAnalysis> {
        self.flows.iter().find(|f| f.flow == id)
    }

    pub const CSV_HEADER: &'static str =
        "flow_id,mode,C,ipre_idle,ipre_queue,ipos,R,D,schedulable,iterations,converged";

    /// One CSV row per flow, no header.
    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        self.flows.iter().map(move |f| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                f.flow.0,
                self.mode,
                f.no_load,
                f.ipre_idle,
                f.ipre_queue,
                f.ipos,
                f.response,
                f.deadline,
                f.schedulable,
                f.iterations,
                f.converged
            )
        })
    }
}

/// Busy-period interferers of one flow: `(flow index, flits charged per
/// activation)`, zero charges dropped.
fn busy_period_terms(set: &Flowset, i: usize, mode: ProtocolMode) -> Vec<(usize, Cycles)> {
    let flows = set.flows();
    let sets = set.interference_indices(i);
    let mut terms = Vec::with_capacity(sets.ring.len());
    for &j in &sets.upstream {
        let fj = &flows[j];
        // once on the way to the destination, plus every deflection
        terms.push((j, fj.length * (1 + fj.maxloop as Cycles)));
    }
    for &j in &sets.deflected {
        let fj = &flows[j];
        let per_loop = match mode {
            ProtocolMode::Baseline => fj.length,
            ProtocolMode::Proposed => set.header_len(),
        };
        let charge = per_loop * fj.maxloop as Cycles;
        if charge > 0 {
            terms.push((j, charge));
        }
    }
    terms
}

fn busy_limit(set: &Flowset, i: usize, hard_cap: Cycles) -> Cycles {
    let f = &set.flows()[i];
    let span = f.deadline.max(f.period);
    span.saturating_mul(1 + f.maxloop as Cycles).min(hard_cap)
}

/// Least fixed point of the busy-period equation, ascending from `start`.
/// `None` jitter marks an interferer whose own bound diverged.
fn busy_period(
    set: &Flowset,
    i: usize,
    terms: &[(usize, Cycles)],
    jitter: &[Option<Cycles>],
    start: Cycles,
    limit: Cycles,
) -> Result<(Cycles, u32), Divergence> {
    let flows = set.flows();
    let diverged = Divergence {
        flow: flows[i].id,
        limit,
    };
    if terms.iter().any(|&(j, _)| jitter[j].is_none()) {
        return Err(diverged);
    }
    let mut busy = start.max(1);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut next: Cycles = 1;
        for &(j, charge) in terms {
            let fj = &flows[j];
            let window = busy + fj.jitter + jitter[j].expect("checked above");
            next += window.div_ceil(fj.period) * charge;
        }
        if next == busy {
            return Ok((busy, iterations));
        }
        if next > limit {
            return Err(diverged);
        }
        busy = next;
    }
}

fn check_jitter_len(set: &Flowset, jitter: &[Option<Cycles>]) -> Result<(), AnalysisError> {
    if jitter.len() != set.len() {
        return Err(AnalysisError::JitterMapSize {
            got: jitter.len(),
            want: set.len(),
        });
    }
    Ok(())
}

/// `I_pre_idle` of flow `id`. `jitter` holds the interference jitter of
/// every flow, indexed like [`Flowset::flows`]; `None` means unbounded.
pub fn ipre_idle(
    set: &Flowset,
    id: FlowId,
    mode: ProtocolMode,
    jitter: &[Option<Cycles>],
) -> Result<Cycles, AnalysisError> {
    check_jitter_len(set, jitter)?;
    let i = set.index_of(id)?;
    let terms = busy_period_terms(set, i, mode);
    let limit = busy_limit(set, i, DEFAULT_HARD_CAP);
    Ok(busy_period(set, i, &terms, jitter, 1, limit)?.0)
}

/// `I_pre_queue` of flow `id`, given `I_pre_idle` of every flow.
pub fn ipre_queue(set: &Flowset, id: FlowId, idle: &[Cycles]) -> Result<Cycles, ModelError> {
    let i = set.index_of(id)?;
    Ok(queue_at(set, i, |j| Some(idle[j])).expect("all entries present"))
}

fn queue_at(set: &Flowset, i: usize, idle: impl Fn(usize) -> Option<Cycles>) -> Option<Cycles> {
    let flows = set.flows();
    let fi = &flows[i];
    let mut sum = 0;
    for (j, fj) in flows.iter().enumerate() {
        if j != i && fj.src == fi.src {
            sum += fj.length + idle(j)?;
        }
    }
    Some(sum)
}

/// `I_pos`: buffering at every downstream switch plus `maxloop` full loops.
pub fn ipos(set: &Flowset, id: FlowId) -> Result<Cycles, ModelError> {
    Ok(ipos_at(set, set.index_of(id)?))
}

fn ipos_at(set: &Flowset, i: usize) -> Cycles {
    let f = &set.flows()[i];
    let ring = set.ring_of(f);
    let buffer = ring.buffer_size;
    set.hops(f) * buffer + f.maxloop as Cycles * ring.len() as Cycles * buffer
}

fn deflection_travel(set: &Flowset, i: usize) -> Cycles {
    let f = &set.flows()[i];
    set.ring_of(f).len() as Cycles * f.maxloop as Cycles
}

/// Bound of a single flow for a fixed interference-jitter snapshot.
/// `I_pre_idle` of the injection sharers is computed from the same snapshot.
pub fn response_time(
    set: &Flowset,
    id: FlowId,
    mode: ProtocolMode,
    jitter: &[Option<Cycles>],
) -> Result<FlowAnalysis, AnalysisError> {
    check_jitter_len(set, jitter)?;
    let i = set.index_of(id)?;
    let sharers = set.interference_indices(i).injection;
    let mut idle = vec![None; set.len()];
    let mut iterations = 0;
    for k in sharers.iter().copied().chain([i]) {
        let terms = busy_period_terms(set, k, mode);
        let limit = busy_limit(set, k, DEFAULT_HARD_CAP);
        let (v, it) = busy_period(set, k, &terms, jitter, 1, limit)?;
        idle[k] = Some(v);
        if k == i {
            iterations = it;
        }
    }
    let queue = queue_at(set, i, |j| idle[j]).expect("sharers computed");
    Ok(assemble(set, i, idle[i].unwrap(), queue, iterations, true))
}

fn assemble(
    set: &Flowset,
    i: usize,
    idle: Cycles,
    queue: Cycles,
    iterations: u32,
    converged: bool,
) -> FlowAnalysis {
    let f = &set.flows()[i];
    let no_load = set.no_load_latency(f);
    let ipos = ipos_at(set, i);
    let response = no_load + deflection_travel(set, i) + idle + queue + ipos;
    FlowAnalysis {
        flow: f.id,
        no_load,
        ipre_idle: idle,
        ipre_queue: queue,
        ipos,
        response,
        deadline: f.deadline,
        interference_jitter: response - no_load,
        schedulable: converged && response <= f.deadline,
        converged,
        iterations,
    }
}

pub fn analyze(set: &Flowset, mode: ProtocolMode) -> AnalysisReport {
    analyze_with(set, mode, &AnalysisOptions::default())
}

/// Bounds for every flow, with interference jitter resolved by repeated
/// whole-flowset passes. A flow whose busy period diverges (or depends on
/// one that did) is reported unschedulable with `converged = false`.
pub fn analyze_with(set: &Flowset, mode: ProtocolMode, opts: &AnalysisOptions) -> AnalysisReport {
    let started = Instant::now();
    let n = set.len();
    let terms: Vec<_> = (0..n).map(|i| busy_period_terms(set, i, mode)).collect();
    let limits: Vec<_> = (0..n).map(|i| busy_limit(set, i, opts.hard_cap)).collect();

    let mut jitter: Vec<Option<Cycles>> = vec![Some(0); n];
    let mut idle: Vec<Option<Cycles>> = vec![Some(1); n];
    let mut iterations = vec![0u32; n];
    let mut results: Vec<Option<FlowAnalysis>> = vec![None; n];
    let mut passes = 0;

    loop {
        passes += 1;
        for i in 0..n {
            // bounds only grow between passes, so the previous busy period
            // is a valid starting point
            idle[i] = match idle[i] {
                None => None,
                Some(start) => match busy_period(set, i, &terms[i], &jitter, start, limits[i]) {
                    Ok((v, it)) => {
                        iterations[i] += it;
                        Some(v)
                    }
                    Err(_) => None,
                },
            };
        }
        let next: Vec<Option<FlowAnalysis>> = (0..n)
            .map(|i| {
                let own = idle[i]?;
                let queue = queue_at(set, i, |j| idle[j])?;
                Some(assemble(set, i, own, queue, iterations[i], true))
            })
            .collect();

        let missed = next
            .iter()
            .any(|r| r.as_ref().is_none_or(|r| !r.schedulable));
        let stable = next
            .iter()
            .zip(&results)
            .all(|(a, b)| a.as_ref().map(|a| a.response) == b.as_ref().map(|b| b.response));
        jitter = next
            .iter()
            .map(|r| r.as_ref().map(|r| r.interference_jitter))
            .collect();
        results = next;
        if stable || (missed && opts.stop_on_deadline_miss) || passes >= MAX_PASSES {
            break;
        }
    }

    let exhausted = passes >= MAX_PASSES;
    let flows: Vec<FlowAnalysis> = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r {
            Some(mut r) => {
                r.iterations = iterations[i];
                if exhausted {
                    r.converged = false;
                    r.schedulable = false;
                }
                r
            }
            None => {
                // report the partial terms at the divergence limit
                let own = idle[i].unwrap_or(limits[i]);
                let queue = queue_at(set, i, |j| Some(idle[j].unwrap_or(limits[j]))).unwrap();
                assemble(set, i, own, queue, iterations[i], false)
            }
        })
        .collect();
    AnalysisReport {
        mode,
        schedulable: flows.iter().all(|f| f.schedulable),
        flows,
        passes,
        wall_time: started.elapsed(),
    }
}
