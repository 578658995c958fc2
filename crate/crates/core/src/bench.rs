//! Synthetic flowset generation, schedulability sweeps and per-mapping
//! improvement statistics.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, analyze_with, AnalysisOptions, ProtocolMode};
use crate::model::{generate_rlrec, CoreId, Cycles, FlowId, FlowSpec, Flowset, ModelError, NetworkTopology};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid sweep config: {0}")]
    Config(String),
    #[error("traffic has {endpoints} endpoints but the grid only {cores} cores")]
    TooManyEndpoints { endpoints: usize, cores: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Parse(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Inclusive range with a step, e.g. flows per flowset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRange {
    pub start: usize,
    pub end: usize,
    pub step: usize,
}

impl StepRange {
    pub fn values(&self) -> Vec<usize> {
        (self.start..=self.end).step_by(self.step.max(1)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Square grid sizes.
    pub grids: Vec<u32>,
    pub flows: StepRange,
    pub flowsets_per_point: usize,
    /// Packet length ranges in flits, inclusive.
    pub packet_ranges: Vec<(Cycles, Cycles)>,
    /// Period range in microseconds.
    pub period_us: (f64, f64),
    /// Jitter range as a fraction of the period.
    pub jitter_fraction: (f64, f64),
    pub clock_mhz: u64,
    pub maxloops: Vec<u32>,
    /// `D = deadline_fraction * T`.
    pub deadline_fraction: f64,
    pub header_len: Cycles,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            grids: vec![4, 5, 6],
            flows: StepRange {
                start: 20,
                end: 280,
                step: 20,
            },
            flowsets_per_point: 100,
            packet_ranges: vec![(16, 48), (32, 96)],
            period_us: (1.0, 100.0),
            jitter_fraction: (0.0, 0.5),
            clock_mhz: 1000,
            maxloops: vec![0, 1, 2, 3],
            deadline_fraction: 1.0,
            header_len: 1,
            seed: 1,
        }
    }
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let config: SweepConfig = serde_json::from_str(text).map_err(|e| BenchError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |msg: &str| Err(BenchError::Config(msg.to_string()));
        if self.grids.is_empty() || self.grids.iter().any(|&g| g < 2) {
            return fail("grids must be non-empty and at least 2");
        }
        if self.flows.start > self.flows.end || self.flows.step == 0 {
            return fail("flows range is empty");
        }
        if self.flowsets_per_point == 0 {
            return fail("flowsets_per_point must be positive");
        }
        if self.packet_ranges.is_empty()
            || self
                .packet_ranges
                .iter()
                .any(|&(lo, hi)| lo > hi || lo < self.header_len)
        {
            return fail("packet ranges must be non-empty and at least header_len");
        }
        let (plo, phi) = self.period_us;
        if !(plo > 0.0 && plo <= phi) {
            return fail("period range is empty");
        }
        let (jlo, jhi) = self.jitter_fraction;
        if !(0.0 <= jlo && jlo <= jhi) {
            return fail("jitter range is empty");
        }
        if self.clock_mhz == 0 || self.header_len == 0 {
            return fail("clock and header length must be positive");
        }
        if self.maxloops.is_empty() {
            return fail("maxloops must be non-empty");
        }
        if !(self.deadline_fraction > 0.0 && self.deadline_fraction <= 1.0) {
            return fail("deadline_fraction must be in (0, 1]");
        }
        Ok(())
    }

    fn cycles(&self, us: f64) -> Cycles {
        (us * self.clock_mhz as f64).round() as Cycles
    }
}

/// Mixes a seed with point coordinates (splitmix64 finaliser).
pub fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(seed, |acc, &p| {
        let mut z = acc ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(acc << 6);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    })
}

/// Random flowset with `n_flows` flows over distinct core pairs. Every flow
/// gets `maxloop`; use [`Flowset::with_maxloop`] to vary it.
pub fn generate_flowset(
    config: &SweepConfig,
    packet_range: (Cycles, Cycles),
    n_flows: usize,
    topology: &Arc<NetworkTopology>,
    maxloop: u32,
    rng: &mut impl Rng,
) -> Result<Flowset, ModelError> {
    let n_cores = topology.n_switches() as u32;
    let (tlo, thi) = (config.cycles(config.period_us.0), config.cycles(config.period_us.1));
    let specs = (0..n_flows)
        .map(|i| {
            let src = rng.random_range(0..n_cores);
            let dst = (src + rng.random_range(1..n_cores)) % n_cores;
            let period = rng.random_range(tlo..=thi);
            let frac = rng.random_range(config.jitter_fraction.0..=config.jitter_fraction.1);
            let deadline = ((period as f64 * config.deadline_fraction) as Cycles).max(1);
            FlowSpec {
                id: FlowId(i as u32),
                period,
                deadline,
                length: rng.random_range(packet_range.0..=packet_range.1),
                jitter: (period as f64 * frac) as Cycles,
                src: CoreId(src),
                dst: CoreId(dst),
                maxloop: Some(maxloop),
            }
        })
        .collect();
    Flowset::new(topology.clone(), specs, config.header_len)
}

/// One line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepRow {
    pub grid: u32,
    pub packet_range: (Cycles, Cycles),
    pub n_flows: usize,
    pub maxloop: u32,
    pub mode: ProtocolMode,
    pub schedulable: usize,
    pub total: usize,
}

impl SweepRow {
    /// Percentage of fully schedulable flowsets.
    pub fn ratio(&self) -> f64 {
        100.0 * self.schedulable as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub const CSV_HEADER: &'static str = "grid,packet_range,n_flows,maxloop,mode,schedulable_count,total,ratio";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            writeln!(
                out,
                "{g}x{g},{}-{},{},{},{},{},{},{:.2}",
                r.packet_range.0,
                r.packet_range.1,
                r.n_flows,
                r.maxloop,
                r.mode,
                r.schedulable,
                r.total,
                r.ratio(),
                g = r.grid
            )
            .unwrap();
        }
        out
    }

    pub fn row(&self, grid: u32, packet_range: (Cycles, Cycles), n_flows: usize, maxloop: u32, mode: ProtocolMode) -> Option<&SweepRow> {
        self.rows.iter().find(|r| {
            r.grid == grid && r.packet_range == packet_range && r.n_flows == n_flows && r.maxloop == maxloop && r.mode == mode
        })
    }

    /// Largest Proposed-minus-Baseline ratio over the load points of one
    /// series, with the load where it occurs.
    pub fn max_gap(&self, grid: u32, packet_range: (Cycles, Cycles), maxloop: u32) -> Option<(f64, usize)> {
        self.rows
            .iter()
            .filter(|r| {
                r.grid == grid && r.packet_range == packet_range && r.maxloop == maxloop && r.mode == ProtocolMode::Baseline
            })
            .filter_map(|b| {
                let p = self.row(grid, packet_range, b.n_flows, maxloop, ProtocolMode::Proposed)?;
                Some((p.ratio() - b.ratio(), b.n_flows))
            })
            .max_by(|a, b| a.0.total_cmp(&b.0))
    }
}

/// Analyses every generated flowset under every maxloop value and both
/// modes. The same flowsets are reused across maxloop values and modes.
/// `jobs` limits the worker pool; `None` uses all cores.
pub fn schedulability_sweep(config: &SweepConfig, jobs: Option<usize>) -> Result<SweepResult, BenchError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    let loads = config.flows.values();
    let mut points = Vec::new();
    for &grid in &config.grids {
        let topo = Arc::new(generate_rlrec(grid, grid, 1)?);
        for &range in &config.packet_ranges {
            for &n in &loads {
                points.push((grid, topo.clone(), range, n));
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..config.flowsets_per_point).map(move |k| (p, k)))
        .collect();
    let opts = AnalysisOptions {
        stop_on_deadline_miss: true,
        ..AnalysisOptions::default()
    };
    // verdicts[job][maxloop][mode]
    let verdicts: Vec<Result<Vec<[bool; 2]>, ModelError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, k)| {
                let (grid, topo, range, n) = &points[p];
                let seed = mix_seed(config.seed, &[*grid as u64, range.0, range.1, *n as u64, k as u64]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let base = generate_flowset(config, *range, *n, topo, 0, &mut rng)?;
                Ok(config
                    .maxloops
                    .iter()
                    .map(|&m| {
                        let set = base.with_maxloop(m);
                        ProtocolMode::ALL.map(|mode| analyze_with(&set, mode, &opts).schedulable)
                    })
                    .collect())
            })
            .collect()
    });
    let mut rows = Vec::new();
    for (p, (grid, _, range, n)) in points.iter().enumerate() {
        let chunk = &verdicts[p * config.flowsets_per_point..(p + 1) * config.flowsets_per_point];
        for (mi, &maxloop) in config.maxloops.iter().enumerate() {
            for (k, mode) in ProtocolMode::ALL.into_iter().enumerate() {
                let mut schedulable = 0;
                for v in chunk {
                    let v = v.as_ref().map_err(|e| BenchError::Model(e.clone()))?;
                    schedulable += v[mi][k] as usize;
                }
                rows.push(SweepRow {
                    grid: *grid,
                    packet_range: *range,
                    n_flows: *n,
                    maxloop,
                    mode,
                    schedulable,
                    total: chunk.len(),
                });
            }
        }
    }
    Ok(SweepResult {
        seed: config.seed,
        rows,
    })
}

fn default_header_len() -> Cycles {
    1
}

/// Application traffic whose `src`/`dst` are task indices rather than cores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Traffic {
    #[serde(default = "default_header_len")]
    pub header_len: Cycles,
    pub flows: Vec<FlowSpec>,
}

impl Traffic {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        serde_json::from_str(text).map_err(|e| BenchError::Parse(e.to_string()))
    }

    /// Number of distinct task slots (highest task index + 1).
    pub fn endpoints(&self) -> usize {
        self.flows
            .iter()
            .flat_map(|f| [f.src.0, f.dst.0])
            .max()
            .map_or(0, |m| m as usize + 1)
    }

    /// Places task `k` on core `cores[k]`.
    pub fn map(&self, topology: &Arc<NetworkTopology>, cores: &[u32]) -> Result<Flowset, ModelError> {
        let specs = self
            .flows
            .iter()
            .map(|f| FlowSpec {
                src: CoreId(cores[f.src.index()]),
                dst: CoreId(cores[f.dst.index()]),
                maxloop: f.maxloop,
                ..f.clone()
            })
            .collect();
        Flowset::new(topology.clone(), specs, self.header_len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowImprovement {
    pub flow: FlowId,
    pub r_base: Cycles,
    pub r_prop: Cycles,
    /// `(R_base - R_prop) / R_base * 100`
    pub pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MappingResult {
    pub cores: Vec<u32>,
    pub flows: Vec<FlowImprovement>,
    /// Flows left out because either analysis did not converge.
    pub excluded: usize,
}

impl MappingResult {
    pub fn mean(&self) -> Option<f64> {
        (!self.flows.is_empty()).then(|| self.flows.iter().map(|f| f.pct).sum::<f64>() / self.flows.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImprovementReport {
    pub rows: u32,
    pub cols: u32,
    pub mappings: Vec<MappingResult>,
}

impl ImprovementReport {
    pub const CSV_HEADER: &'static str = "mapping_id,flow_id,R_base,R_prop,improvement_pct";

    /// Largest per-flow improvement over all mappings.
    pub fn max(&self) -> f64 {
        self.mappings
            .iter()
            .flat_map(|m| &m.flows)
            .map(|f| f.pct)
            .fold(0.0, f64::max)
    }

    /// Mean over mappings of each mapping's mean per-flow improvement.
    pub fn pooled_mean(&self) -> f64 {
        let means: Vec<f64> = self.mappings.iter().filter_map(MappingResult::mean).collect();
        if means.is_empty() {
            0.0
        } else {
            means.iter().sum::<f64>() / means.len() as f64
        }
    }

    pub fn excluded(&self) -> usize {
        self.mappings.iter().map(|m| m.excluded).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (k, m) in self.mappings.iter().enumerate() {
            for f in &m.flows {
                writeln!(out, "{k},{},{},{},{:.4}", f.flow.0, f.r_base, f.r_prop, f.pct).unwrap();
            }
        }
        out
    }
}

/// Compares both analyses of `traffic` over `n_mappings` random placements
/// of its tasks onto distinct cores. `maxloop` values left unset in the
/// traffic are derived per mapping.
pub fn improvement_report(
    traffic: &Traffic,
    topology: &Arc<NetworkTopology>,
    n_mappings: usize,
    rng: &mut impl Rng,
) -> Result<ImprovementReport, BenchError> {
    let endpoints = traffic.endpoints();
    let cores = topology.n_switches();
    if endpoints > cores {
        return Err(BenchError::TooManyEndpoints { endpoints, cores });
    }
    let mut mappings = Vec::with_capacity(n_mappings);
    for _ in 0..n_mappings {
        let mut perm: Vec<u32> = (0..cores as u32).collect();
        perm.shuffle(rng);
        perm.truncate(endpoints);
        let set = traffic.map(topology, &perm)?;
        let base = analyze(&set, ProtocolMode::Baseline);
        let prop = analyze(&set, ProtocolMode::Proposed);
        let mut result = MappingResult {
            cores: perm,
            flows: Vec::new(),
            excluded: 0,
        };
        for (b, p) in base.flows.iter().zip(&prop.flows) {
            if !(b.converged && p.converged) {
                result.excluded += 1;
                continue;
            }
            result.flows.push(FlowImprovement {
                flow: b.flow,
                r_base: b.response,
                r_prop: p.response,
                pct: (b.response as f64 - p.response as f64) / b.response as f64 * 100.0,
            });
        }
        mappings.push(result);
    }
    Ok(ImprovementReport {
        rows: topology.rows,
        cols: topology.cols,
        mappings,
    })
}
