use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rlnoc_core::analysis::{analyze, AnalysisReport, ProtocolMode};
use rlnoc_core::bench::{generate_flowset, improvement_report, schedulability_sweep, SweepConfig, Traffic};
use rlnoc_core::model::io::FlowsetFile;
use rlnoc_core::model::{generate_rlrec, Cycles, Flowset};
use rlnoc_core::sim::{self, default_horizon, ReleasePattern, SimConfig, DEFAULT_HORIZON_CAP};

/// Worst-case latency analysis and simulation for routerless ring NoCs.
#[derive(Parser)]
#[command(name = "rlnoc", version)]
struct Cli {
    /// Directory for generated files.
    #[arg(long, global = true, env = "RLNOC_OUT", default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Baseline,
    Proposed,
    Both,
}

impl ModeArg {
    fn modes(self) -> &'static [ProtocolMode] {
        match self {
            ModeArg::Baseline => &[ProtocolMode::Baseline],
            ModeArg::Proposed => &[ProtocolMode::Proposed],
            ModeArg::Both => &ProtocolMode::ALL,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PatternArg {
    Synchronous,
    Jitter,
    Sporadic,
}

impl From<PatternArg> for ReleasePattern {
    fn from(p: PatternArg) -> Self {
        match p {
            PatternArg::Synchronous => ReleasePattern::SYNCHRONOUS,
            PatternArg::Jitter => ReleasePattern::PeriodicWithJitter,
            PatternArg::Sporadic => ReleasePattern::Sporadic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the RLrec ring layout of a square grid.
    GenTopology {
        #[arg(long)]
        grid: u32,
        #[arg(long, default_value = "topology.json")]
        name: String,
    },
    /// Write a random synthetic flowset.
    GenFlowset {
        #[arg(long, default_value_t = 4)]
        grid: u32,
        #[arg(long)]
        flows: usize,
        /// Packet length range in flits, e.g. 16-48.
        #[arg(long, default_value = "16-48", value_parser = parse_range)]
        packets: (Cycles, Cycles),
        /// Same maxloop for every flow; derived from ejection competition if absent.
        #[arg(long)]
        maxloop: Option<u32>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "flowset.json")]
        name: String,
    },
    /// Compute worst-case latency bounds.
    Analyze {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
    },
    /// Run the cycle-accurate simulator and check observed latencies against the bounds.
    Simulate {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        /// Cycles during which packets are released. Defaults to 2 * max(T) * flows, capped.
        #[arg(long)]
        horizon: Option<Cycles>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PatternArg::Synchronous)]
        pattern: PatternArg,
        /// Per-cycle flit conservation and ordering checks.
        #[arg(long)]
        protocol_check: bool,
    },
    /// Schedulability ratio sweep over synthetic flowsets.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker threads; all cores by default.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Per-flow bound improvement over random task mappings.
    Improve {
        #[arg(long)]
        traffic: PathBuf,
        #[arg(long)]
        grid: u32,
        #[arg(long, default_value_t = 100)]
        mappings: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn parse_range(s: &str) -> Result<(Cycles, Cycles), String> {
    let (lo, hi) = s.split_once('-').ok_or("expected LO-HI")?;
    let lo = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}-{hi}"));
    }
    Ok((lo, hi))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_flowset(path: &Path) -> Result<Flowset> {
    let file = FlowsetFile::parse(&read(path)?).with_context(|| format!("{}", path.display()))?;
    file.into_flowset().with_context(|| format!("{}", path.display()))
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn csv(&self, name: &str, header: &str, rows: impl Iterator<Item = String>) -> Result<PathBuf> {
        let mut text = format!("{header}\n");
        for r in rows {
            text.push_str(&r);
            text.push('\n');
        }
        self.write(name, &text)
    }
}

fn print_report(report: &AnalysisReport) {
    for f in &report.flows {
        let verdict = match (f.converged, f.schedulable) {
            (false, _) => "unbounded",
            (true, true) => "ok",
            (true, false) => "MISS",
        };
        println!("{} {}: R={} D={} {verdict}", report.mode, f.flow, f.response, f.deadline);
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let out = Output { dir: cli.out };
    match cli.command {
        Command::GenTopology { grid, name } => {
            let topo = generate_rlrec(grid, grid, 1)?;
            let path = out.write(&name, &FlowsetFile::from_topology(&topo).to_json())?;
            println!("{grid}x{grid}: {} rings -> {}", topo.rings.len(), path.display());
        }
        Command::GenFlowset {
            grid,
            flows,
            packets,
            maxloop,
            seed,
            name,
        } => {
            let topo = Arc::new(generate_rlrec(grid, grid, 1)?);
            let config = SweepConfig::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = generate_flowset(&config, packets, flows, &topo, maxloop.unwrap_or(0), &mut rng)?;
            let set = match maxloop {
                Some(_) => set,
                None => set.with_oldest_first_maxloop(),
            };
            let path = out.write(&name, &FlowsetFile::from_flowset(&set).to_json())?;
            println!("{flows} flows on {grid}x{grid} (seed {seed}) -> {}", path.display());
        }
        Command::Analyze { file, mode } => {
            let set = load_flowset(&file)?;
            let reports: Vec<AnalysisReport> = mode.modes().iter().map(|&m| analyze(&set, m)).collect();
            for r in &reports {
                print_report(r);
            }
            let path = out.csv(
                "analysis.csv",
                AnalysisReport::CSV_HEADER,
                reports.iter().flat_map(|r| r.csv_rows()),
            )?;
            for r in &reports {
                println!(
                    "{}: {} ({} passes) -> {}",
                    r.mode,
                    if r.schedulable { "schedulable" } else { "not schedulable" },
                    r.passes,
                    path.display()
                );
            }
        }
        Command::Simulate {
            file,
            mode,
            horizon,
            seed,
            pattern,
            protocol_check,
        } => {
            let set = load_flowset(&file)?;
            let horizon = horizon.unwrap_or_else(|| default_horizon(&set, DEFAULT_HORIZON_CAP));
            let mut failed = false;
            for &m in mode.modes() {
                let report = analyze(&set, m);
                let config = SimConfig {
                    pattern: pattern.into(),
                    seed,
                    bounds: Some(report.flows.iter().map(|f| f.response).collect()),
                    protocol_check,
                    ..SimConfig::new(m, horizon)
                };
                let trace = sim::run(&set, &config).with_context(|| format!("{m} simulation"))?;
                out.csv(&format!("trace_{m}.csv"), sim::SimTrace::CSV_HEADER, trace.csv_rows())?;
                out.csv(&format!("summary_{m}.csv"), sim::SimTrace::SUMMARY_HEADER, trace.summary_rows())?;
                for (s, f) in trace.flows.iter().zip(&report.flows) {
                    println!(
                        "{m} {}: {}/{} delivered, max latency {} (bound {}), max deflections {}",
                        s.flow, s.delivered, s.packets, s.max_latency, f.response, s.max_deflections
                    );
                }
                for v in &trace.violations {
                    eprintln!("{m}: {v}");
                }
                // buffer excursions are reported but do not invalidate the bounds
                let fatal = trace
                    .violations
                    .iter()
                    .filter(|v| !matches!(v, sim::Violation::BufferOverflow { .. }))
                    .count();
                println!(
                    "{m}: {} packets, {} flit-hops, {} deflections, {} violations (horizon {horizon}, seed {seed})",
                    trace.packets.len(),
                    trace.flit_hops,
                    trace.total_deflections(),
                    fatal
                );
                failed |= fatal > 0;
            }
            if failed {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Sweep { config, jobs } => {
            let config = match config {
                Some(path) => SweepConfig::parse(&read(&path)?).with_context(|| format!("{}", path.display()))?,
                None => SweepConfig::default(),
            };
            let result = schedulability_sweep(&config, jobs)?;
            for r in &result.rows {
                println!(
                    "{g}x{g} {}-{} n={} maxloop={} {}: {:.0}%",
                    r.packet_range.0,
                    r.packet_range.1,
                    r.n_flows,
                    r.maxloop,
                    r.mode,
                    r.ratio(),
                    g = r.grid
                );
            }
            let path = out.write("sweep.csv", &result.to_csv())?;
            out.write("sweep_config.json", &serde_json::to_string_pretty(&config)?)?;
            println!("{} rows (seed {}) -> {}", result.rows.len(), config.seed, path.display());
        }
        Command::Improve {
            traffic,
            grid,
            mappings,
            seed,
        } => {
            let t = Traffic::parse(&read(&traffic)?).with_context(|| format!("{}", traffic.display()))?;
            if t.flows.is_empty() {
                bail!("{}: no flows", traffic.display());
            }
            let topo = Arc::new(generate_rlrec(grid, grid, 1)?);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let report = improvement_report(&t, &topo, mappings, &mut rng)?;
            let path = out.write("improvement.csv", &report.to_csv())?;
            println!(
                "{grid}x{grid}: max {:.2}%, pooled mean {:.2}% over {mappings} mappings, {} flows excluded (seed {seed}) -> {}",
                report.max(),
                report.pooled_mean(),
                report.excluded(),
                path.display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
