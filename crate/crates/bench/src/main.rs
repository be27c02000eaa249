use std::fs::File;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use arbor_bench::breadth_depth::{run_breadth_depth, BreadthDepthWorkload};
use arbor_bench::histgen::{generate, HistoryParams};
use arbor_bench::oracle::check_serializable;
use arbor_bench::warehouse::{run_warehouse, WarehouseWorkload};
use arbor_bench::{bench_engine, write_csv, RunMetrics, Target};
use arbor_core::txn::History;
use arbor_core::Scheme;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "arbor-bench", version, about = "Workload driver and serializability checker")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Warehouse catalog workload.
    Warehouse {
        #[command(flatten)]
        common: Common,
        /// Read-write mix as `read-write` percentages.
        #[arg(long, default_value = "20-80", value_parser = parse_mix)]
        mix: u32,
        /// Client-side work per read-write transaction, in milliseconds.
        #[arg(long, default_value_t = 20)]
        work_delay_ms: u64,
        /// Write the recorded history (embedded runs only) as JSON lines.
        #[arg(long)]
        history_out: Option<PathBuf>,
    },
    /// Fan-out or depth sweep over a range-partitioned hierarchy.
    BreadthDepth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "fan-out")]
        sweep: Sweep,
        /// Comma-separated fan-outs or depths.
        #[arg(long, value_delimiter = ',', default_value = "2,10,100,1000")]
        values: Vec<usize>,
        /// Fan-out used by depth sweeps.
        #[arg(long, default_value_t = 10)]
        fan_out: usize,
        /// Clustering attributes per file in depth sweeps.
        #[arg(long, default_value_t = 4)]
        attributes: usize,
        #[arg(long, default_value_t = 10_000)]
        files: usize,
        #[arg(long, default_value_t = 0.01)]
        selectivity: f64,
    },
    /// Check a recorded history for conflict serializability.
    CheckHistory { file: PathBuf },
    /// Generate random concurrent histories and check each one.
    Histories {
        #[arg(long, default_value = "ospl")]
        scheme: Scheme,
        #[arg(long, default_value_t = 1000)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Scheme to run; `all` runs each in turn on a fresh engine.
    #[arg(long, default_value = "all")]
    scheme: String,
    #[arg(long, default_value_t = 16)]
    threads: usize,
    #[arg(long, default_value_t = 5.0)]
    duration_secs: f64,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Drive a running server (started empty with the matching scheme)
    /// instead of an embedded engine.
    #[arg(long)]
    server: Option<SocketAddr>,
    /// CSV output file; defaults to stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sweep {
    FanOut,
    Depth,
}

fn parse_mix(s: &str) -> Result<u32, String> {
    let (r, w) = s.split_once('-').ok_or("expected read-write, e.g. 20-80")?;
    let (r, w): (u32, u32) = (r.parse().map_err(|_| "bad read share")?, w.parse().map_err(|_| "bad write share")?);
    if r + w != 100 {
        return Err("shares must add up to 100".into());
    }
    Ok(r)
}

impl Common {
    fn schemes(&self) -> Result<Vec<Scheme>, String> {
        if self.scheme == "all" {
            return Ok(Scheme::ALL.to_vec());
        }
        self.scheme
            .split(',')
            .map(|s| s.parse::<Scheme>().map_err(|e| e.to_string()))
            .collect()
    }

    fn target(&self, scheme: Scheme, history: bool) -> Target {
        match self.server {
            Some(a) => Target::Wire(a),
            None => Target::Embedded(bench_engine(scheme, history)),
        }
    }

    fn emit(&self, runs: &[RunMetrics]) -> Result<(), String> {
        let res = match &self.csv {
            Some(p) => File::create(p)
                .map_err(|e| e.to_string())
                .and_then(|f| write_csv(f, runs).map_err(|e| e.to_string())),
            None => write_csv(io::stdout().lock(), runs).map_err(|e| e.to_string()),
        };
        res.map_err(|e| format!("writing csv: {e}"))
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.cmd {
        Cmd::Warehouse {
            common,
            mix,
            work_delay_ms,
            history_out,
        } => {
            let mut out = Vec::new();
            for scheme in common.schemes()? {
                for r in 0..common.runs {
                    let w = WarehouseWorkload {
                        threads: common.threads,
                        read_pct: mix,
                        duration: Duration::from_secs_f64(common.duration_secs),
                        work_delay: Duration::from_millis(work_delay_ms),
                        seed: common.seed + r as u64,
                        ..WarehouseWorkload::default()
                    };
                    let target = common.target(scheme, history_out.is_some());
                    out.push(run_warehouse(&target, scheme, &w).map_err(|e| e.to_string())?);
                    if let (Some(path), Target::Embedded(e)) = (&history_out, &target) {
                        let h = e.history().expect("recording enabled");
                        let name = path.with_extension(format!("{scheme}.{r}.jsonl"));
                        std::fs::write(&name, h.to_json_lines()).map_err(|e| e.to_string())?;
                    }
                }
            }
            common.emit(&out)?;
            Ok(true)
        }
        Cmd::BreadthDepth {
            common,
            sweep,
            values,
            fan_out,
            attributes,
            files,
            selectivity,
        } => {
            let mut out = Vec::new();
            for v in values {
                for scheme in common.schemes()? {
                    for r in 0..common.runs {
                        let mut w = BreadthDepthWorkload {
                            threads: common.threads,
                            duration: Duration::from_secs_f64(common.duration_secs),
                            files,
                            selectivity,
                            seed: common.seed + r as u64,
                            ..BreadthDepthWorkload::default()
                        };
                        match sweep {
                            Sweep::FanOut => {
                                w.fan_out = v;
                                w.depth = 1;
                                w.attributes = 1;
                            }
                            Sweep::Depth => {
                                w.fan_out = fan_out;
                                w.depth = v;
                                w.attributes = attributes.max(v);
                            }
                        }
                        let target = common.target(scheme, false);
                        let mut m = run_breadth_depth(&target, scheme, &w).map_err(|e| e.to_string())?;
                        m.mix = match sweep {
                            Sweep::FanOut => format!("fan_out={v}"),
                            Sweep::Depth => format!("depth={v}"),
                        };
                        out.push(m);
                    }
                }
            }
            common.emit(&out)?;
            Ok(true)
        }
        Cmd::CheckHistory { file } => {
            let text = std::fs::read_to_string(&file).map_err(|e| format!("{}: {e}", file.display()))?;
            let h = History::from_json_lines(&text).map_err(|e| format!("parsing history: {e}"))?;
            let r = check_serializable(&h).map_err(|e| e.to_string())?;
            let mut o = io::stdout().lock();
            let _ = writeln!(o, "transactions: {}, dependencies: {}", r.txns, r.edges);
            match &r.cycle {
                None => {
                    let _ = writeln!(o, "serializable");
                }
                Some(c) => {
                    let _ = writeln!(o, "cycle:");
                    for d in c {
                        let _ = writeln!(o, "  {d}");
                    }
                }
            }
            Ok(r.is_serializable())
        }
        Cmd::Histories { scheme, count, seed } => {
            let mut bad = 0;
            let (mut committed, mut aborted) = (0, 0);
            for s in seed..seed + count {
                let g = generate(scheme, s, HistoryParams::default()).map_err(|e| e.to_string())?;
                committed += g.committed;
                aborted += g.aborted;
                match check_serializable(&g.history) {
                    Ok(r) if r.is_serializable() => {}
                    Ok(r) => {
                        bad += 1;
                        eprintln!("seed {s}: cycle {:?}", r.cycle);
                    }
                    Err(e) => {
                        bad += 1;
                        eprintln!("seed {s}: {e}");
                    }
                }
            }
            println!("{scheme}: {count} histories, {committed} commits, {aborted} aborts, {bad} failing");
            Ok(bad == 0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
