use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use arbor_core::query::{parse_query, plan_query};
use arbor_core::{write_set_from_json, Engine, EngineConfig, ErrorCode, Path, Scheme, Vid};
use arbor_service::protocol::Row;
use arbor_service::{Client, Overrides, ReadAt, Server, ServiceConfig, ServiceError};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value as Json};

#[derive(Parser)]
#[command(name = "arbor", version, about = "Versioned hierarchical catalog service")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the server.
    Serve(ServeArgs),
    /// Run a path query; prints one JSON line per result.
    Query {
        text: String,
        #[arg(long, conflicts_with = "snapshot")]
        at: Option<u64>,
        #[arg(long)]
        snapshot: Option<String>,
        #[command(flatten)]
        target: Target,
    },
    /// Commit a JSON write set.
    Commit {
        #[arg(long)]
        file: PathBuf,
        #[command(flatten)]
        target: Target,
    },
    /// Name a version.
    Snapshot {
        name: String,
        #[arg(long)]
        vid: Option<u64>,
        #[command(flatten)]
        target: Target,
    },
    /// Copy a subtree; leaves are shared, not copied.
    Clone {
        src: String,
        dest: String,
        #[arg(long)]
        vid: Option<u64>,
        #[command(flatten)]
        target: Target,
    },
    /// Print engine status.
    Status {
        #[command(flatten)]
        target: Target,
    },
}

#[derive(Args)]
struct ServeArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    workers_validate: Option<usize>,
    #[arg(long)]
    workers_write: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_parser = parse_scheme)]
    cc_scheme: Option<Scheme>,
}

/// Where client subcommands run: against a server, or directly on a data
/// directory when no server is running.
#[derive(Args)]
struct Target {
    #[arg(long, default_value = arbor_service::config::DEFAULT_LISTEN)]
    server: String,
    /// Open this data directory in-process instead of connecting.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: arbor_core::Error| e.to_string())
}

enum Conn {
    Remote(Client),
    Local(Engine),
}

impl Target {
    fn open(&self) -> Result<Conn, ServiceError> {
        Ok(match &self.data_dir {
            Some(dir) => Conn::Local(Engine::open(EngineConfig {
                data_dir: Some(dir.clone()),
                gc_interval: None,
                ..EngineConfig::default()
            })?),
            None => Conn::Remote(Client::connect(self.server.as_str())?),
        })
    }
}

fn print_line(out: &mut impl Write, v: &Json) -> io::Result<()> {
    serde_json::to_writer(&mut *out, v)?;
    out.write_all(b"\n")
}

fn run(cmd: Cmd) -> Result<(), ServiceError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cmd {
        Cmd::Serve(a) => {
            let base = match &a.config {
                Some(p) => ServiceConfig::load(p)?,
                None => ServiceConfig::default(),
            };
            let config = base.apply(Overrides {
                listen: a.listen,
                data_dir: a.data_dir,
                workers_validate: a.workers_validate,
                workers_write: a.workers_write,
                batch_size: a.batch_size,
                cc_scheme: a.cc_scheme,
            });
            let server = Server::from_config(&config)?;
            print_line(&mut out, &json!({ "listening": server.local_addr()?.to_string() }))?;
            out.flush()?;
            drop(out);
            server.run()
        }
        Cmd::Query {
            text,
            at,
            snapshot,
            target,
        } => {
            let read_at = match (at, snapshot) {
                (Some(v), _) => ReadAt::Vid(Vid(v)),
                (None, Some(s)) => ReadAt::Snapshot(s),
                (None, None) => ReadAt::Latest,
            };
            match target.open()? {
                Conn::Remote(mut c) => {
                    let mut res = Ok(());
                    c.query_with(&text, read_at, |rows| {
                        for r in rows {
                            if res.is_ok() {
                                res = print_line(&mut out, &serde_json::to_value(r).expect("row"));
                            }
                        }
                    })?;
                    res?;
                }
                Conn::Local(e) => {
                    let at = match read_at {
                        ReadAt::Vid(v) => v,
                        ReadAt::Snapshot(s) => e.resolve_snapshot(&s)?,
                        _ => e.read_vid(),
                    };
                    let plan = plan_query(&parse_query(&text)?).with_batch_size(e.config().batch_size);
                    let mut exec = e.execute(plan, at)?;
                    while let Some(batch) = exec.next_batch()? {
                        for o in batch {
                            let row = Row {
                                path: o.path.to_string(),
                                value: o.doc.to_json(),
                            };
                            print_line(&mut out, &serde_json::to_value(row).expect("row"))?;
                        }
                    }
                }
            }
            Ok(())
        }
        Cmd::Commit { file, target } => {
            let text = std::fs::read_to_string(&file)?;
            let writes: Json = serde_json::from_str(&text)
                .map_err(|e| arbor_core::Error::InvalidArgument(format!("{}: {e}", file.display())))?;
            let vid = match target.open()? {
                Conn::Remote(mut c) => c.commit_json(None, writes)?,
                Conn::Local(e) => e.commit(write_set_from_json(&writes)?)?,
            };
            Ok(print_line(&mut out, &json!({ "vid": vid }))?)
        }
        Cmd::Snapshot { name, vid, target } => {
            let vid = vid.map(Vid);
            let entry = match target.open()? {
                Conn::Remote(mut c) => c.snapshot(&name, vid)?,
                Conn::Local(e) => serde_json::to_value(e.snapshot(&name, vid)?).expect("entry"),
            };
            Ok(print_line(&mut out, &entry)?)
        }
        Cmd::Clone {
            src,
            dest,
            vid,
            target,
        } => {
            let vid = vid.map(Vid);
            let v = match target.open()? {
                Conn::Remote(mut c) => c.clone_subtree(&src, &dest, vid)?,
                Conn::Local(e) => e.clone_subtree(&Path::parse(&src)?, &Path::parse(&dest)?, vid)?,
            };
            Ok(print_line(&mut out, &json!({ "vid": v }))?)
        }
        Cmd::Status { target } => {
            let s = match target.open()? {
                Conn::Remote(mut c) => c.status()?,
                Conn::Local(e) => e.status(),
            };
            Ok(print_line(&mut out, &serde_json::to_value(s).expect("status"))?)
        }
    }
}

/// Process exit status for each error class.
fn exit_code(code: ErrorCode) -> u8 {
    match code {
        ErrorCode::Internal => 1,
        ErrorCode::Syntax => 2,
        ErrorCode::Precondition => 3,
        ErrorCode::Conflict => 4,
        ErrorCode::NotFound => 5,
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.code();
            let mut err = json!({ "code": code.as_str(), "message": e.to_string() });
            if let Some(r) = e.reason() {
                err["reason"] = json!(r);
            }
            eprintln!("{}", json!({ "error": err }));
            ExitCode::from(exit_code(code))
        }
    }
}
