//! Benchmark harness: warehouse-catalog and breadth/depth workloads over
//! an embedded engine or a server, run metrics, random histories and an
//! offline serializability checker.

pub mod breadth_depth;
pub mod driver;
pub mod histgen;
pub mod metrics;
pub mod oracle;
pub mod warehouse;

use std::time::{Duration, Instant};

use arbor_core::{Engine, EngineConfig, Scheme};

pub use driver::{Conn, DriveError, DriveResult, Hit, ScanCounts, Target, Tx};
pub use metrics::{write_csv, Recorder, RunMetrics};

/// In-memory engine configured for benchmark runs.
pub fn bench_engine(scheme: Scheme, record_history: bool) -> Engine {
    Engine::open(EngineConfig {
        scheme,
        record_history,
        ..EngineConfig::default()
    })
    .expect("in-memory engine opens")
}

/// Runs `body` in a read-write transaction, aborting it if the body fails.
pub(crate) fn in_txn<F>(conn: &mut Conn, body: F) -> DriveResult<()>
where
    F: FnOnce(&mut Conn, &mut Tx) -> DriveResult<Vec<arbor_core::WriteOp>>,
{
    let mut tx = conn.begin()?;
    match body(conn, &mut tx) {
        Ok(ops) => conn.commit(tx, ops).map(|_| ()),
        Err(e) => {
            let _ = conn.abort(tx);
            Err(e)
        }
    }
}

/// Spawns `threads` clients that call `step` until `duration` elapses and
/// merges their recorders. `step` returns the operation name and outcome.
pub(crate) fn drive<S, F>(
    target: &Target,
    threads: usize,
    duration: Duration,
    make: F,
) -> DriveResult<(Duration, Recorder)>
where
    F: Fn(usize) -> S + Sync,
    S: FnMut(&mut Conn, &mut Recorder) -> DriveResult<(&'static str, bool)>,
{
    let start = Instant::now();
    let deadline = start + duration;
    let results: Vec<DriveResult<Recorder>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|i| {
                let make = &make;
                s.spawn(move || {
                    let mut conn = target.connect()?;
                    let mut step = make(i);
                    let mut rec = Recorder::default();
                    while Instant::now() < deadline {
                        let t0 = Instant::now();
                        let (name, ok) = step(&mut conn, &mut rec)?;
                        rec.record(name, ok, t0.elapsed());
                    }
                    Ok(rec)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("client thread panicked")).collect()
    });
    let elapsed = start.elapsed();
    let mut all = Recorder::default();
    for r in results {
        all.merge(r?);
    }
    Ok((elapsed, all))
}

/// Maps an operation result to an outcome, passing fatal errors through.
pub(crate) fn outcome(name: &'static str, r: DriveResult<()>) -> DriveResult<(&'static str, bool)> {
    match r {
        Ok(()) => Ok((name, true)),
        Err(DriveError::Abort(_)) => Ok((name, false)),
        Err(e) => Err(e),
    }
}
