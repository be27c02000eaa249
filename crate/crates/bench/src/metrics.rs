//! Run measurements and CSV output.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Duration;

use arbor_core::Scheme;
use serde::Serialize;

use crate::driver::ScanCounts;

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[Duration], q: f64) -> Duration {
    if sorted.is_empty() {
        return Duration::ZERO;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, Default)]
pub struct OpSamples {
    pub commits: u64,
    pub aborts: u64,
    pub latencies: Vec<Duration>,
}

/// Per-thread accumulator, merged into [`RunMetrics`] at the end.
#[derive(Debug, Clone, Default)]
pub struct Recorder {
    pub ops: BTreeMap<&'static str, OpSamples>,
    pub counts: ScanCounts,
}

impl Recorder {
    pub fn record(&mut self, op: &'static str, committed: bool, latency: Duration) {
        let s = self.ops.entry(op).or_default();
        if committed {
            s.commits += 1;
        } else {
            s.aborts += 1;
        }
        s.latencies.push(latency);
    }

    pub fn merge(&mut self, other: Recorder) {
        for (k, v) in other.ops {
            let s = self.ops.entry(k).or_default();
            s.commits += v.commits;
            s.aborts += v.aborts;
            s.latencies.extend(v.latencies);
        }
        self.counts.seeks += other.counts.seeks;
        self.counts.scanned += other.counts.scanned;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpMetrics {
    pub attempts: u64,
    pub commits: u64,
    pub aborts: u64,
    pub p50_ms: f64,
    pub p99_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub scheme: Scheme,
    pub threads: usize,
    pub mix: String,
    pub elapsed_s: f64,
    pub attempts: u64,
    pub commits: u64,
    pub aborts: u64,
    /// Committed transactions per second.
    pub throughput: f64,
    pub abort_rate: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub per_op: BTreeMap<String, OpMetrics>,
    pub seeks: u64,
    pub scanned: u64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl RunMetrics {
    pub fn from_recorder(scheme: Scheme, threads: usize, mix: String, elapsed: Duration, r: Recorder) -> Self {
        let mut all = Vec::new();
        let mut per_op = BTreeMap::new();
        let (mut commits, mut aborts) = (0, 0);
        for (name, mut s) in r.ops {
            s.latencies.sort();
            commits += s.commits;
            aborts += s.aborts;
            per_op.insert(
                name.to_string(),
                OpMetrics {
                    attempts: s.commits + s.aborts,
                    commits: s.commits,
                    aborts: s.aborts,
                    p50_ms: ms(percentile(&s.latencies, 0.5)),
                    p99_ms: ms(percentile(&s.latencies, 0.99)),
                },
            );
            all.extend(s.latencies);
        }
        all.sort();
        let attempts = commits + aborts;
        let secs = elapsed.as_secs_f64().max(1e-9);
        RunMetrics {
            scheme,
            threads,
            mix,
            elapsed_s: elapsed.as_secs_f64(),
            attempts,
            commits,
            aborts,
            throughput: commits as f64 / secs,
            abort_rate: if attempts == 0 { 0.0 } else { aborts as f64 / attempts as f64 },
            p50_ms: ms(percentile(&all, 0.5)),
            p99_ms: ms(percentile(&all, 0.99)),
            per_op,
            seeks: r.counts.seeks,
            scanned: r.counts.scanned,
        }
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    scheme: &'a str,
    threads: usize,
    mix: &'a str,
    throughput: f64,
    abort_rate: f64,
    p50: f64,
    p99: f64,
}

/// One CSV row per run: scheme, threads, mix, throughput, abort_rate, p50,
/// p99 (latencies in milliseconds).
pub fn write_csv<W: Write>(w: W, runs: &[RunMetrics]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in runs {
        out.serialize(CsvRow {
            scheme: r.scheme.as_str(),
            threads: r.threads,
            mix: &r.mix,
            throughput: r.throughput,
            abort_rate: r.abort_rate,
            p50: r.p50_ms,
            p99: r.p99_ms,
        })?;
    }
    out.flush()?;
    Ok(())
}
