//! Synthetic range-partitioned hierarchy for fan-out and depth sweeps.
//!
//! Data files carry `attributes` clustering attributes drawn uniformly
//! from `[0, domain)`. Level `j` of the hierarchy range-partitions
//! attribute `a<j>` into `fan_out` buckets, so files live under
//! `/bd/ds/v<b0>/.../v<b(depth-1)>/f<id>`. Attributes at or beyond `depth`
//! are not partitioned. Queries pick a random attribute and select a range
//! covering `selectivity` of its domain.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use arbor_core::{Document, Path, Scheme, WriteOp};
use rand::prelude::*;
use rand::rngs::StdRng;
use serde::{Deserialize, Serialize};

use crate::driver::{Conn, DriveError, DriveResult, Target};
use crate::metrics::{Recorder, RunMetrics};
use crate::{drive, in_txn, outcome};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BreadthDepthWorkload {
    pub threads: usize,
    pub duration: Duration,
    pub files: usize,
    pub fan_out: usize,
    pub depth: usize,
    pub attributes: usize,
    pub domain: u64,
    pub selectivity: f64,
    /// Percentage of operations that read and then insert a file.
    pub rw_pct: u32,
    pub work_delay: Duration,
    pub seed: u64,
}

impl Default for BreadthDepthWorkload {
    fn default() -> Self {
        BreadthDepthWorkload {
            threads: 16,
            duration: Duration::from_secs(3),
            files: 10_000,
            fan_out: 10,
            depth: 1,
            attributes: 1,
            domain: 10_000,
            selectivity: 0.01,
            rw_pct: 50,
            work_delay: Duration::from_millis(20),
            seed: 11,
        }
    }
}

impl BreadthDepthWorkload {
    pub fn validate(&self) -> DriveResult<()> {
        let bad = |m: &str| Err(DriveError::Fatal(m.to_string()));
        if self.fan_out < 2 || self.fan_out as u64 > self.domain {
            return bad("fan-out must be in [2, domain]");
        }
        if self.depth == 0 || self.attributes < self.depth {
            return bad("need 1 <= depth <= attributes");
        }
        if !(self.selectivity > 0.0 && self.selectivity <= 1.0) {
            return bad("selectivity must be in (0, 1]");
        }
        Ok(())
    }

    fn bucket(&self, v: u64) -> u64 {
        v * self.fan_out as u64 / self.domain
    }

    fn leaf_dir(&self, attrs: &[u64]) -> String {
        let mut s = String::from("/bd/ds");
        for a in &attrs[..self.depth] {
            s.push_str(&format!("/v{:05}", self.bucket(*a)));
        }
        s
    }

    fn file_doc(&self, attrs: &[u64], size: i64) -> Document {
        let mut d = Document::new();
        for (i, a) in attrs.iter().enumerate() {
            d.set(format!("a{i}"), *a as i64);
        }
        d.with("size", size)
    }

    /// Query selecting `[lo, lo + width)` on attribute `attr`.
    pub fn query(&self, attr: usize, lo: u64) -> String {
        let hi = lo + self.width();
        let mut q = String::from("/[obj_id='bd']/[obj_id='ds']");
        for level in 0..self.depth {
            if level == attr {
                let (b0, b1) = (self.bucket(lo), self.bucket(hi - 1));
                q.push_str(&format!("/[obj_id >= 'v{b0:05}' and obj_id <= 'v{b1:05}']"));
            } else {
                q.push_str("/*");
            }
        }
        q.push_str(&format!("/[a{attr} >= {lo} and a{attr} < {hi}]"));
        q
    }

    fn width(&self) -> u64 {
        ((self.selectivity * self.domain as f64).round() as u64).max(1)
    }

    pub fn mix_label(&self) -> String {
        format!("{}-{}", 100 - self.rw_pct.min(100), self.rw_pct)
    }
}

fn p(s: &str) -> Path {
    Path::parse(s).expect("generated paths are valid")
}

/// Creates every partition and `w.files` files in one transaction.
pub fn load_hierarchy(conn: &mut Conn, w: &BreadthDepthWorkload) -> DriveResult<AtomicU64> {
    w.validate()?;
    let mut rng = StdRng::seed_from_u64(w.seed);
    let mut ops = vec![WriteOp::add(p("/bd"), Document::new()), WriteOp::add(p("/bd/ds"), Document::new())];
    let mut level = vec![String::from("/bd/ds")];
    for _ in 0..w.depth {
        let mut next = Vec::with_capacity(level.len() * w.fan_out);
        for dir in &level {
            for b in 0..w.fan_out {
                let lo = b as u64 * w.domain / w.fan_out as u64;
                let path = format!("{dir}/v{b:05}");
                ops.push(WriteOp::add(p(&path), Document::new().with("lo", lo as i64)));
                next.push(path);
            }
        }
        level = next;
    }
    for n in 0..w.files {
        let attrs: Vec<u64> = (0..w.attributes).map(|_| rng.gen_range(0..w.domain)).collect();
        let path = format!("{}/f{n:08}", w.leaf_dir(&attrs));
        ops.push(WriteOp::add_leaf(p(&path), w.file_doc(&attrs, rng.gen_range(1..1_000))));
    }
    let tx = conn.begin()?;
    conn.commit(tx, ops)?;
    Ok(AtomicU64::new(w.files as u64))
}

pub fn run_breadth_depth(target: &Target, scheme: Scheme, w: &BreadthDepthWorkload) -> DriveResult<RunMetrics> {
    let next = load_hierarchy(&mut target.connect()?, w)?;
    let (elapsed, rec) = drive(target, w.threads, w.duration, |i| {
        let mut rng = StdRng::seed_from_u64(w.seed.wrapping_add(1 + i as u64));
        let next = &next;
        move |conn: &mut Conn, rec: &mut Recorder| {
            let attr = rng.gen_range(0..w.attributes);
            let lo = rng.gen_range(0..=w.domain - w.width());
            let q = w.query(attr, lo);
            if rng.gen_range(0..100) >= w.rw_pct {
                conn.read(&q, &mut rec.counts)?;
                return Ok(("read", true));
            }
            let attrs: Vec<u64> = (0..w.attributes).map(|_| rng.gen_range(0..w.domain)).collect();
            let size = rng.gen_range(1..1_000);
            let r = in_txn(conn, |conn, tx| {
                conn.query(tx, &q, &mut rec.counts)?;
                std::thread::sleep(w.work_delay);
                let n = next.fetch_add(1, Ordering::Relaxed);
                let path = format!("{}/f{n:08}", w.leaf_dir(&attrs));
                Ok(vec![WriteOp::add_leaf(p(&path), w.file_doc(&attrs, size))])
            });
            outcome("read_insert", r)
        }
    })?;
    Ok(RunMetrics::from_recorder(scheme, w.threads, w.mix_label(), elapsed, rec))
}
