//! Data-warehouse catalog workload.
//!
//! The catalog holds fact tables split into date partitions of data files
//! and dimension tables whose files carry business-id ranges:
//!
//! ```text
//! /tpcds/<fact>/p<NN>/f<id>   {stats: {rows, size, batch, date}}
//! /tpcds/<dim>/f<id>          {stats: {rows, min_id, max_id}}
//! ```
//!
//! Read-write operations are fact inserts (join against dimension files,
//! write a data file, add it and merge partition and table statistics),
//! dimension inserts (append a file of fresh ids), deletes of old fact
//! files and compactions of small files.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use arbor_core::{Delta, DeltaKind, Document, Path, Scheme, WriteOp};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand::rngs::StdRng;
use serde::{Deserialize, Serialize};

use crate::driver::{Conn, DriveError, DriveResult, Target};
use crate::metrics::{Recorder, RunMetrics};
use crate::{drive, in_txn, outcome};

pub const FACT_TABLES: [&str; 3] = ["store_sales", "catalog_sales", "web_sales"];
pub const DIM_TABLES: [&str; 4] = ["customer", "item", "store", "date_dim"];

/// Files below this size are candidates for compaction.
pub const SMALL_FILE: i64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixWeights {
    pub fact_insert: u32,
    pub dim_insert: u32,
    pub delete: u32,
    pub optimize: u32,
}

impl Default for MixWeights {
    fn default() -> Self {
        MixWeights {
            fact_insert: 144,
            dim_insert: 12,
            delete: 12,
            optimize: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WarehouseWorkload {
    pub threads: usize,
    /// Percentage of operations that are read-only queries.
    pub read_pct: u32,
    pub duration: Duration,
    pub weights: MixWeights,
    /// Client-side time spent writing data between reading the catalog and
    /// committing.
    pub work_delay: Duration,
    pub partitions: usize,
    pub files_per_partition: usize,
    pub dim_files: usize,
    pub ids_per_dim_file: u64,
    /// Probability that a dimension insert targets `customer`.
    pub customer_bias: f64,
    pub seed: u64,
}

impl Default for WarehouseWorkload {
    fn default() -> Self {
        WarehouseWorkload {
            threads: 16,
            read_pct: 20,
            duration: Duration::from_secs(5),
            weights: MixWeights::default(),
            work_delay: Duration::from_millis(20),
            partitions: 8,
            files_per_partition: 16,
            dim_files: 40,
            ids_per_dim_file: 1000,
            customer_bias: 0.75,
            seed: 7,
        }
    }
}

impl WarehouseWorkload {
    /// Read-write ratio label, e.g. `20-80`.
    pub fn mix_label(&self) -> String {
        format!("{}-{}", self.read_pct, 100 - self.read_pct.min(100))
    }
}

fn p(s: &str) -> Path {
    Path::parse(s).expect("generated paths are valid")
}

fn file_doc(stats: Document) -> Document {
    Document::new().with("stats", stats)
}

/// Counters shared by all clients of one run.
pub struct Catalog {
    next_file: AtomicU64,
    next_dim_id: Vec<AtomicU64>,
    batch: AtomicU64,
    initial_ids: u64,
}

impl Catalog {
    fn file_name(&self) -> String {
        format!("f{:08}", self.next_file.fetch_add(1, Ordering::Relaxed))
    }
}

/// Creates the catalog in one transaction.
pub fn load_catalog(conn: &mut Conn, w: &WarehouseWorkload) -> DriveResult<Catalog> {
    let mut rng = StdRng::seed_from_u64(w.seed);
    let mut ops = vec![WriteOp::add(p("/tpcds"), Document::new().with("kind", "database"))];
    let mut n = 0u64;
    for t in FACT_TABLES {
        let (mut t_rows, mut t_size) = (0, 0);
        let mut parts = Vec::new();
        for part in 0..w.partitions {
            let (mut rows, mut size) = (0, 0);
            for _ in 0..w.files_per_partition {
                let r: i64 = rng.gen_range(100..10_000);
                let s: i64 = rng.gen_range(1..1_000);
                rows += r;
                size += s;
                let stats = Document::new()
                    .with("rows", r)
                    .with("size", s)
                    .with("batch", 0i64)
                    .with("date", part as i64);
                parts.push(WriteOp::add_leaf(p(&format!("/tpcds/{t}/p{part:02}/f{n:08}")), file_doc(stats)));
                n += 1;
            }
            let stats = Document::new()
                .with("rows", rows)
                .with("size", size)
                .with("files", w.files_per_partition as i64);
            parts.push(WriteOp::add(
                p(&format!("/tpcds/{t}/p{part:02}")),
                Document::new().with("date", part as i64).with("stats", stats),
            ));
            t_rows += rows;
            t_size += size;
        }
        let stats = Document::new()
            .with("rows", t_rows)
            .with("size", t_size)
            .with("files", (w.partitions * w.files_per_partition) as i64);
        ops.push(WriteOp::add(
            p(&format!("/tpcds/{t}")),
            Document::new().with("kind", "fact").with("stats", stats),
        ));
        ops.extend(parts);
    }
    let initial_ids = w.dim_files as u64 * w.ids_per_dim_file;
    for d in DIM_TABLES {
        ops.push(WriteOp::add(p(&format!("/tpcds/{d}")), Document::new().with("kind", "dimension")));
        for i in 0..w.dim_files as u64 {
            let lo = i * w.ids_per_dim_file;
            let stats = Document::new()
                .with("rows", w.ids_per_dim_file as i64)
                .with("min_id", lo as i64)
                .with("max_id", (lo + w.ids_per_dim_file - 1) as i64);
            ops.push(WriteOp::add_leaf(p(&format!("/tpcds/{d}/f{n:08}")), file_doc(stats)));
            n += 1;
        }
    }
    let tx = conn.begin()?;
    conn.commit(tx, ops)?;
    Ok(Catalog {
        next_file: AtomicU64::new(n),
        next_dim_id: DIM_TABLES.iter().map(|_| AtomicU64::new(initial_ids)).collect(),
        batch: AtomicU64::new(1),
        initial_ids,
    })
}

fn stat_delta(rows: i64, size: i64, files: i64) -> Delta {
    Delta::new()
        .op("stats.rows", DeltaKind::Add, rows)
        .op("stats.size", DeltaKind::Add, size)
        .op("stats.files", DeltaKind::Add, files)
}

fn int(doc: &serde_json::Value, field: &str) -> i64 {
    doc["stats"][field].as_i64().unwrap_or(0)
}

struct Client<'a> {
    w: &'a WarehouseWorkload,
    cat: &'a Catalog,
    rng: StdRng,
    mix: WeightedIndex<u32>,
}

impl Client<'_> {
    fn step(&mut self, conn: &mut Conn, rec: &mut Recorder) -> DriveResult<(&'static str, bool)> {
        if self.rng.gen_range(0..100) < self.w.read_pct {
            self.read(conn, rec)?;
            return Ok(("read", true));
        }
        match self.mix.sample(&mut self.rng) {
            0 => outcome("fact_insert", self.fact_insert(conn, rec)),
            1 => outcome("dim_insert", self.dim_insert(conn, rec)),
            2 => outcome("delete", self.delete(conn, rec)),
            _ => outcome("optimize", self.optimize(conn, rec)),
        }
    }

    fn read(&mut self, conn: &mut Conn, rec: &mut Recorder) -> DriveResult<()> {
        let q = if self.rng.gen_bool(0.7) {
            let t = FACT_TABLES.choose(&mut self.rng).unwrap();
            let min_rows = self.rng.gen_range(0..10_000);
            format!("/[obj_id='tpcds']/[obj_id='{t}']/*/[stats.rows > {min_rows}]")
        } else {
            let (lo, hi) = self.id_range();
            let d = DIM_TABLES.choose(&mut self.rng).unwrap();
            format!("/[obj_id='tpcds']/[obj_id='{d}']/[stats.max_id >= {lo} and stats.min_id <= {hi}]")
        };
        conn.read(&q, &mut rec.counts)?;
        Ok(())
    }

    fn id_range(&mut self) -> (u64, u64) {
        let span = 2 * self.w.ids_per_dim_file;
        let lo = self.rng.gen_range(0..self.cat.initial_ids.saturating_sub(span).max(1));
        (lo, lo + span)
    }

    fn fact_insert(&mut self, conn: &mut Conn, rec: &mut Recorder) -> DriveResult<()> {
        let (lo, hi) = self.id_range();
        let other = DIM_TABLES[self.rng.gen_range(1..DIM_TABLES.len())];
        let t = *FACT_TABLES.choose(&mut self.rng).unwrap();
        let part = self.rng.gen_range(0..self.w.partitions);
        let rows: i64 = self.rng.gen_range(10..1_000);
        let size: i64 = self.rng.gen_range(1..SMALL_FILE / 2);
        let name = self.cat.file_name();
        let batch = self.cat.batch.fetch_add(1, Ordering::Relaxed) as i64;
        let delay = self.w.work_delay;
        in_txn(conn, |conn, tx| {
            for d in ["customer", other] {
                let q = format!("/[obj_id='tpcds']/[obj_id='{d}']/[stats.max_id >= {lo} and stats.min_id <= {hi}]");
                if conn.query(tx, &q, &mut rec.counts)?.is_empty() {
                    return Err(DriveError::Fatal(format!("no {d} rows in {lo}..{hi}")));
                }
            }
            std::thread::sleep(delay);
            let stats = Document::new()
                .with("rows", rows)
                .with("size", size)
                .with("batch", batch)
                .with("date", part as i64);
            Ok(vec![
                WriteOp::add_leaf(p(&format!("/tpcds/{t}/p{part:02}/{name}")), file_doc(stats)),
                WriteOp::merge(p(&format!("/tpcds/{t}/p{part:02}")), stat_delta(rows, size, 1)),
                WriteOp::merge(p(&format!("/tpcds/{t}")), stat_delta(rows, size, 1)),
            ])
        })
    }

    fn dim_insert(&mut self, conn: &mut Conn, rec: &mut Recorder) -> DriveResult<()> {
        let di = if self.rng.gen_bool(self.w.customer_bias) {
            0
        } else {
            self.rng.gen_range(1..DIM_TABLES.len())
        };
        let d = DIM_TABLES[di];
        let n = self.w.ids_per_dim_file;
        let name = self.cat.file_name();
        let delay = self.w.work_delay;
        let next = &self.cat.next_dim_id[di];
        in_txn(conn, |conn, tx| {
            let tail = next.load(Ordering::Relaxed).saturating_sub(n);
            let q = format!("/[obj_id='tpcds']/[obj_id='{d}']/[stats.max_id >= {tail}]");
            conn.query(tx, &q, &mut rec.counts)?;
            std::thread::sleep(delay);
            let lo = next.fetch_add(n, Ordering::Relaxed);
            let stats = Document::new()
                .with("rows", n as i64)
                .with("min_id", lo as i64)
                .with("max_id", (lo + n - 1) as i64);
            Ok(vec![WriteOp::add_leaf(p(&format!("/tpcds/{d}/{name}")), file_doc(stats))])
        })
    }

    fn delete(&mut self, conn: &mut Conn, rec: &mut Recorder) -> DriveResult<()> {
        let t = *FACT_TABLES.choose(&mut self.rng).unwrap();
        let part = self.rng.gen_range(0..self.w.partitions);
        let min_rows = self.rng.gen_range(0..10_000);
        let delay = self.w.work_delay;
        in_txn(conn, |conn, tx| {
            let q = format!(
                "/[obj_id='tpcds']/[obj_id='{t}']/[obj_id='p{part:02}']/[stats.batch = 0 and stats.rows > {min_rows}]"
            );
            let hits = conn.query(tx, &q, &mut rec.counts)?;
            std::thread::sleep(delay);
            let Some(h) = hits.first() else {
                return Ok(Vec::new());
            };
            let (rows, size) = (int(&h.doc, "rows"), int(&h.doc, "size"));
            Ok(vec![
                WriteOp::remove(h.path.clone()),
                WriteOp::merge(p(&format!("/tpcds/{t}/p{part:02}")), stat_delta(-rows, -size, -1)),
                WriteOp::merge(p(&format!("/tpcds/{t}")), stat_delta(-rows, -size, -1)),
            ])
        })
    }

    fn optimize(&mut self, conn: &mut Conn, rec: &mut Recorder) -> DriveResult<()> {
        let t = *FACT_TABLES.choose(&mut self.rng).unwrap();
        let batch = self.cat.batch.fetch_add(1, Ordering::Relaxed) as i64;
        let delay = self.w.work_delay;
        let cat = self.cat;
        in_txn(conn, |conn, tx| {
            let q = format!("/[obj_id='tpcds']/[obj_id='{t}']/*/[stats.size < {SMALL_FILE}]");
            let hits = conn.query(tx, &q, &mut rec.counts)?;
            std::thread::sleep(delay);
            let mut groups: std::collections::BTreeMap<Path, Vec<_>> = Default::default();
            for h in hits {
                groups.entry(h.path.parent().expect("file has a parent")).or_default().push(h);
            }
            let mut ops = Vec::new();
            let mut removed = 0;
            for (part, files) in groups.into_iter().filter(|(_, f)| f.len() >= 2) {
                let files = &files[..files.len().min(16)];
                let rows: i64 = files.iter().map(|h| int(&h.doc, "rows")).sum();
                let size: i64 = files.iter().map(|h| int(&h.doc, "size")).sum();
                let date = int(&files[0].doc, "date");
                ops.extend(files.iter().map(|h| WriteOp::remove(h.path.clone())));
                let stats = Document::new()
                    .with("rows", rows)
                    .with("size", size)
                    .with("batch", batch)
                    .with("date", date);
                ops.push(WriteOp::add_leaf(part.child(&cat.file_name()).expect("valid id"), file_doc(stats)));
                let gone = files.len() as i64 - 1;
                ops.push(WriteOp::merge(part, Delta::new().op("stats.files", DeltaKind::Add, -gone)));
                removed += gone;
            }
            if removed > 0 {
                ops.push(WriteOp::merge(
                    p(&format!("/tpcds/{t}")),
                    Delta::new().op("stats.files", DeltaKind::Add, -removed),
                ));
            }
            Ok(ops)
        })
    }
}

/// Loads the catalog and runs the mixed workload. The target's engine must
/// be empty and configured with `scheme`.
pub fn run_warehouse(target: &Target, scheme: Scheme, w: &WarehouseWorkload) -> DriveResult<RunMetrics> {
    let cat = load_catalog(&mut target.connect()?, w)?;
    let ws = w.weights;
    let mix = WeightedIndex::new([ws.fact_insert, ws.dim_insert, ws.delete, ws.optimize])
        .map_err(|e| DriveError::Fatal(format!("mix weights: {e}")))?;
    let (elapsed, rec) = drive(target, w.threads, w.duration, |i| {
        let mut c = Client {
            w,
            cat: &cat,
            rng: StdRng::seed_from_u64(w.seed.wrapping_add(1 + i as u64)),
            mix: mix.clone(),
        };
        move |conn: &mut Conn, rec: &mut Recorder| c.step(conn, rec)
    })?;
    Ok(RunMetrics::from_recorder(scheme, w.threads, w.mix_label(), elapsed, rec))
}
