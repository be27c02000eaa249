//! Random concurrent histories for the serializability checker.
//!
//! A seed fixes the initial tree, every transaction's reads and writes and
//! the interleaving of their steps. Steps run on one thread against a
//! history-recording engine; open transactions simply stay open while
//! others read and commit.

use std::time::Duration;

use arbor_core::txn::History;
use arbor_core::{Delta, DeltaKind, Document, Engine, EngineConfig, Error, Path, Scheme, Txn, WriteOp};
use rand::prelude::*;
use rand::rngs::StdRng;

#[derive(Debug, Clone, Copy)]
pub struct HistoryParams {
    pub min_txns: usize,
    pub max_txns: usize,
    pub max_objects: usize,
    pub max_reads: usize,
    pub max_writes: usize,
}

impl Default for HistoryParams {
    fn default() -> Self {
        HistoryParams {
            min_txns: 2,
            max_txns: 8,
            max_objects: 500,
            max_reads: 3,
            max_writes: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub history: History,
    pub committed: usize,
    pub aborted: usize,
}

#[derive(Clone, Copy)]
enum Step {
    Begin,
    Read,
    Commit,
}

struct Plan {
    txn: Option<Txn>,
    seen: Vec<Path>,
    failed: bool,
}

fn doc(rng: &mut StdRng) -> Document {
    Document::new().with("x", rng.gen_range(0..10i64)).with("y", rng.gen_range(0..100i64))
}

fn random_query(rng: &mut StdRng, tables: usize) -> String {
    let t = rng.gen_range(0..tables);
    let c = rng.gen_range(0..10);
    match rng.gen_range(0..5) {
        0 => format!("/[obj_id='h']/[x >= {c}]"),
        1 => format!("/[obj_id='h']/[obj_id='t{t}']/[x > {c}]"),
        2 => format!("/[obj_id='h']/[obj_id='t{t}']/*/[x < {c}]"),
        3 => {
            let lo = rng.gen_range(0..20);
            format!("/[obj_id='h']/[obj_id='t{t}']/[obj_id >= 'o{lo:03}' and obj_id < 'o{:03}']", lo + 5)
        }
        _ => format!("/[obj_id='h']/*/[y < {} and x != {c}]", rng.gen_range(0..100)),
    }
}

/// Engine settings used for generated histories.
pub fn history_engine(scheme: Scheme) -> Engine {
    Engine::open(EngineConfig {
        scheme,
        workers_validate: 1,
        workers_write: 1,
        gc_interval: None,
        lock_timeout: Duration::from_millis(5),
        record_history: true,
        ..EngineConfig::default()
    })
    .expect("in-memory engine opens")
}

/// Builds and runs one random history.
pub fn generate(scheme: Scheme, seed: u64, params: HistoryParams) -> Result<Generated, Error> {
    let mut rng = StdRng::seed_from_u64(seed);
    let engine = history_engine(scheme);
    let tables = rng.gen_range(2..=4);
    let mut objects = vec![Path::parse("/h")?];
    let mut load = vec![WriteOp::add(objects[0].clone(), Document::new())];
    let budget = rng.gen_range(tables + 2..=params.max_objects);
    'fill: for t in 0..tables {
        let tp = objects[0].child(&format!("t{t}"))?;
        load.push(WriteOp::add(tp.clone(), doc(&mut rng)));
        objects.push(tp.clone());
        for o in 0..rng.gen_range(1..40) {
            if objects.len() >= budget {
                break 'fill;
            }
            let op = tp.child(&format!("o{o:03}"))?;
            let grand = rng.gen_range(0..3);
            load.push(if grand == 0 && rng.gen_bool(0.5) {
                WriteOp::add_leaf(op.clone(), doc(&mut rng))
            } else {
                WriteOp::add(op.clone(), doc(&mut rng))
            });
            objects.push(op.clone());
            for g in 0..grand {
                if objects.len() >= budget {
                    break 'fill;
                }
                let gp = op.child(&format!("g{g}"))?;
                load.push(WriteOp::add_leaf(gp.clone(), doc(&mut rng)));
                objects.push(gp);
            }
        }
    }
    engine.commit(load)?;

    let n = rng.gen_range(params.min_txns..=params.max_txns);
    let mut lanes: Vec<Vec<Step>> = (0..n)
        .map(|_| {
            let mut s = vec![Step::Begin];
            s.extend((0..rng.gen_range(0..=params.max_reads)).map(|_| Step::Read));
            s.push(Step::Commit);
            s.reverse();
            s
        })
        .collect();
    let mut plans: Vec<Plan> = (0..n)
        .map(|_| Plan {
            txn: None,
            seen: Vec::new(),
            failed: false,
        })
        .collect();
    let (mut committed, mut aborted) = (0, 0);
    loop {
        let live: Vec<usize> = (0..n).filter(|i| !lanes[*i].is_empty()).collect();
        let Some(&lane) = live.choose(&mut rng) else {
            break;
        };
        let step = lanes[lane].pop().expect("lane is live");
        let plan = &mut plans[lane];
        match step {
            Step::Begin => plan.txn = Some(engine.begin()?),
            Step::Read => {
                let q = random_query(&mut rng, tables);
                if plan.failed {
                    continue;
                }
                let txn = plan.txn.as_mut().expect("begun");
                match txn.query(&q) {
                    Ok(rows) => plan.seen.extend(rows.into_iter().map(|o| o.path)),
                    Err(e) if e.is_abort() => plan.failed = true,
                    Err(e) => return Err(e),
                }
            }
            Step::Commit => {
                let txn = plan.txn.take().expect("begun");
                if plan.failed {
                    txn.abort();
                    aborted += 1;
                    continue;
                }
                let ops = random_writes(&mut rng, lane, &objects, &plan.seen, tables, params.max_writes)?;
                match txn.commit(ops) {
                    Ok(_) => committed += 1,
                    Err(e) if e.is_abort() => aborted += 1,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let history = engine.history().expect("history recording is on");
    Ok(Generated {
        history,
        committed,
        aborted,
    })
}

fn random_writes(
    rng: &mut StdRng,
    txn: usize,
    objects: &[Path],
    seen: &[Path],
    tables: usize,
    max: usize,
) -> Result<Vec<WriteOp>, Error> {
    let mut ops: Vec<WriteOp> = Vec::new();
    for k in 0..rng.gen_range(0..=max) {
        let target = if !seen.is_empty() && rng.gen_bool(0.6) {
            seen.choose(rng).unwrap().clone()
        } else {
            objects[rng.gen_range(1..objects.len())].clone()
        };
        if ops.iter().any(|o| o.path() == &target || target.is_descendant_of(o.path()) || o.path().is_descendant_of(&target)) {
            continue;
        }
        let op = match rng.gen_range(0..4) {
            0 => {
                let t = rng.gen_range(0..tables);
                let parent = Path::parse(&format!("/h/t{t}"))?;
                let name = if rng.gen_bool(0.5) {
                    format!("o{:03}", rng.gen_range(0..45))
                } else {
                    format!("n{txn}x{k}")
                };
                let p = parent.child(&name)?;
                if ops.iter().any(|o| o.path() == &parent) {
                    continue;
                }
                if rng.gen_bool(0.5) {
                    WriteOp::add_leaf(p, doc(rng))
                } else {
                    WriteOp::add(p, doc(rng))
                }
            }
            1 => WriteOp::update(target, doc(rng)),
            2 => WriteOp::merge(
                target,
                Delta::new()
                    .op("x", DeltaKind::Add, rng.gen_range(-3..4i64))
                    .op("y", DeltaKind::Max, rng.gen_range(0..100i64)),
            ),
            _ => {
                if target.depth() < 3 {
                    continue;
                }
                WriteOp::remove(target)
            }
        };
        ops.push(op);
    }
    Ok(ops)
}
