//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Set `ARBOR_ACCEPTANCE_ONLY=1,4` to run a subset.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Child, Command, ExitCode, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use arbor_bench::breadth_depth::{run_breadth_depth, BreadthDepthWorkload};
use arbor_bench::histgen::{generate, HistoryParams};
use arbor_bench::metrics::percentile;
use arbor_bench::oracle::check_serializable;
use arbor_bench::warehouse::{run_warehouse, WarehouseWorkload};
use arbor_bench::{bench_engine, RunMetrics, Target};
use arbor_core::query::{estimate_cost, parse_query, plan_query};
use arbor_core::txn::{History, ImageLog, ObjectLog, ScanLog, TxnLog};
use arbor_core::{Delta, Document, Engine, EngineConfig, Error, Path, Scheme, Vid, WriteKind, WriteOp};
use arbor_service::{Client, Server};
use rand::prelude::*;
use rand::rngs::StdRng;
use serde_json::{json, Value as Json};

const SERVER_ENV: &str = "ARBOR_ACCEPTANCE_SERVER_DIR";

type Outcome = Result<String, String>;

fn p(s: &str) -> Path {
    Path::parse(s).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn engine(scheme: Scheme) -> Engine {
    Engine::open(EngineConfig {
        scheme,
        gc_interval: None,
        ..EngineConfig::default()
    })
    .unwrap()
}

// 1. Merge semantics.

fn merge_example() -> Outcome {
    let e = engine(Scheme::Ospl);
    let t = p("/t");
    let base = Document::from_json(&json!({"size": 1487, "min": 3})).map_err(err)?;
    e.commit(vec![WriteOp::add(t.clone(), base)]).map_err(err)?;
    let delta = Delta::from_json(&json!({"size": {"op": "+", "val": 124}, "min": {"op": "min", "val": 0}}))
        .map_err(err)?;
    let txn = e.begin().map_err(err)?;
    let v = txn.commit(vec![WriteOp::merge(t.clone(), delta)]).map_err(err)?;
    let got = e.get(&t, v).map_err(err)?.ok_or("merged object missing")?.doc.to_json();
    let want = json!({"size": 1611, "min": 0});
    ensure(got == want, || format!("got {got}"))?;
    Ok(format!("{got}"))
}

// 2. Serializability of random histories.

fn phantom_fixture() -> History {
    let scan = |pred: &str| ScanLog {
        parent: p("/t"),
        predicate: pred.into(),
        at: Vid(1),
    };
    let image = |path: &str, kind, before, after| ImageLog {
        path: p(path),
        kind,
        leaf: false,
        before,
        after,
    };
    History {
        start_vid: Vid(1),
        initial: vec![
            ObjectLog { path: p("/t"), leaf: false, doc: json!({}) },
            ObjectLog { path: p("/t/a"), leaf: false, doc: json!({"x": 1}) },
            ObjectLog { path: p("/t/summary"), leaf: false, doc: json!({"n": 1}) },
        ],
        txns: vec![
            // Counts the matching children and records the count.
            TxnLog {
                txn_id: 1,
                read_vid: Vid(1),
                commit_vid: Vid(2),
                scans: vec![scan("[x > 0]")],
                writes: vec![json!({"path": "/t/summary", "type": "update", "value": {"n": 1, "ok": true}})],
                images: vec![image(
                    "/t/summary",
                    WriteKind::Update,
                    Some(json!({"n": 1})),
                    Some(json!({"n": 1, "ok": true})),
                )],
            },
            // Reads the count and inserts a matching child the first missed.
            TxnLog {
                txn_id: 2,
                read_vid: Vid(1),
                commit_vid: Vid(3),
                scans: vec![scan("[obj_id = 'summary']")],
                writes: vec![json!({"path": "/t/b", "type": "add", "value": {"x": 5}})],
                images: vec![image("/t/b", WriteKind::Add, None, Some(json!({"x": 5})))],
            },
        ],
    }
}

fn serializability() -> Outcome {
    const N: u64 = 10_000;
    let (mut committed, mut aborted, mut edges) = (0, 0, 0);
    for seed in 0..N {
        let g = generate(Scheme::Ospl, seed, HistoryParams::default()).map_err(err)?;
        let r = check_serializable(&g.history).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(r.is_serializable(), || format!("seed {seed}: cycle {:?}", r.cycle))?;
        committed += g.committed;
        aborted += g.aborted;
        edges += r.edges;
    }
    let r = check_serializable(&phantom_fixture()).map_err(err)?;
    let cycle = r.cycle.ok_or("phantom fixture not detected")?;
    let witness: Vec<String> = cycle.iter().map(|d| d.to_string()).collect();
    Ok(format!(
        "{N}/{N} acyclic ({committed} commits, {aborted} aborts, {edges} dependencies); phantom cycle: {}",
        witness.join(", ")
    ))
}

// 3. Precision versus range locking.

const READ_R: &str = "/[obj_id='db']/[obj_id='r']/[stats.min > 5]";

fn file(min: i64) -> Document {
    Document::new().with("stats", Document::new().with("min", min))
}

fn table(e: &Engine) {
    let mut ops = vec![
        WriteOp::add(p("/db"), Document::new()),
        WriteOp::add(p("/db/r"), Document::new()),
        WriteOp::add(p("/db/s"), Document::new()),
    ];
    for (i, m) in [6, 7, 8].into_iter().enumerate() {
        ops.push(WriteOp::add_leaf(p(&format!("/db/r/f{}", i + 1)), file(m)));
    }
    e.commit(ops).unwrap();
}

fn two_txn(scheme: Scheme) -> Result<&'static str, String> {
    let e = engine(scheme);
    table(&e);
    let mut t1 = e.begin().map_err(err)?;
    ensure(t1.query(READ_R).map_err(err)?.len() == 3, || "reader saw wrong rows".into())?;
    let insert = vec![WriteOp::add_leaf(p("/db/r/f9"), file(3))];
    let log = vec![WriteOp::add(p("/db/s/log"), Document::new())];
    match scheme {
        Scheme::Mgl => {
            let e2 = e.clone();
            let writer = thread::spawn(move || e2.commit(insert));
            thread::sleep(Duration::from_millis(15));
            ensure(!writer.is_finished(), || "insert did not block".into())?;
            let v1 = t1.commit(log).map_err(err)?;
            let v2 = writer.join().unwrap().map_err(err)?;
            ensure(v2 > v1, || "insert not serialized after the reader".into())?;
            Ok("blocked-then-serialized")
        }
        _ => {
            e.commit(insert).map_err(err)?;
            match t1.commit(log) {
                Ok(_) => Ok("both-commit"),
                Err(Error::Conflict(_)) => Ok("one-aborts"),
                Err(e) => Err(e.to_string()),
            }
        }
    }
}

fn precision_vs_range() -> Outcome {
    let want = [
        (Scheme::Ospl, "both-commit"),
        (Scheme::Osl, "one-aborts"),
        (Scheme::Mgl, "blocked-then-serialized"),
    ];
    let mut out = Vec::new();
    for (scheme, expect) in want {
        let mut hits = 0;
        for _ in 0..100 {
            let got = two_txn(scheme)?;
            ensure(got == expect, || format!("{scheme}: {got}"))?;
            hits += 1;
        }
        out.push(format!("{scheme} {expect} {hits}/100"));
    }
    Ok(out.join(", "))
}

// 4. Pruning bound.

struct Tree {
    f: usize,
    /// Rank of each node among its siblings, by path.
    rank: BTreeMap<Path, usize>,
}

fn build_tree(e: &Engine, f: usize, h: usize, rng: &mut StdRng) -> Tree {
    let mut rank = BTreeMap::new();
    let mut ops = Vec::new();
    let mut level = vec![Path::root()];
    for depth in 1..=h {
        let mut next = Vec::new();
        for parent in &level {
            let mut ranks: Vec<usize> = (0..f).collect();
            ranks.shuffle(rng);
            for (i, r) in ranks.into_iter().enumerate() {
                let c = parent.child(&format!("n{i:02}")).unwrap();
                let doc = Document::new().with("r", r as i64);
                ops.push(if depth == h {
                    WriteOp::add_leaf(c.clone(), doc)
                } else {
                    WriteOp::add(c.clone(), doc)
                });
                rank.insert(c.clone(), r);
                next.push(c);
            }
        }
        level = next;
    }
    e.commit(ops).unwrap();
    Tree { f, rank }
}

fn pruning_bound() -> Outcome {
    const H: usize = 4;
    let mut rng = StdRng::seed_from_u64(4);
    let trees: Vec<(Engine, Tree)> = [4, 10]
        .into_iter()
        .map(|f| {
            let e = engine(Scheme::Ospl);
            let t = build_tree(&e, f, H, &mut rng);
            (e, t)
        })
        .collect();
    let (mut worst_scan, mut worst_seek) = (0.0f64, 0.0f64);
    for q in 0..100 {
        let (e, tree) = &trees[rng.gen_range(0..2)];
        let f = tree.f;
        let d = rng.gen_range(2..=4);
        let s: Vec<f64> = (0..d).map(|_| *[0.25, 0.5].choose(&mut rng).unwrap()).collect();
        // Selecting ranks below floor(s f) keeps exactly that many children.
        let keep: Vec<usize> = s.iter().map(|x| (x * f as f64).floor() as usize).collect();
        let text: String = keep.iter().map(|k| format!("/[r < {k}]")).collect();
        let plan = plan_query(&parse_query(&text).map_err(err)?);
        let at = e.read_vid();
        let mut exec = e.execute(plan, at).map_err(err)?;
        let got: BTreeSet<Path> = exec.collect_all().map_err(err)?.into_iter().map(|o| o.path).collect();
        let brute: BTreeSet<Path> = tree
            .rank
            .keys()
            .filter(|path| path.depth() == d)
            .filter(|path| {
                (1..=d).all(|k| {
                    let anc = Path::from_components(&path.components()[..k]).unwrap();
                    tree.rank[&anc] < keep[k - 1]
                })
            })
            .cloned()
            .collect();
        ensure(got == brute, || format!("query {q} {text}: results differ from brute force"))?;
        let est = estimate_cost(f as f64, H, d, &s).map_err(err)?;
        let stats = exec.stats();
        ensure(stats.scanned as f64 <= est.n_scan, || {
            format!("query {q} {text} (f={f}): scanned {} > {}", stats.scanned, est.n_scan)
        })?;
        ensure(stats.seeks as f64 <= est.n_seek, || {
            format!("query {q} {text} (f={f}): seeks {} > {}", stats.seeks, est.n_seek)
        })?;
        worst_scan = worst_scan.max(stats.scanned as f64 / est.n_scan);
        worst_seek = worst_seek.max(stats.seeks as f64 / est.n_seek);
    }
    Ok(format!(
        "100/100 within the series, results exact; max scanned/series {worst_scan:.3}, seeks/series {worst_seek:.3}"
    ))
}

// 5. Time travel and snapshots.

#[derive(Default)]
struct Replay {
    chains: BTreeMap<Path, Vec<(Vid, Option<Json>)>>,
}

impl Replay {
    fn current(&self, path: &Path) -> Option<&Json> {
        self.chains.get(path)?.last()?.1.as_ref()
    }

    fn at(&self, path: &Path, vid: Vid) -> Option<&Json> {
        self.chains.get(path)?.iter().rev().find(|(v, _)| *v <= vid)?.1.as_ref()
    }

    fn live_at(&self, vid: Vid) -> Vec<(String, Json)> {
        self.chains
            .keys()
            .filter_map(|path| self.at(path, vid).map(|d| (path.to_string(), d.clone())))
            .collect()
    }
}

fn time_travel() -> Outcome {
    let e = engine(Scheme::Ospl);
    let mut rng = StdRng::seed_from_u64(5);
    let mut model = Replay::default();
    let root = p("/tt");
    e.commit(vec![WriteOp::add(root.clone(), Document::new())]).map_err(err)?;
    let keys: Vec<Path> = (0..60).map(|i| root.child(&format!("k{i:02}")).unwrap()).collect();
    let mut vids = Vec::new();
    for _ in 0..1000 {
        let mut ops = Vec::new();
        let mut staged: Vec<(Path, Option<Json>)> = Vec::new();
        let count = rng.gen_range(1..=3);
        let picked: Vec<Path> = keys.choose_multiple(&mut rng, count).cloned().collect();
        for k in &picked {
            let n = rng.gen_range(-50..50i64);
            let (op, after) = match model.current(k).cloned() {
                None => (
                    WriteOp::add(k.clone(), Document::new().with("n", n)),
                    Some(json!({"n": n})),
                ),
                Some(cur) => {
                    let old = cur["n"].as_i64().unwrap();
                    match rng.gen_range(0..4) {
                        0 => (WriteOp::remove(k.clone()), None),
                        1 => (
                            WriteOp::update(k.clone(), Document::new().with("n", n).with("u", true)),
                            Some(json!({"n": n, "u": true})),
                        ),
                        2 => {
                            let d = Delta::new().op("n", arbor_core::DeltaKind::Add, n);
                            let mut after = cur.clone();
                            after["n"] = json!(old + n);
                            (WriteOp::merge(k.clone(), d), Some(after))
                        }
                        _ => {
                            let d = Delta::new().op("n", arbor_core::DeltaKind::Min, n);
                            let mut after = cur.clone();
                            after["n"] = json!(old.min(n));
                            (WriteOp::merge(k.clone(), d), Some(after))
                        }
                    }
                }
            };
            ops.push(op);
            staged.push((k.clone(), after));
        }
        let v = e.commit(ops).map_err(err)?;
        for (k, after) in staged {
            model.chains.entry(k).or_default().push((v, after));
        }
        vids.push(v);
    }
    let last = *vids.last().unwrap();
    for probe in 0..50 {
        let k = keys.choose(&mut rng).unwrap();
        let v = Vid(rng.gen_range(1..=last.get()));
        let got = e.get(k, v).map_err(err)?.map(|o| o.doc.to_json());
        let want = model.at(k, v).cloned();
        ensure(got == want, || format!("probe {probe} {k}@{v}: got {got:?}, want {want:?}"))?;
    }

    let dump = |at: Vid| -> Result<Vec<(String, Json)>, String> {
        Ok(e.query("/[obj_id='tt']/*", at)
            .map_err(err)?
            .into_iter()
            .map(|o| (o.path.to_string(), o.doc.to_json()))
            .collect())
    };
    let snap_vid = vids[rng.gen_range(0..vids.len())];
    e.snapshot("acceptance", Some(snap_vid)).map_err(err)?;
    let first = dump(e.resolve_snapshot("acceptance").map_err(err)?)?;
    ensure(first == model.live_at(snap_vid), || "snapshot differs from replay".into())?;
    for i in 0..10 {
        e.commit(vec![WriteOp::add(root.child(&format!("later{i}")).unwrap(), Document::new())])
            .map_err(err)?;
        let again = dump(e.resolve_snapshot("acceptance").map_err(err)?)?;
        ensure(again == first, || format!("snapshot changed on re-execution {i}"))?;
    }
    Ok(format!(
        "50/50 probes match replay over {} commits; snapshot at {snap_vid} stable 10/10 ({} rows)",
        vids.len(),
        first.len()
    ))
}

// 6. Clone sharing.

fn clone_sharing() -> Outcome {
    const N: usize = 10_000;
    let e = engine(Scheme::Ospl);
    let mut ops = vec![
        WriteOp::add(p("/wh"), Document::new()),
        WriteOp::add(p("/wh/tbl"), Document::new().with("kind", "table")),
    ];
    for i in 0..N {
        ops.push(WriteOp::add_leaf(
            p(&format!("/wh/tbl/f{i:05}")),
            Document::new().with("rows", i as i64),
        ));
    }
    e.commit(ops).map_err(err)?;
    let before = e.store().leaf_counts().map_err(err)?;
    e.clone_subtree(&p("/wh/tbl"), &p("/wh/copy"), None).map_err(err)?;
    let after = e.store().leaf_counts().map_err(err)?;
    ensure(after.aliases == before.aliases + N, || format!("aliases {} -> {}", before.aliases, after.aliases))?;
    ensure(after.primaries == before.primaries, || {
        format!("primaries {} -> {}", before.primaries, after.primaries)
    })?;

    let rows = |side: &str| -> Result<Vec<(String, Json)>, String> {
        Ok(e.query(&format!("/[obj_id='wh']/[obj_id='{side}']/*"), e.read_vid())
            .map_err(err)?
            .into_iter()
            .map(|o| (o.path.id().unwrap().to_string(), o.doc.to_json()))
            .collect())
    };
    let src0 = rows("tbl")?;
    ensure(rows("copy")? == src0, || "clone differs from source".into())?;
    e.commit(vec![
        WriteOp::remove(p("/wh/copy/f00000")),
        WriteOp::update(p("/wh/copy"), Document::new().with("kind", "copy")),
        WriteOp::add_leaf(p("/wh/copy/new"), Document::new()),
    ])
    .map_err(err)?;
    ensure(rows("tbl")? == src0, || "clone writes changed the source".into())?;
    let copy1 = rows("copy")?;
    e.commit(vec![
        WriteOp::remove(p("/wh/tbl/f00002")),
        WriteOp::add_leaf(p("/wh/tbl/extra"), Document::new().with("rows", -2i64)),
    ])
    .map_err(err)?;
    ensure(rows("copy")? == copy1, || "source writes changed the clone".into())?;
    Ok(format!(
        "aliases +{}, primaries unchanged ({}); both sides isolated after writes",
        after.aliases - before.aliases,
        after.primaries
    ))
}

// 7. Concurrency trends.

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn warehouse_trends(threads: usize) -> Result<String, String> {
    let mut runs: HashMap<Scheme, Vec<RunMetrics>> = HashMap::new();
    for r in 0..5 {
        for scheme in Scheme::ALL {
            let w = WarehouseWorkload {
                threads,
                read_pct: 20,
                duration: Duration::from_secs(3),
                seed: 70 + r,
                ..WarehouseWorkload::default()
            };
            let m = run_warehouse(&Target::Embedded(bench_engine(scheme, false)), scheme, &w).map_err(err)?;
            ensure(m.commits + m.aborts == m.attempts, || "accounting mismatch".into())?;
            runs.entry(scheme).or_default().push(m);
        }
    }
    let tput = |s: Scheme| mean(runs[&s].iter().map(|m| m.throughput));
    let abort = |s: Scheme| mean(runs[&s].iter().map(|m| m.abort_rate));
    let (ospl, osl, mgl) = (tput(Scheme::Ospl), tput(Scheme::Osl), tput(Scheme::Mgl));
    let (a_ospl, a_osl) = (abort(Scheme::Ospl), abort(Scheme::Osl));
    let summary = format!(
        "{threads} threads: tput ospl {ospl:.0} osl {osl:.0} mgl {mgl:.0}; abort ospl {a_ospl:.3} osl {a_osl:.3} mgl {:.3}",
        abort(Scheme::Mgl)
    );
    for i in 0..5 {
        let (o, l, m) = (&runs[&Scheme::Ospl][i], &runs[&Scheme::Osl][i], &runs[&Scheme::Mgl][i]);
        ensure(o.throughput > l.throughput && o.throughput > m.throughput, || {
            format!("{summary}; run {i} throughput out of order")
        })?;
        ensure(l.abort_rate > o.abort_rate, || format!("{summary}; run {i} abort rates out of order"))?;
    }
    ensure(ospl >= 1.2 * osl, || format!("{summary}; ospl/osl below 1.2"))?;
    ensure(ospl >= 1.2 * mgl, || format!("{summary}; ospl/mgl below 1.2"))?;
    ensure(a_osl >= 1.2 * a_ospl, || format!("{summary}; abort margin below 1.2"))?;
    Ok(summary)
}

fn breadth_convergence() -> Result<String, String> {
    let mut out = Vec::new();
    let fan_outs = [10, 100, 1000];
    let mut gap = 0.0;
    for f in fan_outs {
        let mut t = HashMap::new();
        for r in 0..5 {
            for scheme in Scheme::ALL {
                let w = BreadthDepthWorkload {
                    fan_out: f,
                    duration: Duration::from_secs(2),
                    seed: 90 + r,
                    ..BreadthDepthWorkload::default()
                };
                let m = run_breadth_depth(&Target::Embedded(bench_engine(scheme, false)), scheme, &w).map_err(err)?;
                t.entry(scheme).or_insert_with(Vec::new).push(m.throughput);
            }
        }
        let means: Vec<f64> = Scheme::ALL.iter().map(|s| mean(t[s].iter().copied())).collect();
        let hi = means.iter().cloned().fold(f64::MIN, f64::max);
        let lo = means.iter().cloned().fold(f64::MAX, f64::min);
        gap = (hi - lo) / hi;
        out.push(format!(
            "f={f}: ospl {:.0} osl {:.0} mgl {:.0} gap {:.1}%",
            means[0],
            means[1],
            means[2],
            gap * 100.0
        ));
    }
    let summary = out.join("; ");
    ensure(gap < 0.15, || format!("{summary}; no convergence at the highest fan-out"))?;
    Ok(summary)
}

fn concurrency_trends() -> Outcome {
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for threads in [8, 16] {
        match warehouse_trends(threads) {
            Ok(s) => out.push(s),
            Err(e) => failures.push(e),
        }
    }
    match breadth_convergence() {
        Ok(s) => out.push(s),
        Err(e) => failures.push(e),
    }
    if failures.is_empty() {
        Ok(out.join(" | "))
    } else {
        Err(failures.join(" | "))
    }
}

// 8. Durability.

fn serve_child(dir: &str) -> ExitCode {
    let e = Engine::open(EngineConfig {
        data_dir: Some(dir.into()),
        ..EngineConfig::default()
    })
    .expect("engine opens");
    let server = Server::bind("127.0.0.1:0", e).expect("server binds");
    let addr = server.local_addr().expect("bound address");
    println!("{addr}");
    std::io::stdout().flush().unwrap();
    match server.run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(_) => ExitCode::FAILURE,
    }
}

struct Killed(Child);

impl Drop for Killed {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn spawn_server(dir: &std::path::Path) -> Result<(Killed, String), String> {
    let mut child = Command::new(std::env::current_exe().map_err(err)?)
        .env(SERVER_ENV, dir)
        .stdout(Stdio::piped())
        .spawn()
        .map_err(err)?;
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).map_err(err)?;
    Ok((Killed(child), line.trim().to_string()))
}

fn durability() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let data = dir.path().join("data");
    let mut acked: Vec<(Path, Vid)> = Vec::new();
    let mut group_checks = 0;
    for iter in 0..50 {
        let (child, addr) = spawn_server(&data)?;
        let mut clients: Vec<Client> = (0..4).map(|_| Client::connect(&addr)).collect::<Result<_, _>>().map_err(err)?;
        if iter == 0 {
            clients[0].commit(None, &[WriteOp::add(p("/d"), Document::new())]).map_err(err)?;
        }
        let results: Vec<Result<Vec<(Path, Vid)>, String>> = thread::scope(|s| {
            let hs: Vec<_> = clients
                .iter_mut()
                .enumerate()
                .map(|(c, client)| {
                    s.spawn(move || {
                        let mut mine = Vec::new();
                        for k in 0..3 {
                            let path = p(&format!("/d/i{iter:02}c{c}k{k}"));
                            let doc = Document::new().with("iter", iter as i64);
                            let v = client.commit(None, &[WriteOp::add(path.clone(), doc)]).map_err(err)?;
                            mine.push((path, v));
                        }
                        Ok(mine)
                    })
                })
                .collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for r in results {
            acked.extend(r?);
        }
        let st = clients[0].status().map_err(err)?;
        ensure(st.groups == st.syncs, || format!("iteration {iter}: {} groups, {} syncs", st.groups, st.syncs))?;
        group_checks += 1;
        drop(child);

        let e = Engine::open(EngineConfig {
            data_dir: Some(data.clone()),
            gc_interval: None,
            ..EngineConfig::default()
        })
        .map_err(err)?;
        for (path, v) in &acked {
            ensure(e.get(path, e.read_vid()).map_err(err)?.is_some(), || {
                format!("iteration {iter}: acknowledged {path}@{v} lost")
            })?;
        }
    }
    Ok(format!(
        "50 kill/reopen cycles, {} acknowledged commits, 0 lost; groups == syncs in {group_checks}/50",
        acked.len()
    ))
}

// 9. Commit latency regression guard.

fn commit_latency() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let e = Engine::open(EngineConfig {
        data_dir: Some(dir.path().join("data")),
        ..EngineConfig::default()
    })
    .map_err(err)?;
    e.commit(vec![WriteOp::add(p("/lat"), Document::new())]).map_err(err)?;
    let mut lat: Vec<Duration> = thread::scope(|s| {
        let hs: Vec<_> = (0..4)
            .map(|t| {
                let e = e.clone();
                s.spawn(move || {
                    (0..250)
                        .map(|i| {
                            let op = WriteOp::add_leaf(p(&format!("/lat/t{t}n{i:03}")), Document::new().with("i", i));
                            let t0 = Instant::now();
                            e.commit(vec![op]).unwrap();
                            t0.elapsed()
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        hs.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    lat.sort();
    let p99 = percentile(&lat, 0.99);
    let p50 = percentile(&lat, 0.5);
    ensure(p99 < Duration::from_millis(50), || format!("p99 {p99:?}"))?;
    Ok(format!("{} commits, p50 {p50:.2?}, p99 {p99:.2?}", lat.len()))
}

fn panic_text(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

fn main() -> ExitCode {
    if let Ok(dir) = std::env::var(SERVER_ENV) {
        return serve_child(&dir);
    }
    type Criterion = (usize, &'static str, u64, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        (1, "merge semantics", 1, merge_example),
        (2, "serializability", 600, serializability),
        (3, "precision vs range locking", 10, precision_vs_range),
        (4, "pruning bound", 120, pruning_bound),
        (5, "time travel and snapshots", 60, time_travel),
        (6, "clone sharing", 30, clone_sharing),
        (7, "concurrency trends", 900, concurrency_trends),
        (8, "durability", 300, durability),
        (9, "commit latency", 60, commit_latency),
    ];
    let only: Option<BTreeSet<usize>> = std::env::var("ARBOR_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (n, name, limit, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let t0 = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| Err(panic_text(e)));
        let secs = t0.elapsed().as_secs_f64();
        let res = res.and_then(|d| {
            if secs < limit as f64 {
                Ok(d)
            } else {
                Err(format!("{d}; took {secs:.1}s, limit {limit}s"))
            }
        });
        match res {
            Ok(d) => println!("PASS {n} {name} [{secs:.1}s]: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {n} {name} [{secs:.1}s]: {d}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
