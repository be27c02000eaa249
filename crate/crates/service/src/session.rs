//! Per-connection request dispatch.

use std::collections::HashMap;

use arbor_core::query::{parse_query, plan_query, Executor, ScanHook};
use arbor_core::store::Object;
use arbor_core::{write_set_from_json, Engine, Error, Path, Txn, Vid};
use serde_json::{json, Value as Json};

use crate::protocol::{Body, Op, Request, Response, Row, WireError};

/// Read-write transactions opened on one connection. Dropping the session
/// aborts whatever is still open.
pub struct Session {
    engine: Engine,
    txns: HashMap<u64, Txn>,
}

impl Session {
    pub fn new(engine: Engine) -> Self {
        Session {
            engine,
            txns: HashMap::new(),
        }
    }

    pub fn open_txns(&self) -> usize {
        self.txns.len()
    }

    /// Runs one request, handing each response to `emit` as it is
    /// produced. An error from `emit` stops a stream early and is
    /// returned.
    pub fn handle<E, F>(&mut self, req: Request, mut emit: F) -> Result<(), E>
    where
        F: FnMut(Response) -> Result<(), E>,
    {
        let id = req.request_id;
        let outcome = match req.op {
            Op::ExecuteQuery {
                query,
                txn_id,
                at,
                snapshot,
            } => return self.query(id, &query, txn_id, at, snapshot, &mut emit),
            op => self.dispatch(op),
        };
        emit(match outcome {
            Ok(result) => Response {
                request_id: Some(id),
                body: Body::Ok { result },
            },
            Err(e) => error_response(Some(id), &e),
        })
    }

    fn dispatch(&mut self, op: Op) -> Result<Json, Error> {
        let e = &self.engine;
        match op {
            Op::StartTransaction { read_only: true } => Ok(json!({ "read_vid": e.read_vid() })),
            Op::StartTransaction { read_only: false } => {
                let t = e.begin()?;
                let out = json!({ "txn_id": t.id(), "read_vid": t.read_vid() });
                self.txns.insert(t.id(), t);
                Ok(out)
            }
            Op::Commit { txn_id, writes } => {
                let ops = write_set_from_json(&writes)?;
                let vid = match txn_id {
                    Some(t) => self.take(t)?.commit(ops)?,
                    None => e.commit(ops)?,
                };
                Ok(json!({ "vid": vid }))
            }
            Op::Abort { txn_id } => {
                self.take(txn_id)?.abort();
                Ok(json!({}))
            }
            Op::Snapshot { name, vid } => Ok(serde_json::to_value(e.snapshot(&name, vid)?).expect("serializable")),
            Op::Clone { src, dest, vid } => {
                let vid = e.clone_subtree(&Path::parse(&src)?, &Path::parse(&dest)?, vid)?;
                Ok(json!({ "vid": vid }))
            }
            Op::Status => Ok(serde_json::to_value(e.status()).expect("serializable")),
            Op::ExecuteQuery { .. } => unreachable!("queries stream"),
        }
    }

    fn take(&mut self, txn_id: u64) -> Result<Txn, Error> {
        self.txns
            .remove(&txn_id)
            .ok_or_else(|| Error::NotFound(format!("transaction {txn_id} on this connection")))
    }

    fn query<E, F>(
        &mut self,
        id: u64,
        text: &str,
        txn_id: Option<u64>,
        at: Option<Vid>,
        snapshot: Option<String>,
        emit: &mut F,
    ) -> Result<(), E>
    where
        F: FnMut(Response) -> Result<(), E>,
    {
        let prepared = (|| {
            let plan = plan_query(&parse_query(text)?).with_batch_size(self.engine.config().batch_size);
            if txn_id.is_some() && (at.is_some() || snapshot.is_some()) {
                return Err(Error::InvalidArgument(
                    "a transaction query reads at the transaction's vid".into(),
                ));
            }
            let at = match (at, snapshot) {
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidArgument("give either at or snapshot".into()));
                }
                (Some(v), None) => v,
                (None, Some(name)) => self.engine.resolve_snapshot(&name)?,
                (None, None) => self.engine.read_vid(),
            };
            Ok((plan, at))
        })();
        let (plan, at) = match prepared {
            Ok(p) => p,
            Err(e) => return emit(error_response(Some(id), &e)),
        };
        match txn_id {
            Some(t) => match self.txns.get_mut(&t) {
                Some(txn) => stream(id, txn.execute(plan), emit),
                None => emit(error_response(
                    Some(id),
                    &Error::NotFound(format!("transaction {t} on this connection")),
                )),
            },
            None => match self.engine.execute(plan, at) {
                Ok(exec) => stream(id, exec, emit),
                Err(e) => emit(error_response(Some(id), &e)),
            },
        }
    }
}

/// Sends one chunk per executor batch. One batch is held back so the last
/// non-empty chunk can carry `done`.
fn stream<H: ScanHook, E, F>(id: u64, mut exec: Executor<'_, H>, emit: &mut F) -> Result<(), E>
where
    F: FnMut(Response) -> Result<(), E>,
{
    let mut seq = 0;
    let mut pending: Option<Vec<Object>> = None;
    loop {
        let next = match exec.next_batch() {
            Ok(b) => b,
            Err(e) => return emit(error_response(Some(id), &e)),
        };
        let done = next.is_none();
        if let Some(rows) = pending.take() {
            emit(chunk(id, seq, rows, done))?;
            seq += 1;
        } else if done {
            emit(chunk(id, seq, Vec::new(), true))?;
        }
        match next {
            Some(b) => pending = Some(b),
            None => return Ok(()),
        }
    }
}

fn chunk(id: u64, seq: u64, rows: Vec<Object>, done: bool) -> Response {
    Response {
        request_id: Some(id),
        body: Body::Chunk {
            seq,
            rows: rows
                .into_iter()
                .map(|o| Row {
                    path: o.path.to_string(),
                    value: o.doc.to_json(),
                })
                .collect(),
            done,
        },
    }
}

pub fn error_response(id: Option<u64>, e: &Error) -> Response {
    Response {
        request_id: id,
        body: Body::Error {
            error: WireError::from(e),
        },
    }
}
