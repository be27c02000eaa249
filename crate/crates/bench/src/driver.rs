//! Uniform access to an embedded engine or a remote server for workload
//! clients.

use std::net::SocketAddr;

use arbor_core::query::{parse_query, plan_query};
use arbor_core::{Engine, Error, Path, Txn, Vid, WriteOp};
use arbor_service::{Client, ReadAt, ServiceError};
use serde_json::Value as Json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriveError {
    /// The transaction was rejected (conflict, lock timeout, failed
    /// precondition); counted, not fatal.
    #[error("abort: {0}")]
    Abort(String),
    #[error("{0}")]
    Fatal(String),
}

impl From<Error> for DriveError {
    fn from(e: Error) -> Self {
        if e.is_abort() {
            DriveError::Abort(e.to_string())
        } else {
            DriveError::Fatal(e.to_string())
        }
    }
}

impl From<ServiceError> for DriveError {
    fn from(e: ServiceError) -> Self {
        use arbor_core::ErrorCode::*;
        match e.code() {
            Precondition | Conflict => DriveError::Abort(e.to_string()),
            _ => DriveError::Fatal(e.to_string()),
        }
    }
}

pub type DriveResult<T> = Result<T, DriveError>;

/// Where clients send their requests.
#[derive(Clone)]
pub enum Target {
    Embedded(Engine),
    Wire(SocketAddr),
}

impl Target {
    pub fn connect(&self) -> DriveResult<Conn> {
        Ok(match self {
            Target::Embedded(e) => Conn::Local(e.clone()),
            Target::Wire(a) => Conn::Remote(Client::connect(a)?),
        })
    }
}

pub enum Conn {
    Local(Engine),
    Remote(Client),
}

pub enum Tx {
    Local(Txn),
    Remote(u64),
}

/// One result row: path and document.
#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub path: Path,
    pub doc: Json,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanCounts {
    pub seeks: u64,
    pub scanned: u64,
}

impl Conn {
    /// Read-only query at the latest version; returns the row count.
    pub fn read(&mut self, query: &str, counts: &mut ScanCounts) -> DriveResult<usize> {
        match self {
            Conn::Local(e) => {
                let plan = plan_query(&parse_query(query)?).with_batch_size(e.config().batch_size);
                let mut exec = e.execute(plan, e.read_vid())?;
                let mut n = 0;
                while let Some(b) = exec.next_batch()? {
                    n += b.len();
                }
                counts.seeks += exec.stats().seeks;
                counts.scanned += exec.stats().scanned;
                Ok(n)
            }
            Conn::Remote(c) => {
                let mut n = 0;
                c.query_with(query, ReadAt::Latest, |rows| n += rows.len())?;
                Ok(n)
            }
        }
    }

    pub fn begin(&mut self) -> DriveResult<Tx> {
        match self {
            Conn::Local(e) => Ok(Tx::Local(e.begin()?)),
            Conn::Remote(c) => {
                let info = c.start_transaction(false)?;
                Ok(Tx::Remote(info.txn_id.ok_or_else(|| DriveError::Fatal("no txn id".into()))?))
            }
        }
    }

    pub fn query(&mut self, tx: &mut Tx, query: &str, counts: &mut ScanCounts) -> DriveResult<Vec<Hit>> {
        match (self, tx) {
            (Conn::Local(e), Tx::Local(t)) => {
                let plan = plan_query(&parse_query(query)?).with_batch_size(e.config().batch_size);
                let mut exec = t.execute(plan);
                let rows = exec.collect_all()?;
                counts.seeks += exec.stats().seeks;
                counts.scanned += exec.stats().scanned;
                Ok(rows
                    .into_iter()
                    .map(|o| Hit {
                        doc: o.doc.to_json(),
                        path: o.path,
                    })
                    .collect())
            }
            (Conn::Remote(c), Tx::Remote(id)) => c
                .query(query, ReadAt::Txn(*id))?
                .into_iter()
                .map(|r| {
                    Ok(Hit {
                        path: Path::parse(&r.path).map_err(|e| DriveError::Fatal(e.to_string()))?,
                        doc: r.value,
                    })
                })
                .collect(),
            _ => Err(DriveError::Fatal("transaction used on the wrong connection".into())),
        }
    }

    pub fn commit(&mut self, tx: Tx, ops: Vec<WriteOp>) -> DriveResult<Vid> {
        match (self, tx) {
            (Conn::Local(_), Tx::Local(t)) => Ok(t.commit(ops)?),
            (Conn::Remote(c), Tx::Remote(id)) => Ok(c.commit(Some(id), &ops)?),
            _ => Err(DriveError::Fatal("transaction used on the wrong connection".into())),
        }
    }

    pub fn abort(&mut self, tx: Tx) -> DriveResult<()> {
        match (self, tx) {
            (Conn::Local(_), Tx::Local(t)) => {
                t.abort();
                Ok(())
            }
            (Conn::Remote(c), Tx::Remote(id)) => Ok(c.abort(id)?),
            _ => Err(DriveError::Fatal("transaction used on the wrong connection".into())),
        }
    }
}
