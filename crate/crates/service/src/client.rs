//! Blocking client for the wire protocol.

use std::io::{BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};

use arbor_core::txn::Status;
use arbor_core::{Vid, WriteOp};
use serde_json::Value as Json;

use crate::error::{Result, ServiceError};
use crate::frame::{read_frame, write_frame};
use crate::protocol::{Body, Op, Request, Response, Row};

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    next_id: u64,
}

/// Result of `start_transaction`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxnInfo {
    pub txn_id: Option<u64>,
    pub read_vid: Vid,
}

/// Where a query reads.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum ReadAt {
    #[default]
    Latest,
    Vid(Vid),
    Snapshot(String),
    Txn(u64),
}

impl Client {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Client> {
        let s = TcpStream::connect(addr)?;
        s.set_nodelay(true)?;
        Ok(Client {
            reader: BufReader::new(s.try_clone()?),
            writer: BufWriter::new(s),
            next_id: 1,
        })
    }

    /// Sends a raw frame; for protocol tests.
    pub fn send_raw(&mut self, body: &[u8]) -> Result<()> {
        Ok(write_frame(&mut self.writer, body)?)
    }

    pub fn recv(&mut self) -> Result<Response> {
        let frame = read_frame(&mut self.reader)?
            .ok_or_else(|| ServiceError::Protocol("server closed the connection".into()))?;
        serde_json::from_slice(&frame).map_err(|e| ServiceError::Protocol(format!("bad response: {e}")))
    }

    pub fn send(&mut self, op: Op) -> Result<u64> {
        let request_id = self.next_id;
        self.next_id += 1;
        let body = serde_json::to_vec(&Request { request_id, op }).expect("request serializes");
        self.send_raw(&body)?;
        Ok(request_id)
    }

    fn recv_for(&mut self, id: u64) -> Result<Response> {
        let r = self.recv()?;
        if r.request_id != Some(id) {
            return Err(ServiceError::Protocol(format!(
                "expected a response to {id}, got {:?}",
                r.request_id
            )));
        }
        Ok(r)
    }

    /// Sends a non-streaming request and waits for its result.
    pub fn call(&mut self, op: Op) -> Result<Json> {
        let id = self.send(op)?;
        match self.recv_for(id)?.body {
            Body::Ok { result } => Ok(result),
            Body::Error { error } => Err(ServiceError::Remote(error)),
            Body::Chunk { .. } => Err(ServiceError::Protocol("unexpected chunk".into())),
        }
    }

    pub fn start_transaction(&mut self, read_only: bool) -> Result<TxnInfo> {
        let r = self.call(Op::StartTransaction { read_only })?;
        let read_vid = r["read_vid"]
            .as_u64()
            .ok_or_else(|| ServiceError::Protocol("missing read_vid".into()))?;
        Ok(TxnInfo {
            txn_id: r["txn_id"].as_u64(),
            read_vid: Vid(read_vid),
        })
    }

    /// Streams a query's rows to `f` chunk by chunk; returns the number of
    /// chunks received.
    pub fn query_with(&mut self, query: &str, at: ReadAt, mut f: impl FnMut(Vec<Row>)) -> Result<u64> {
        let (txn_id, at, snapshot) = match at {
            ReadAt::Latest => (None, None, None),
            ReadAt::Vid(v) => (None, Some(v), None),
            ReadAt::Snapshot(s) => (None, None, Some(s)),
            ReadAt::Txn(t) => (Some(t), None, None),
        };
        let id = self.send(Op::ExecuteQuery {
            query: query.into(),
            txn_id,
            at,
            snapshot,
        })?;
        let mut expect = 0;
        loop {
            match self.recv_for(id)?.body {
                Body::Chunk { seq, rows, done } => {
                    if seq != expect {
                        return Err(ServiceError::Protocol(format!("chunk {seq} out of order")));
                    }
                    expect += 1;
                    f(rows);
                    if done {
                        return Ok(expect);
                    }
                }
                Body::Error { error } => return Err(ServiceError::Remote(error)),
                Body::Ok { .. } => return Err(ServiceError::Protocol("query answered without rows".into())),
            }
        }
    }

    pub fn query(&mut self, query: &str, at: ReadAt) -> Result<Vec<Row>> {
        let mut out = Vec::new();
        self.query_with(query, at, |rows| out.extend(rows))?;
        Ok(out)
    }

    pub fn commit_json(&mut self, txn_id: Option<u64>, writes: Json) -> Result<Vid> {
        let r = self.call(Op::Commit { txn_id, writes })?;
        vid_field(&r)
    }

    pub fn commit(&mut self, txn_id: Option<u64>, ops: &[WriteOp]) -> Result<Vid> {
        self.commit_json(txn_id, arbor_core::txn::write_set_to_json(ops))
    }

    pub fn abort(&mut self, txn_id: u64) -> Result<()> {
        self.call(Op::Abort { txn_id }).map(drop)
    }

    pub fn snapshot(&mut self, name: &str, vid: Option<Vid>) -> Result<Json> {
        self.call(Op::Snapshot {
            name: name.into(),
            vid,
        })
    }

    pub fn clone_subtree(&mut self, src: &str, dest: &str, vid: Option<Vid>) -> Result<Vid> {
        let r = self.call(Op::Clone {
            src: src.into(),
            dest: dest.into(),
            vid,
        })?;
        vid_field(&r)
    }

    pub fn status(&mut self) -> Result<Status> {
        let r = self.call(Op::Status)?;
        serde_json::from_value(r).map_err(|e| ServiceError::Protocol(format!("bad status: {e}")))
    }
}

fn vid_field(r: &Json) -> Result<Vid> {
    r["vid"]
        .as_u64()
        .map(Vid)
        .ok_or_else(|| ServiceError::Protocol("missing vid".into()))
}
