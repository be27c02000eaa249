//! Transactions: write-set preprocessing, the pipelined validate/write
//! commit path, and the pluggable concurrency control schemes.
//!
//! Read-write transactions read at a fixed `read_vid` and record every
//! child scan. At commit a transaction gets the next vid, its preconditions
//! are re-checked against the state at `vid - 1`, and each recorded scan is
//! compared with the writes committed after `read_vid` under the same
//! parent. The validation stage and the write stage each admit one
//! transaction at a time and overlap with each other; the write stage
//! groups transactions under a single log sync.

mod engine;
mod history;
mod locks;
mod prepare;
mod write_op;

pub use engine::{Engine, EngineConfig, LogRecord, ScanRecord, Scheme, Status, Txn, TxnHook};
pub use history::{History, ImageLog, ObjectLog, ScanLog, TxnLog};
pub use locks::{LockMode, LockTable, TxnId};
pub use write_op::{parse_write_set, write_set_from_json, write_set_to_json, WriteKind, WriteOp};

#[cfg(test)]
mod tests;
