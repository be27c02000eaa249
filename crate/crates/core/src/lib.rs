//! Versioned hierarchical catalog engine.

pub mod delta;
pub mod error;
pub mod path;
pub mod query;
pub mod store;
pub mod txn;
pub mod value;
pub mod version;

pub use delta::{apply_delta, Delta, DeltaKind, DeltaOp};
pub use error::{Error, ErrorCode, PathError, PreconditionFailure, Result, ValueError};
pub use path::{IdBounds, Path, Vid};
pub use txn::{parse_write_set, write_set_from_json, write_set_to_json, Engine, EngineConfig, Scheme, Status, Txn, WriteKind, WriteOp};
pub use value::{compare_scalars, CmpOp, Document, Scalar, Value};
pub use version::SnapshotEntry;
