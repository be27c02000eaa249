//! Network service for the arbor catalog: framed JSON wire protocol,
//! connection-scoped sessions, a blocking client, and configuration.

pub mod client;
pub mod config;
pub mod error;
pub mod frame;
pub mod protocol;
pub mod server;
pub mod session;

pub use client::{Client, ReadAt, TxnInfo};
pub use config::{Overrides, ServiceConfig};
pub use error::{Result, ServiceError};
pub use server::{Server, ShutdownHandle};
