//! Server configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use arbor_core::{EngineConfig, Scheme};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:7411";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    /// Omit for an in-memory catalog.
    pub data_dir: Option<PathBuf>,
    pub workers_validate: usize,
    pub workers_write: usize,
    pub batch_size: usize,
    pub cc_scheme: Scheme,
    pub lock_timeout_ms: u64,
    pub max_group: usize,
    pub gc_interval_ms: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let e = EngineConfig::default();
        ServiceConfig {
            listen: DEFAULT_LISTEN.into(),
            data_dir: None,
            workers_validate: e.workers_validate,
            workers_write: e.workers_write,
            batch_size: e.batch_size,
            cc_scheme: e.scheme,
            lock_timeout_ms: e.lock_timeout.as_millis() as u64,
            max_group: e.max_group,
            gc_interval_ms: e.gc_interval.map_or(0, |d| d.as_millis() as u64),
        }
    }
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub listen: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub workers_validate: Option<usize>,
    pub workers_write: Option<usize>,
    pub batch_size: Option<usize>,
    pub cc_scheme: Option<Scheme>,
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn apply(mut self, o: Overrides) -> Self {
        if let Some(v) = o.listen {
            self.listen = v;
        }
        if let Some(v) = o.data_dir {
            self.data_dir = Some(v);
        }
        if let Some(v) = o.workers_validate {
            self.workers_validate = v;
        }
        if let Some(v) = o.workers_write {
            self.workers_write = v;
        }
        if let Some(v) = o.batch_size {
            self.batch_size = v;
        }
        if let Some(v) = o.cc_scheme {
            self.cc_scheme = v;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(ServiceError::Config("batch_size must be positive".into()));
        }
        if self.workers_validate == 0 || self.workers_write == 0 {
            return Err(ServiceError::Config("worker pools must be non-empty".into()));
        }
        if self.max_group == 0 {
            return Err(ServiceError::Config("max_group must be positive".into()));
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            data_dir: self.data_dir.clone(),
            scheme: self.cc_scheme,
            workers_validate: self.workers_validate,
            workers_write: self.workers_write,
            batch_size: self.batch_size,
            lock_timeout: Duration::from_millis(self.lock_timeout_ms),
            max_group: self.max_group,
            gc_interval: (self.gc_interval_ms > 0).then(|| Duration::from_millis(self.gc_interval_ms)),
            record_history: false,
        }
    }
}
