use std::collections::HashMap;
use std::fs;
use std::net::IpAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use super::IntelRecord;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("rate limited{}", .retry_after.map(|d| format!(", retry after {}s", d.as_secs())).unwrap_or_default())]
    RateLimited { retry_after: Option<Duration> },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
}

/// A source of threat intelligence about IPs. An empty result means the
/// provider has no adverse information.
pub trait IntelProvider: Send + Sync {
    fn name(&self) -> &str;

    fn query(&self, ip: IpAddr) -> Result<Vec<IntelRecord>, ProviderError>;
}

#[derive(Clone, Copy, Debug)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    pub fn no_retry() -> Self {
        RetryPolicy {
            max_attempts: 1,
            ..Default::default()
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.base_delay
            .saturating_mul(1u32 << attempt.min(16))
            .min(self.max_delay)
    }
}

/// Queries `provider`, retrying rate limits and network errors with
/// exponential backoff. A server-supplied retry hint takes precedence over
/// the computed delay. Auth and format errors are returned immediately.
pub fn query_provider(
    provider: &dyn IntelProvider,
    ip: IpAddr,
    policy: &RetryPolicy,
) -> Result<Vec<IntelRecord>, ProviderError> {
    let mut attempt = 0;
    loop {
        match provider.query(ip) {
            Ok(records) => return Ok(records),
            Err(e) => {
                attempt += 1;
                let delay = match &e {
                    ProviderError::RateLimited { retry_after } => {
                        retry_after.unwrap_or_else(|| policy.backoff(attempt - 1)).min(policy.max_delay)
                    }
                    ProviderError::Network(_) => policy.backoff(attempt - 1),
                    _ => return Err(e),
                };
                if attempt >= policy.max_attempts {
                    return Err(e);
                }
                log::debug!("{}: {e}; retrying {ip} in {delay:?}", provider.name());
                thread::sleep(delay);
            }
        }
    }
}

/// Serves records from a JSON map `ip -> [record]`.
#[derive(Debug, Default)]
pub struct FixtureProvider {
    name: String,
    records: HashMap<IpAddr, Vec<IntelRecord>>,
    calls: AtomicU64,
}

impl FixtureProvider {
    pub fn new(name: impl Into<String>, records: HashMap<IpAddr, Vec<IntelRecord>>) -> Self {
        FixtureProvider {
            name: name.into(),
            records,
            calls: AtomicU64::new(0),
        }
    }

    pub fn from_json(name: impl Into<String>, raw: &[u8]) -> Result<Self, ProviderError> {
        let records: HashMap<IpAddr, Vec<IntelRecord>> =
            serde_json::from_slice(raw).map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
        Ok(Self::new(name, records))
    }

    pub fn load(name: impl Into<String>, path: &Path) -> Result<Self, ProviderError> {
        let raw = fs::read(path).map_err(|e| ProviderError::Network(format!("{}: {e}", path.display())))?;
        Self::from_json(name, &raw)
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl IntelProvider for FixtureProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn query(&self, ip: IpAddr) -> Result<Vec<IntelRecord>, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.records.get(&ip).cloned().unwrap_or_default())
    }
}
