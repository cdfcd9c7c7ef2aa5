use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{aggregate, query_provider, IntelProvider, IntelVerdict, ProviderError, RetryPolicy, VerdictMap};

pub const DEFAULT_TTL: TimeDelta = TimeDelta::hours(24);

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("intel cache {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("intel cache {path} is malformed: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Entry {
    verdict: IntelVerdict,
    fetched_at: DateTime<Utc>,
    ttl_secs: i64,
}

impl Entry {
    fn fresh_at(&self, now: DateTime<Utc>) -> bool {
        now < self.fetched_at + TimeDelta::seconds(self.ttl_secs)
    }
}

/// Verdicts keyed by IP with a time-to-live, optionally persisted as a
/// single JSON file. Readers proceed concurrently; writers are serialized.
pub struct IntelCache {
    path: Option<PathBuf>,
    ttl: TimeDelta,
    entries: RwLock<HashMap<IpAddr, Entry>>,
    write_lock: Mutex<()>,
}

/// Outcome of [`IntelCache::resolve`]: verdicts for every IP that could be
/// resolved and the provider failures for the rest.
#[derive(Debug, Default)]
pub struct Resolution {
    pub verdicts: VerdictMap,
    pub failures: Vec<(IpAddr, ProviderError)>,
    pub fetched: usize,
}

impl IntelCache {
    pub fn in_memory(ttl: TimeDelta) -> Self {
        IntelCache {
            path: None,
            ttl,
            entries: RwLock::new(HashMap::new()),
            write_lock: Mutex::new(()),
        }
    }

    /// Opens `path`, starting empty when it does not exist yet.
    pub fn open(path: &Path, ttl: TimeDelta) -> Result<Self, CacheError> {
        let entries = match fs::read(path) {
            Ok(raw) => {
                let stored: BTreeMap<IpAddr, Entry> = serde_json::from_slice(&raw).map_err(|e| CacheError::Format {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                })?;
                stored.into_iter().collect()
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => HashMap::new(),
            Err(source) => {
                return Err(CacheError::Io {
                    path: path.to_path_buf(),
                    source,
                })
            }
        };
        Ok(IntelCache {
            path: Some(path.to_path_buf()),
            ttl,
            entries: RwLock::new(entries),
            write_lock: Mutex::new(()),
        })
    }

    /// The cached verdict, unless missing or expired at `now`.
    pub fn get(&self, ip: &IpAddr, now: DateTime<Utc>) -> Option<IntelVerdict> {
        let entries = self.entries.read().unwrap();
        entries.get(ip).filter(|e| e.fresh_at(now)).map(|e| e.verdict.clone())
    }

    pub fn insert(&self, verdict: IntelVerdict, now: DateTime<Utc>) {
        let _w = self.write_lock.lock().unwrap();
        self.entries.write().unwrap().insert(
            verdict.ip,
            Entry {
                verdict,
                fetched_at: now,
                ttl_secs: self.ttl.num_seconds(),
            },
        );
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the cache to its file, if it has one.
    pub fn flush(&self) -> Result<(), CacheError> {
        let Some(path) = &self.path else { return Ok(()) };
        let _w = self.write_lock.lock().unwrap();
        let snapshot: BTreeMap<IpAddr, Entry> =
            self.entries.read().unwrap().iter().map(|(k, v)| (*k, v.clone())).collect();
        let json = serde_json::to_vec(&snapshot).expect("cache entries serialize");
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, json)
            .and_then(|_| fs::rename(&tmp, path))
            .map_err(|source| CacheError::Io {
                path: path.clone(),
                source,
            })
    }

    /// Resolves verdicts for `ips`, serving fresh cache entries and querying
    /// every provider for the rest with up to `parallelism` IPs in flight.
    /// An IP is resolved only if every provider answered.
    pub fn resolve(
        &self,
        ips: &[IpAddr],
        providers: &[&dyn IntelProvider],
        policy: &RetryPolicy,
        parallelism: usize,
        now: DateTime<Utc>,
    ) -> Resolution {
        let mut out = Resolution::default();
        let mut todo = Vec::new();
        for ip in ips {
            match self.get(ip, now) {
                Some(v) => {
                    out.verdicts.insert(*ip, v);
                }
                None => todo.push(*ip),
            }
        }
        todo.sort();
        todo.dedup();
        let next = Mutex::new(todo.into_iter());
        let results = Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..parallelism.max(1) {
                scope.spawn(|| loop {
                    let Some(ip) = next.lock().unwrap().next() else { return };
                    let answers: Result<Vec<_>, _> =
                        providers.iter().map(|p| query_provider(*p, ip, policy)).collect();
                    results.lock().unwrap().push((ip, answers));
                });
            }
        });
        for (ip, answers) in results.into_inner().unwrap() {
            match answers {
                Ok(lists) => {
                    let verdict = aggregate(ip, &lists);
                    self.insert(verdict.clone(), now);
                    out.verdicts.insert(ip, verdict);
                    out.fetched += 1;
                }
                Err(e) => out.failures.push((ip, e)),
            }
        }
        out.failures.sort_by_key(|(ip, _)| *ip);
        out
    }
}
