//! Centralized defaults, overridable by a TOML file and then by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::content::MonitorConfig;
use crate::kad::DEFAULT_POOL_SIZE;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub crawl: CrawlSettings,
    pub sim: SimSettings,
    pub analyze: AnalyzeSettings,
    pub intel: IntelSettings,
    pub blocklist: BlocklistSettings,
    pub monitor: MonitorConfig,
    pub audit: AuditSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrawlSettings {
    /// Bootstrap multiaddresses ending in `/p2p/<peer id>`.
    pub bootstrap: Vec<String>,
    pub max_cpl: u32,
    pub concurrency: usize,
    pub stop_rule: u32,
    pub dial_timeout_secs: f64,
    pub rpc_timeout_secs: f64,
    pub kad_protocol: String,
    pub identify_protocol: String,
    pub key_seed: u64,
    pub key_pool: usize,
    pub key_table: Option<PathBuf>,
    pub repeat: u32,
    /// Pause between repeated crawls; 240 s gives 360 crawls a day.
    pub interval_secs: f64,
}

impl Default for CrawlSettings {
    fn default() -> Self {
        CrawlSettings {
            bootstrap: Vec::new(),
            max_cpl: 15,
            concurrency: 500,
            stop_rule: 2,
            dial_timeout_secs: 10.0,
            rpc_timeout_secs: 10.0,
            kad_protocol: crate::kad::wire::DEFAULT_KAD_PROTOCOL.to_string(),
            identify_protocol: crate::kad::wire::DEFAULT_IDENTIFY_PROTOCOL.to_string(),
            key_seed: 1,
            key_pool: DEFAULT_POOL_SIZE,
            key_table: None,
            repeat: 1,
            interval_secs: 240.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub nodes: usize,
    pub k: usize,
    pub seed: u64,
    /// `none` or `default`.
    pub churn: String,
    pub duration_hours: f64,
    pub undialable_fraction: f64,
    pub unresponsive_fraction: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            nodes: 1000,
            k: crate::netsim::DEFAULT_K,
            seed: 1,
            churn: "none".into(),
            duration_hours: 24.0,
            undialable_fraction: 0.0,
            unresponsive_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSettings {
    pub top_n: usize,
    pub merge_subversions: bool,
}

impl Default for AnalyzeSettings {
    fn default() -> Self {
        AnalyzeSettings {
            top_n: 10,
            merge_subversions: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntelSettings {
    /// `fixture:<path>`, `virustotal` or `spamhaus`.
    pub providers: Vec<String>,
    pub cache: Option<PathBuf>,
    pub ttl_hours: i64,
    pub parallelism: usize,
    pub max_attempts: u32,
    pub top_n: usize,
    pub min_jarm_cluster: usize,
}

impl Default for IntelSettings {
    fn default() -> Self {
        IntelSettings {
            providers: Vec::new(),
            cache: None,
            ttl_hours: 24,
            parallelism: 8,
            max_attempts: 4,
            top_n: 10,
            min_jarm_cluster: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlocklistSettings {
    /// `sorted` or `bloom`.
    pub format: String,
    pub false_positive_rate: f64,
    pub bloom_seed: u64,
    pub validity_hours: i64,
    pub publish_interval_hours: i64,
}

impl Default for BlocklistSettings {
    fn default() -> Self {
        BlocklistSettings {
            format: "sorted".into(),
            false_positive_rate: 1e-5,
            bloom_seed: 0,
            validity_hours: crate::blocklist::DEFAULT_VALIDITY.num_hours(),
            publish_interval_hours: crate::blocklist::DEFAULT_PUBLISH_INTERVAL.num_hours(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    pub deadline_secs: f64,
}

impl Default for AuditSettings {
    fn default() -> Self {
        AuditSettings { deadline_secs: 30.0 }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&raw).map_err(|m| CliError::new("E_CONFIG", format!("{}: {m}", path.display())))
    }

    pub fn parse(raw: &str) -> Result<Self, String> {
        toml::from_str(raw).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
