//! Environment metadata recorded with every run.

use serde::{Deserialize, Serialize};

pub const DEFAULT_CONFIG_LABEL: &str = "default";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvMeta {
    pub hostname: String,
    pub os: String,
    pub cpu_model: String,
    pub build_profile: String,
    pub toolchain_version: String,
    pub timestamp_utc: String,
    /// Free-form tag for the configuration under test, e.g. a compiler or flag set.
    pub config_label: String,
}

impl EnvMeta {
    /// Describes the current process. An empty label becomes `"default"`.
    pub fn capture(config_label: &str) -> Self {
        EnvMeta {
            hostname: hostname(),
            os: format!("{}-{}", std::env::consts::OS, std::env::consts::ARCH),
            cpu_model: cpu_model(),
            build_profile: if cfg!(debug_assertions) { "debug" } else { "release" }.to_string(),
            toolchain_version: env!("BOOTBENCH_RUSTC_VERSION").to_string(),
            timestamp_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config_label: label_or_default(config_label),
        }
    }

    /// Fixed metadata for reproducible documents: `timestamp_utc` is the epoch.
    pub fn fixed(config_label: &str) -> Self {
        EnvMeta {
            timestamp_utc: "1970-01-01T00:00:00Z".to_string(),
            ..Self::capture(config_label)
        }
    }
}

fn label_or_default(label: &str) -> String {
    let label = label.trim();
    if label.is_empty() {
        DEFAULT_CONFIG_LABEL.to_string()
    } else {
        label.to_string()
    }
}

fn hostname() -> String {
    std::fs::read_to_string("/proc/sys/kernel/hostname")
        .ok()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .or_else(|| std::env::var("HOSTNAME").ok())
        .or_else(|| std::env::var("COMPUTERNAME").ok())
        .unwrap_or_else(|| "unknown".to_string())
}

fn cpu_model() -> String {
    std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown".to_string())
}
