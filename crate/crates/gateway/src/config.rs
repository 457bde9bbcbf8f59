//! Gateway configuration file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use guardrail_core::ledger::{LEDGER_FILE_NAME, SIGNING_KEY_ENV};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub policy: PathBuf,
    /// Ledger file; defaults to the hidden ledger file beside the policy.
    #[serde(default)]
    pub ledger: Option<PathBuf>,
    #[serde(default = "default_expiry")]
    pub expiry_interval_seconds: u64,
    /// Environment variable holding the ledger signing key.
    #[serde(default = "default_key_env")]
    pub signing_key_env: String,
    /// Most records one `GET /v1/ledger` call returns.
    #[serde(default = "default_page_limit")]
    pub ledger_page_limit: usize,
}

pub const DEFAULT_PAGE_LIMIT: usize = 500;

fn default_page_limit() -> usize {
    DEFAULT_PAGE_LIMIT
}

fn default_listen() -> SocketAddr {
    "127.0.0.1:8700".parse().unwrap()
}

fn default_expiry() -> u64 {
    5
}

fn default_key_env() -> String {
    SIGNING_KEY_ENV.to_string()
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("expiry_interval_seconds must be positive")]
    ZeroInterval,
    #[error("ledger_page_limit must be positive")]
    ZeroPageLimit,
}

impl GatewayConfig {
    pub fn new(policy: impl Into<PathBuf>) -> Self {
        Self {
            listen: default_listen(),
            policy: policy.into(),
            ledger: None,
            expiry_interval_seconds: default_expiry(),
            signing_key_env: default_key_env(),
            ledger_page_limit: DEFAULT_PAGE_LIMIT,
        }
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: GatewayConfig = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: base.to_path_buf(),
            source,
        })?;
        if cfg.expiry_interval_seconds == 0 {
            return Err(ConfigError::ZeroInterval);
        }
        if cfg.ledger_page_limit == 0 {
            return Err(ConfigError::ZeroPageLimit);
        }
        cfg.policy = base.join(&cfg.policy);
        cfg.ledger = cfg.ledger.map(|l| base.join(l));
        Ok(cfg)
    }

    /// Reads a config file; relative paths in it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            ConfigError::Parse { source, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.ledger.clone().unwrap_or_else(|| {
            self.policy
                .parent()
                .unwrap_or(Path::new("."))
                .join(LEDGER_FILE_NAME)
        })
    }

    pub fn signing_key(&self) -> Option<Vec<u8>> {
        std::env::var(&self.signing_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .map(String::into_bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_resolve_against_the_config_dir() {
        let cfg =
            GatewayConfig::from_toml("policy = \"packs/p.policy\"\n", Path::new("/etc/guardrail"))
                .unwrap();
        assert_eq!(cfg.policy, Path::new("/etc/guardrail/packs/p.policy"));
        assert_eq!(
            cfg.ledger_path(),
            Path::new("/etc/guardrail/packs").join(LEDGER_FILE_NAME)
        );
        assert_eq!(cfg.expiry_interval_seconds, 5);
    }

    #[test]
    fn rejects_unknown_keys_and_zero_interval() {
        assert!(GatewayConfig::from_toml("policy = \"p\"\nport = 1\n", Path::new(".")).is_err());
        assert!(matches!(
            GatewayConfig::from_toml(
                "policy = \"p\"\nexpiry_interval_seconds = 0\n",
                Path::new(".")
            ),
            Err(ConfigError::ZeroInterval)
        ));
    }
}
