//! TOML server configuration.
//!
//! `rho_up` may omit its last entry and `rho_down` its first; the omitted
//! boundary values are filled with zero.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::model::{ModelError, ServerSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("n_s = {n_s} disagrees with mu, which has {got} entries")]
    StateCount { n_s: usize, got: usize },
    #[error("`{field}` must have n_s - 1 = {short} or n_s = {full} entries, got {got}")]
    Length {
        field: &'static str,
        short: usize,
        full: usize,
        got: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_s: Option<usize>,
    mu: Vec<f64>,
    rho_up: Vec<f64>,
    rho_down: Vec<f64>,
}

fn pad(field: &'static str, mut v: Vec<f64>, n_s: usize, at_front: bool) -> Result<Vec<f64>, ConfigError> {
    if v.len() + 1 == n_s {
        if at_front {
            v.insert(0, 0.0);
        } else {
            v.push(0.0);
        }
        Ok(v)
    } else if v.len() == n_s {
        Ok(v)
    } else {
        Err(ConfigError::Length {
            field,
            short: n_s.saturating_sub(1),
            full: n_s,
            got: v.len(),
        })
    }
}

impl ServerSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let n_s = raw.mu.len();
        if let Some(declared) = raw.n_s {
            if declared != n_s {
                return Err(ConfigError::StateCount { n_s: declared, got: n_s });
            }
        }
        if n_s == 0 {
            return Err(ModelError::NoStates.into());
        }
        let rho_up = pad("rho_up", raw.rho_up, n_s, false)?;
        let rho_down = pad("rho_down", raw.rho_down, n_s, true)?;
        Ok(ServerSpec::new(raw.mu, rho_up, rho_down)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}
