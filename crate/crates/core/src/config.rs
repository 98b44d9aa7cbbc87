//! Run configuration files.
//!
//! A configuration is a TOML document:
//!
//! ```toml
//! delta = 1.0        # period
//! k = 1.663          # wavenumber
//! theta = 1.5707963  # angle of incidence
//! I0 = 1.0           # incident amplitude
//! nodes = 300        # boundary nodes per unit cell
//!
//! [[resonators]]
//! h = 0.2
//! l = 0.1
//! xi = -0.43
//! eps = 0.01
//! ```
//!
//! The inline form `resonators = [{ h = 0.2, l = 0.1, xi = -0.43, eps = 0.01 }]`
//! is equivalent.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Resonator, UnitCell, WaveParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(#[from] GeometryError),
    #[error("invalid configuration: {0}")]
    Value(String),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResonatorEntry {
    h: f64,
    l: f64,
    xi: f64,
    eps: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    delta: f64,
    k: f64,
    theta: f64,
    #[serde(rename = "I0", default = "one")]
    i0: f64,
    #[serde(default = "default_nodes")]
    nodes: usize,
    #[serde(default)]
    resonators: Vec<ResonatorEntry>,
}

fn one() -> f64 {
    1.0
}

fn default_nodes() -> usize {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub delta: f64,
    pub k: f64,
    pub theta: f64,
    #[serde(rename = "I0")]
    pub i0: f64,
    pub nodes: usize,
    pub resonators: Vec<Resonator>,
}

/// 1-based line and column of a byte offset.
fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| position(text, s.start));
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        let cfg = Config {
            delta: raw.delta,
            k: raw.k,
            theta: raw.theta,
            i0: raw.i0,
            nodes: raw.nodes,
            resonators: raw
                .resonators
                .into_iter()
                .map(|r| Resonator::new(r.h, r.l, r.xi, r.eps))
                .collect(),
        };
        cfg.cell()?;
        cfg.wave()?;
        if cfg.nodes == 0 {
            return Err(ConfigError::Value("nodes must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn cell(&self) -> Result<UnitCell, GeometryError> {
        UnitCell::new(self.delta, self.resonators.clone())
    }

    pub fn wave(&self) -> Result<WaveParams, GeometryError> {
        WaveParams::new(self.k, self.theta, self.i0)
    }

    /// The configuration as a TOML document that [`Config::parse`] reads back.
    pub fn to_toml(&self) -> String {
        let mut out = format!(
            "delta = {:?}\nk = {:?}\ntheta = {:?}\nI0 = {:?}\nnodes = {}\n",
            self.delta, self.k, self.theta, self.i0, self.nodes
        );
        for r in &self.resonators {
            out.push_str(&format!(
                "\n[[resonators]]\nh = {:?}\nl = {:?}\nxi = {:?}\neps = {:?}\n",
                r.h, r.l, r.xi, r.eps
            ));
        }
        out
    }
}
