use std::path::{Path, PathBuf};

use onell_core::ddqn::{Param, TrainConfig};
use serde::Deserialize;

use crate::CliError;

pub const OUTPUT_ENV: &str = "ONELL_OUTPUT_ROOT";
pub const DEFAULT_MASTER_SEED: u64 = 42;
pub const DEFAULT_SEEDS: usize = 1000;

/// A policy, optionally with its own seed count (which must then agree
/// with the others wherever runs are paired).
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PolicyEntry {
    Id(String),
    Detailed { id: String, seeds: Option<usize> },
}

impl PolicyEntry {
    pub fn id(&self) -> &str {
        match self {
            PolicyEntry::Id(id) | PolicyEntry::Detailed { id, .. } => id,
        }
    }

    pub fn seeds(&self) -> Option<usize> {
        match self {
            PolicyEntry::Id(_) => None,
            PolicyEntry::Detailed { seeds, .. } => *seeds,
        }
    }
}

/// Experiment description. Every field may also be given as a flag, which wins.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Manifest {
    pub command: Option<String>,
    pub n: Vec<usize>,
    pub policies: Vec<PolicyEntry>,
    pub seeds: Option<usize>,
    pub master_seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub parallel: Option<usize>,
    pub level: Option<f64>,
    pub cutoff_factor: Option<f64>,
    pub train: Option<TrainConfig>,
    pub rows: Vec<String>,
    pub masks: Option<Vec<Vec<Param>>>,
    pub preset: Option<String>,
    pub snapshot_every: Option<u64>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("manifest {}: {e}", path.display())))
    }

    pub fn load_for(path: Option<&Path>, command: &str) -> Result<Self, CliError> {
        let m = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(c) = &m.command {
            if c != command {
                return Err(CliError::Usage(format!("manifest is for `{c}`, not `{command}`")));
            }
        }
        Ok(m)
    }

    /// Flag, then manifest, then `$ONELL_OUTPUT_ROOT`, then `./results`.
    pub fn output_root(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| self.output.clone())
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"))
    }
}

/// `git describe`-style identifier baked in at build time.
pub fn version_tag() -> &'static str {
    env!("ONELL_VERSION_TAG")
}
