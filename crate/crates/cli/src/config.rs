use std::path::{Path, PathBuf};

use chaoscorr_core::io::read_json;
use chaoscorr_core::{Error, RunConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::args::Common;
use crate::failure::{CliResult, Failure};

/// Resolve the run configuration: `--config` file, else the config echoed by
/// an upstream stage, else the desk-scale defaults; then flag overrides.
pub fn resolve(common: &Common, upstream: Option<&RunConfig>) -> CliResult<RunConfig> {
    let mut config = match (&common.config, upstream) {
        (Some(path), _) => read_json::<RunConfig>(path).map_err(|e| match e {
            Error::Format { detail, .. } => Error::InvalidConfig(detail),
            other => other,
        })?,
        (None, Some(up)) => up.clone(),
        (None, None) => RunConfig::desk_scale(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if let Some(d) = common.duration_s {
        config.duration_s = d;
    }
    for axis in [&mut config.axes.axis13, &mut config.axes.axis23] {
        if let Some(w) = common.bin_ps {
            axis.bin_width_ps = w;
        }
        if let Some(h) = common.range_ps {
            axis.half_range_ps = h;
        }
    }
    config.validate()?;
    Ok(config)
}

/// SHA-256 of the resolved config with the output location blanked, so the
/// hash names the physics and analysis rather than where files went.
pub fn config_hash(config: &RunConfig) -> String {
    let mut hashed = config.clone();
    hashed.output_dir = PathBuf::new();
    let bytes = serde_json::to_vec(&hashed).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Header shared by every metadata document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    pub files: Vec<String>,
    #[serde(default)]
    pub lineage: Value,
    #[serde(default)]
    pub details: Value,
}

impl Metadata {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Metadata {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(config),
            seed: config.seed,
            config: config.clone(),
            files: Vec::new(),
            lineage: Value::Null,
            details: Value::Null,
        }
    }
}

pub fn read_metadata(path: &Path) -> CliResult<Metadata> {
    read_json(path).map_err(Failure::from)
}
