//! Optional TOML experiment file. Every key mirrors a command-line flag;
//! flags given on the command line win.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub task: Option<String>,
    pub solver: Option<String>,
    pub lambda: Option<f64>,
    pub groups: Option<usize>,
    pub fixed_groups: Option<bool>,
    pub standardize: Option<bool>,
    pub synth: Option<SynthSection>,
    pub egl: Option<EglSection>,
    pub stability: Option<StabilitySection>,
    pub reproduce: Option<ReproduceSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub family: Option<String>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub ns: Option<usize>,
    pub rho: Option<f64>,
    pub ws: Option<f64>,
    pub noise_var: Option<f64>,
    pub blocks: Option<usize>,
    pub p_connect: Option<f64>,
    pub coupled: Option<usize>,
    pub balanced: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EglSection {
    pub max_outer_iter: Option<usize>,
    pub outer_tol: Option<f64>,
    pub bisection_tol: Option<f64>,
    pub kkt_tol: Option<f64>,
    pub eps_clamp: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    pub iterations: Option<usize>,
    pub reshuffle: Option<bool>,
    pub threshold: Option<String>,
    pub artificial: Option<bool>,
    pub artificial_weight_var: Option<f64>,
    pub constrain_sign: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproduceSection {
    pub scale: Option<f64>,
    pub replicates: Option<usize>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, UsageError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| UsageError(format!("bad config {}: {e}", path.display())))
}

/// First present value, or a usage error naming the flag.
pub fn require<T>(
    flag: &str,
    values: impl IntoIterator<Item = Option<T>>,
) -> Result<T, UsageError> {
    values
        .into_iter()
        .flatten()
        .next()
        .ok_or_else(|| UsageError(format!("missing required option --{flag}")))
}
