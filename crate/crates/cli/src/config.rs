//! Run configuration: a TOML file, or the `config` object of a previous
//! run manifest.

use crate::error::{invalid, io, CliError};
use multiflat::{CheckId, MeasureSpec, VerifyOptions};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureEntry {
    /// Directory name for this measure's reports.
    pub name: String,
    pub spec: MeasureSpec,
}

/// Fully resolved run configuration; every default is materialized when
/// serialized into the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Lattice depths at which every check is run.
    pub depths: Vec<u32>,
    pub checks: Vec<String>,
    pub measures: Vec<MeasureEntry>,
    #[serde(default)]
    pub verify: VerifyOptions,
}

fn default_output() -> PathBuf {
    PathBuf::from("multiflat-out")
}

impl RunConfig {
    /// Reads a TOML config, or a JSON run manifest (its `config` field).
    /// Relative output and measure paths are resolved against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        let parse_err = |reason: String| CliError::ConfigParse { path: path.to_path_buf(), reason };
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
            let c = v.get("config").cloned().unwrap_or(v);
            serde_json::from_value(c).map_err(|e| parse_err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        for m in &mut cfg.measures {
            if let MeasureSpec::File { path } = &mut m.spec {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(cfg)
    }

    /// Applies command-line overrides and copies the seed into the options
    /// that consume it.
    pub fn resolve(mut self, seed: Option<u64>, output: Option<PathBuf>) -> RunConfig {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = output {
            self.output = o;
        }
        self.verify.alpha.seed = self.seed;
        self
    }

    /// Structural validation; the depth floor is checked once measures exist.
    pub fn validate(&self) -> Result<Vec<CheckId>, CliError> {
        if self.checks.is_empty() {
            return Err(invalid("checks", "at least one check is required"));
        }
        let mut ids = Vec::new();
        for (i, c) in self.checks.iter().enumerate() {
            let id: CheckId = c.parse().map_err(|_| invalid(format!("checks[{i}]"), format!("unknown check id {c:?}")))?;
            if ids.contains(&id) {
                return Err(invalid(format!("checks[{i}]"), format!("{id} listed twice")));
            }
            ids.push(id);
        }
        if self.depths.is_empty() {
            return Err(invalid("depths", "at least one depth is required"));
        }
        if self.measures.is_empty() {
            return Err(invalid("measures", "at least one measure is required"));
        }
        let mut names = BTreeSet::new();
        for (i, m) in self.measures.iter().enumerate() {
            let ok = !m.name.is_empty()
                && m.name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
                && !m.name.starts_with('.');
            if !ok {
                return Err(invalid(format!("measures[{i}].name"), "use letters, digits, '_', '-' or '.'"));
            }
            if !names.insert(&m.name) {
                return Err(invalid(format!("measures[{i}].name"), format!("duplicate name {:?}", m.name)));
            }
        }
        for (id, c) in &self.verify.ceilings {
            if !(c.is_finite() && *c > 0.0) {
                return Err(invalid(format!("verify.ceilings.{id}"), "must be positive and finite"));
            }
        }
        if self.verify.rhs_floor.is_nan() || self.verify.rhs_floor <= 0.0 {
            return Err(invalid("verify.rhs_floor", "must be positive"));
        }
        Ok(ids)
    }

    pub fn max_depth(&self) -> u32 {
        self.depths.iter().copied().max().unwrap_or(0)
    }
}
