//! Run configuration, read from a TOML file and overridden by flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::{Coefficients, CostMode};
use crate::emit::{EngineProfile, DEFAULT_TIMEOUT_SECONDS};
use crate::materialize::exec::DEFAULT_MEMORY_THRESHOLD;
use crate::oracle::DEFAULT_ENUMERATION_LIMIT;

pub const INTERNAL_ENGINE: &str = "internal";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mapping_paths: Vec<PathBuf>,
    pub source_root: Option<PathBuf>,
    /// Engine profile name, or `internal` for the built-in materializer.
    pub engine: String,
    pub output: PathBuf,
    pub run_dir: PathBuf,
    pub timeout_seconds: u64,
    pub parallelism: usize,
    pub compress: bool,
    pub cost_mode: CostMode,
    pub seed: u64,
    pub no_partition: bool,
    pub memory_threshold: usize,
    pub enumeration_limit: usize,
    pub coefficients: Coefficients,
    /// Extra engine profiles by name, next to the built-in ones.
    pub engines: BTreeMap<String, EngineProfile>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mapping_paths: Vec::new(),
            source_root: None,
            engine: INTERNAL_ENGINE.to_string(),
            output: PathBuf::from("kg.nt"),
            run_dir: PathBuf::from("run"),
            timeout_seconds: DEFAULT_TIMEOUT_SECONDS,
            parallelism: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            compress: false,
            cost_mode: CostMode::AbstractOps,
            seed: 0,
            no_partition: false,
            memory_threshold: DEFAULT_MEMORY_THRESHOLD,
            enumeration_limit: DEFAULT_ENUMERATION_LIMIT,
            coefficients: Coefficients::default(),
            engines: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    /// Relative paths in the file resolve against the file's directory.
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.mapping_paths.iter_mut().for_each(rebase);
        cfg.source_root.iter_mut().for_each(rebase);
        rebase(&mut cfg.output);
        rebase(&mut cfg.run_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.timeout_seconds == 0 {
            return Err(ConfigError::Invalid("timeout_seconds must be positive".into()));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        let c = &self.coefficients;
        for (name, v) in [
            ("unit_row_cost", c.unit_row_cost),
            ("join_cost_factor", c.join_cost_factor),
            ("dedup_cost_factor", c.dedup_cost_factor),
            ("linear_union_cost", c.linear_union_cost),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid(format!("coefficient {name} must be a finite non-negative number")));
            }
        }
        Ok(())
    }

    /// Profile for `name`: configured profiles shadow the built-in ones.
    /// The run's timeout replaces the profile's own.
    pub fn engine_profile(&self, name: &str) -> Option<EngineProfile> {
        let mut p = self.engines.get(name).cloned().or_else(|| EngineProfile::builtin(name))?;
        if p.name.is_empty() {
            p.name = name.to_string();
        }
        p.timeout_seconds = self.timeout_seconds;
        Some(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_profiles() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            r#"
mapping_paths = ["maps/a.ttl"]
engine = "mine"
timeout_seconds = 60
compress = true
cost_mode = "MeasuredSeconds"

[coefficients]
dedup_cost_factor = 2.5

[engines.mine]
name = "mine"
command_template = "tool -m {mapping_file} -o {output_file}"
timeout_seconds = 60
"#,
        )
        .unwrap();
        let cfg = RunConfig::from_file(&path).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.mapping_paths, [dir.path().join("maps/a.ttl")]);
        assert_eq!(cfg.coefficients.dedup_cost_factor, 2.5);
        assert_eq!(cfg.coefficients.unit_row_cost, 1.0);
        assert_eq!(cfg.cost_mode, CostMode::MeasuredSeconds);
        assert_eq!(cfg.engine_profile("mine").unwrap().timeout_seconds, 60);
        assert!(cfg.engine_profile("rmlmapper").is_some());
        assert!(cfg.engine_profile("nope").is_none());
    }

    #[test]
    fn rejects_bad_values() {
        let cfg = RunConfig {
            parallelism: 0,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig {
            timeout_seconds: 0,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "unknown_key = 1\n").unwrap();
        assert!(matches!(RunConfig::from_file(&path), Err(ConfigError::Parse { .. })));
    }
}
