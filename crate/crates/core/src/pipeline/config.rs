//! Pipeline configuration, read from TOML.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::targets::Target;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Directory of raw comment fixtures (`*.jsonl`) to ingest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<PathBuf>,
    /// An already ingested corpus artifact, used instead of `fixtures`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Post-image checkout of the reviewed repository.
    pub checkout: PathBuf,
    /// Directory of `<pr_id>.diff` files; defaults to `<checkout>/.eyeq/prs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pr_diffs: Option<PathBuf>,
    /// Prompt template directory; the bundled templates when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PathBuf>,
    /// CWE listing; the bundled one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    /// Rule-based offline stand-in.
    Mock,
    /// Recorded responses only; a miss is an error.
    Replay,
    /// Live endpoint, with responses recorded for later replay.
    Live,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientConfig {
    pub kind: ClientKind,
    /// Mock rules file; the bundled rules when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_rules: Option<PathBuf>,
    /// Where replay and live clients keep recordings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_dir: Option<PathBuf>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_tokens() -> u32 {
    crate::classify::DEFAULT_MAX_TOKENS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzSettings {
    pub budget_execs: u64,
    pub rng_seeds: Vec<u64>,
    /// Targets fuzzed in addition to those reached through annotated sites.
    #[serde(default)]
    pub extra_targets: Vec<Target>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_after_crashes: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    /// Withhold the CWE hint from localization and annotation.
    #[serde(default)]
    pub no_cwe_hint: bool,
    /// Write annotated files under `<out_dir>/annotated`.
    #[serde(default)]
    pub apply: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub client: ClientConfig,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub fuzz: FuzzSettings,
    #[serde(default)]
    pub flags: Flags,
    /// Shell command checking each annotated file; see the instrument stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile_hook: Option<String>,
}

fn default_parallelism() -> usize {
    4
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl PipelineConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<PipelineConfig, ConfigError> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.into(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let cfg = PipelineConfig::parse(&text, path)?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Ok(cfg.resolved(base))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.paths;
        if p.fixtures.is_some() == p.corpus.is_some() {
            return Err(ConfigError::Invalid("set exactly one of paths.fixtures and paths.corpus".into()));
        }
        if self.fuzz.rng_seeds.is_empty() {
            return Err(ConfigError::Invalid("fuzz.rng_seeds is empty".into()));
        }
        if self.fuzz.budget_execs == 0 {
            return Err(ConfigError::Invalid("fuzz.budget_execs must be positive".into()));
        }
        if self.client.kind != ClientKind::Mock && self.client.record_dir.is_none() {
            return Err(ConfigError::Invalid("client.record_dir is required for replay and live clients".into()));
        }
        Ok(())
    }

    /// Every relative path joined onto `base`.
    pub fn resolved(mut self, base: &Path) -> PipelineConfig {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        let p = &mut self.paths;
        fix_opt(&mut p.fixtures);
        fix_opt(&mut p.corpus);
        fix(&mut p.checkout);
        fix_opt(&mut p.pr_diffs);
        fix_opt(&mut p.prompts);
        fix_opt(&mut p.taxonomy);
        fix(&mut p.out_dir);
        fix_opt(&mut self.client.mock_rules);
        fix_opt(&mut self.client.record_dir);
        self
    }

    pub fn pr_diff_dir(&self) -> PathBuf {
        self.paths.pr_diffs.clone().unwrap_or_else(|| self.paths.checkout.join(".eyeq").join("prs"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
parallelism = 2

[paths]
fixtures = "corpus"
checkout = "checkout"
out_dir = "out"

[client]
kind = "mock"

[fuzz]
budget_execs = 1000
rng_seeds = [0, 1]
extra_targets = ["magic"]
"#;

    #[test]
    fn round_trip_and_resolution() {
        let c = PipelineConfig::parse(TEXT, Path::new("x.toml")).unwrap();
        assert_eq!(c.client.max_tokens, 5000);
        assert_eq!(c.fuzz.extra_targets, vec![Target::Magic]);
        let again = PipelineConfig::parse(&c.to_toml(), Path::new("y.toml")).unwrap();
        assert_eq!(again, c);
        let r = c.resolved(Path::new("/base"));
        assert_eq!(r.paths.checkout, Path::new("/base/checkout"));
        assert_eq!(r.pr_diff_dir(), Path::new("/base/checkout/.eyeq/prs"));
    }

    #[test]
    fn rejects_bad_configs() {
        let both = TEXT.replace("fixtures = \"corpus\"", "fixtures = \"a\"\ncorpus = \"b\"");
        assert!(matches!(PipelineConfig::parse(&both, Path::new("x")), Err(ConfigError::Invalid(_))));
        let typo = TEXT.replace("parallelism", "paralelism");
        assert!(matches!(PipelineConfig::parse(&typo, Path::new("x")), Err(ConfigError::Parse { .. })));
        let replay = TEXT.replace("\"mock\"", "\"replay\"");
        assert!(PipelineConfig::parse(&replay, Path::new("x")).is_err());
    }
}
