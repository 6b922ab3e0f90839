//! Run configuration: one TOML file describing a whole batch run, meant
//! to be checked in next to its dataset as a reproducible artifact.
//!
//! All paths are resolved relative to the config file's directory, and
//! referenced input files must exist at load time so misconfiguration
//! surfaces before any work (or any network call) happens.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use sgcd_core::decoder::DecodeConfig;

/// Which task a run or evaluation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Triplet extraction against entity/relation catalogs.
    Ie,
    /// Constituency parsing over a tag inventory.
    Cp,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub paths: Paths,
    #[serde(default)]
    pub decode: DecodeSettings,
    pub sketcher: SketcherSettings,
    #[serde(default)]
    pub flags: Flags,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Input dataset, JSON-lines.
    pub dataset: PathBuf,
    /// Append-only run transcript; an existing file resumes the run.
    pub transcript: PathBuf,
    /// Evaluation report, written atomically on completion.
    pub report: PathBuf,
    /// Entity catalog TSV (ie only).
    pub entities: Option<PathBuf>,
    /// Relation catalog TSV (ie only).
    pub relations: Option<PathBuf>,
    /// Tag inventory INI (cp only); defaults to the built-in inventory.
    pub tags: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeSettings {
    pub beam_size: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        let d = DecodeConfig::default();
        DecodeSettings { beam_size: d.beam_size, max_len: d.max_len, seed: d.seed }
    }
}

impl DecodeSettings {
    pub fn to_core(self) -> DecodeConfig {
        DecodeConfig { beam_size: self.beam_size, max_len: self.max_len, seed: self.seed }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketcherSettings {
    /// Chat-completions URL, or the literal `mock` for the offline
    /// stand-in sketcher (no network, no credential).
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model: String,
    /// Name of the environment variable holding the API credential.
    /// Required for non-mock endpoints; the variable itself must be set.
    pub credential_env: Option<String>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Requests per second across all workers.
    pub rate_limit: Option<f64>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u64,
}

fn default_model() -> String {
    "sketch-model".to_string()
}

fn default_parallelism() -> usize {
    1
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_tokens() -> u64 {
    256
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Flags {
    /// Repeat the original input in refinement prompts.
    pub include_input: bool,
    /// Require a single root bracket spanning the whole sentence (cp).
    pub single_root: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Flags { include_input: true, single_root: false }
    }
}

impl RunConfig {
    /// Loads, resolves, and validates a config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = match path.parent() {
            Some(parent) if !parent.as_os_str().is_empty() => parent.to_path_buf(),
            _ => PathBuf::from("."),
        };
        config.resolve(&base);
        config.validate()?;
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        for path in [&mut self.paths.dataset, &mut self.paths.transcript, &mut self.paths.report]
        {
            *path = base.join(&*path);
        }
        for path in [&mut self.paths.entities, &mut self.paths.relations, &mut self.paths.tags] {
            if let Some(path) = path {
                *path = base.join(&*path);
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.decode.beam_size == 0 {
            bail!("decode.beam_size must be at least 1");
        }
        if self.decode.max_len == 0 {
            bail!("decode.max_len must be at least 1");
        }
        if self.sketcher.parallelism == 0 {
            bail!("sketcher.parallelism must be at least 1");
        }
        if let Some(rate) = self.sketcher.rate_limit {
            if !(rate > 0.0) {
                bail!("sketcher.rate_limit must be positive");
            }
        }
        if self.sketcher.timeout_ms == 0 {
            bail!("sketcher.timeout_ms must be positive");
        }
        if self.sketcher.endpoint.is_empty() {
            bail!("sketcher.endpoint must not be empty");
        }
        require_exists("paths.dataset", &self.paths.dataset)?;
        match self.task {
            Task::Ie => {
                let entities = self
                    .paths
                    .entities
                    .as_deref()
                    .context("paths.entities is required for the ie task")?;
                let relations = self
                    .paths
                    .relations
                    .as_deref()
                    .context("paths.relations is required for the ie task")?;
                require_exists("paths.entities", entities)?;
                require_exists("paths.relations", relations)?;
                if self.paths.tags.is_some() {
                    bail!("paths.tags is only used by the cp task");
                }
            }
            Task::Cp => {
                if let Some(tags) = self.paths.tags.as_deref() {
                    require_exists("paths.tags", tags)?;
                }
                if self.paths.entities.is_some() || self.paths.relations.is_some() {
                    bail!("paths.entities/relations are only used by the ie task");
                }
            }
        }
        if !self.mock_sketcher() && self.credential_env().is_none() {
            bail!("sketcher.credential_env is required for remote endpoints");
        }
        Ok(())
    }

    /// Whether the run uses the offline stand-in sketcher.
    pub fn mock_sketcher(&self) -> bool {
        self.sketcher.endpoint == "mock"
    }

    fn credential_env(&self) -> Option<&str> {
        self.sketcher.credential_env.as_deref().filter(|name| !name.is_empty())
    }

    /// Reads the API credential for remote endpoints. Errors when the
    /// configured environment variable is unset — checked before any
    /// network call. Mock runs need no credential.
    pub fn credential(&self) -> Result<Option<String>> {
        if self.mock_sketcher() {
            return Ok(None);
        }
        let name = self.credential_env().expect("validated at load");
        match std::env::var(name) {
            Ok(value) => Ok(Some(value)),
            Err(_) => bail!("credential environment variable {name} is not set"),
        }
    }
}

fn require_exists(what: &str, path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("{what}: {} does not exist", path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("run.toml");
        std::fs::write(&path, body).unwrap();
        path
    }

    fn toy_ie_files(dir: &Path) {
        std::fs::write(dir.join("data.jsonl"), "{}\n").unwrap();
        std::fs::write(dir.join("entities.tsv"), "Q1\tMona Lisa\n").unwrap();
        std::fs::write(dir.join("relations.tsv"), "P1\tby\n").unwrap();
    }

    const IE_BODY: &str = r#"
task = "ie"

[paths]
dataset = "data.jsonl"
transcript = "transcript.jsonl"
report = "report.json"
entities = "entities.tsv"
relations = "relations.tsv"

[sketcher]
endpoint = "mock"
"#;

    #[test]
    fn paths_resolve_relative_to_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        toy_ie_files(dir.path());
        let path = write_config(dir.path(), IE_BODY);
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.paths.dataset, dir.path().join("data.jsonl"));
        assert_eq!(config.decode.beam_size, DecodeConfig::default().beam_size);
        assert!(config.flags.include_input);
        assert!(config.mock_sketcher());
        assert_eq!(config.credential().unwrap(), None);
    }

    #[test]
    fn missing_input_files_fail_at_load() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("data.jsonl"), "{}\n").unwrap();
        let path = write_config(dir.path(), IE_BODY);
        let err = RunConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("paths.entities"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        toy_ie_files(dir.path());
        let path = write_config(dir.path(), &format!("{IE_BODY}\n[decode]\nbeam = 3\n"));
        assert!(RunConfig::load(&path).is_err());
    }

    #[test]
    fn remote_endpoint_requires_credential_env() {
        let dir = tempfile::tempdir().unwrap();
        toy_ie_files(dir.path());
        let body = IE_BODY.replace("endpoint = \"mock\"", "endpoint = \"https://api.test/v1\"");
        let path = write_config(dir.path(), &body);
        let err = RunConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("credential_env"));
    }

    #[test]
    fn cp_task_rejects_catalog_paths() {
        let dir = tempfile::tempdir().unwrap();
        toy_ie_files(dir.path());
        let body = IE_BODY.replace("task = \"ie\"", "task = \"cp\"");
        let path = write_config(dir.path(), &body);
        let err = RunConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("only used by the ie task"));
    }
}
