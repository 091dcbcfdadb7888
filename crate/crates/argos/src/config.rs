//! Run configuration: a flat `key = value` text file, every key
//! overridable by a command-line flag of the same dotted name. API tokens
//! come only from the environment (`ARGOS_API_TOKEN`, or the specific
//! `ARGOS_EMBEDDING_TOKEN` / `ARGOS_LLM_TOKEN`), never from the file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `key = value`")]
    BadLine { path: String, line: usize },
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {message}")]
    BadValue { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CorpusPaths {
    pub rules: PathBuf,
    pub seeds: PathBuf,
    pub clauses: PathBuf,
    pub robot_spec: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Remote,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mock => "mock",
            Self::Remote => "remote",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbeddingConfig {
    pub provider: ProviderKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub dims: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LlmConfig {
    pub backend: ProviderKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Thresholds {
    pub tau_attr: f64,
    pub tau_reg: f64,
    pub eps_shift: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Concurrency {
    pub max_in_flight: usize,
    pub retries: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    Lexicon,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorChoice {
    /// Anchor topology shift/CSE on the vanilla-method embedding set.
    Vanilla,
    /// Anchor on the seed embeddings themselves.
    Seed,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvaluateConfig {
    pub anchor: AnchorChoice,
    pub aligned_p: usize,
    /// Which hazard text is embedded for topology analysis.
    pub embed_mechanism: bool,
}

/// The full run configuration, with the documented defaults.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub corpus: CorpusPaths,
    pub embedding: EmbeddingConfig,
    pub llm: LlmConfig,
    pub thresholds: Thresholds,
    pub k_max: usize,
    pub concurrency: Concurrency,
    pub run_dir: PathBuf,
    /// `alias=RULE_ID` pairs for the lexicon extractor.
    pub aliases: Vec<(String, String)>,
    pub extractor: ExtractorKind,
    pub evaluate: EvaluateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusPaths {
                rules: "corpus/rules.jsonl".into(),
                seeds: "corpus/seeds.jsonl".into(),
                clauses: "corpus/clauses.jsonl".into(),
                robot_spec: "corpus/robot_spec.jsonl".into(),
            },
            embedding: EmbeddingConfig {
                provider: ProviderKind::Mock,
                endpoint: None,
                model: "mock-embed".into(),
                dims: 64,
            },
            llm: LlmConfig {
                backend: ProviderKind::Mock,
                endpoint: None,
                model: "mock-llm".into(),
                temperature: 0.7,
                max_tokens: 1024,
            },
            thresholds: Thresholds {
                tau_attr: 0.7,
                tau_reg: 0.7,
                eps_shift: 1e-6,
            },
            k_max: 3,
            concurrency: Concurrency {
                max_in_flight: 4,
                retries: 3,
            },
            run_dir: "run".into(),
            aliases: Vec::new(),
            extractor: ExtractorKind::Lexicon,
            evaluate: EvaluateConfig {
                anchor: AnchorChoice::Vanilla,
                aligned_p: 32,
                embed_mechanism: true,
            },
        }
    }
}

fn parse_number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        message: e.to_string(),
    })
}

fn parse_provider(key: &str, value: &str) -> Result<ProviderKind, ConfigError> {
    match value.to_lowercase().as_str() {
        "mock" => Ok(ProviderKind::Mock),
        "remote" => Ok(ProviderKind::Remote),
        other => Err(ConfigError::BadValue {
            key: key.to_string(),
            message: format!("expected mock|remote, got {other:?}"),
        }),
    }
}

fn parse_aliases(key: &str, value: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for pair in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let Some((alias, rule)) = pair.split_once('=') else {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                message: format!("expected alias=RULE_ID, got {pair:?}"),
            });
        };
        out.push((alias.trim().to_string(), rule.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Apply one `key = value` assignment by its dotted name.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "corpus.rules" => self.corpus.rules = value.into(),
            "corpus.seeds" => self.corpus.seeds = value.into(),
            "corpus.clauses" => self.corpus.clauses = value.into(),
            "corpus.robot_spec" => self.corpus.robot_spec = value.into(),
            "embedding.provider" => self.embedding.provider = parse_provider(key, value)?,
            "embedding.endpoint" => self.embedding.endpoint = Some(value.to_string()),
            "embedding.model" => self.embedding.model = value.to_string(),
            "embedding.dims" => self.embedding.dims = parse_number(key, value)?,
            "llm.backend" => self.llm.backend = parse_provider(key, value)?,
            "llm.endpoint" => self.llm.endpoint = Some(value.to_string()),
            "llm.model" => self.llm.model = value.to_string(),
            "llm.temperature" => self.llm.temperature = parse_number(key, value)?,
            "llm.max_tokens" => self.llm.max_tokens = parse_number(key, value)?,
            "thresholds.tau_attr" => self.thresholds.tau_attr = parse_number(key, value)?,
            "thresholds.tau_reg" => self.thresholds.tau_reg = parse_number(key, value)?,
            "thresholds.eps_shift" => self.thresholds.eps_shift = parse_number(key, value)?,
            "k_max" => self.k_max = parse_number(key, value)?,
            "concurrency.max_in_flight" => {
                self.concurrency.max_in_flight = parse_number(key, value)?
            }
            "concurrency.retries" => self.concurrency.retries = parse_number(key, value)?,
            "run_dir" => self.run_dir = value.into(),
            "grounding.aliases" => self.aliases = parse_aliases(key, value)?,
            "grounding.extractor" => {
                self.extractor = match value.to_lowercase().as_str() {
                    "lexicon" => ExtractorKind::Lexicon,
                    "llm" => ExtractorKind::Llm,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            message: format!("expected lexicon|llm, got {other:?}"),
                        })
                    }
                }
            }
            "evaluate.anchor" => {
                self.evaluate.anchor = match value.to_lowercase().as_str() {
                    "vanilla" => AnchorChoice::Vanilla,
                    "seed" => AnchorChoice::Seed,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            message: format!("expected vanilla|seed, got {other:?}"),
                        })
                    }
                }
            }
            "evaluate.aligned_p" => self.evaluate.aligned_p = parse_number(key, value)?,
            "evaluate.embed_mechanism" => {
                self.evaluate.embed_mechanism = parse_number::<bool>(key, value)?
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Load a config file (`key = value` lines, `#` comments) on top of the
    /// defaults.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = Self::default();
        for (index, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::BadLine {
                    path: path.display().to_string(),
                    line: index + 1,
                });
            };
            config.apply(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Range and consistency checks. Run after all overrides are applied.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let tau = |name: &str, value: f64| -> Result<(), ConfigError> {
            if !(value > -1.0 && value <= 1.0) {
                return Err(ConfigError::Invalid(format!(
                    "{name} = {value} outside (-1, 1]"
                )));
            }
            Ok(())
        };
        tau("thresholds.tau_attr", self.thresholds.tau_attr)?;
        tau("thresholds.tau_reg", self.thresholds.tau_reg)?;
        if self.thresholds.eps_shift < 0.0 {
            return Err(ConfigError::Invalid(
                "thresholds.eps_shift must be >= 0".into(),
            ));
        }
        if self.k_max < 1 {
            return Err(ConfigError::Invalid("k_max must be >= 1".into()));
        }
        if self.embedding.dims == 0 {
            return Err(ConfigError::Invalid("embedding.dims must be >= 1".into()));
        }
        if self.concurrency.max_in_flight == 0 {
            return Err(ConfigError::Invalid(
                "concurrency.max_in_flight must be >= 1".into(),
            ));
        }
        if self.embedding.provider == ProviderKind::Remote && self.embedding.endpoint.is_none() {
            return Err(ConfigError::Invalid(
                "embedding.provider = remote requires embedding.endpoint".into(),
            ));
        }
        if self.llm.backend == ProviderKind::Remote && self.llm.endpoint.is_none() {
            return Err(ConfigError::Invalid(
                "llm.backend = remote requires llm.endpoint".into(),
            ));
        }
        Ok(())
    }

    /// Force both providers to their deterministic mock implementations.
    pub fn force_mock(&mut self) {
        self.embedding.provider = ProviderKind::Mock;
        self.llm.backend = ProviderKind::Mock;
    }

    /// Bearer token for a provider, from the environment only.
    pub fn token_for(provider: &str) -> Option<String> {
        let specific = match provider {
            "embedding" => std::env::var("ARGOS_EMBEDDING_TOKEN").ok(),
            "llm" => std::env::var("ARGOS_LLM_TOKEN").ok(),
            _ => None,
        };
        specific.or_else(|| std::env::var("ARGOS_API_TOKEN").ok())
    }
}
