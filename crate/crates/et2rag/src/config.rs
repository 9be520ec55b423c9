//! Run configuration: a single JSON document with all paths resolved
//! relative to the config file's directory.
//!
//! ```json
//! {
//!   "retrieval": { "index_path": "corpus.idx", "n": 10 },
//!   "organization": { "kind": "anchor_pair" },
//!   "generation": {
//!     "backend": "mock",
//!     "script_path": "scripts.jsonl",
//!     "template_id": "qa-default",
//!     "final_mode": "continue"
//!   },
//!   "consensus": { "similarity": { "kind": "token_jaccard" } },
//!   "budget": { "response_length": 5, "vote_size": 3 },
//!   "metrics": ["accuracy"],
//!   "baseline_tokens": null
//! }
//! ```
//!
//! The `generation.backend` field is "mock" (requires `script_path`)
//! or "http_chat" (requires `endpoint_url` and `model_name`).
//! `retrieval` takes either `index_path` or `endpoint_url`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consensus::SimilarityKind;
use crate::error::{Error, Result};
use crate::generation::{FinalMode, GeneratorConfig, HttpChatConfig, ScriptTable};
use crate::metrics::MetricKind;
use crate::organization::OrganizationStrategy;
use crate::retrieval::{CorpusIndex, ExternalRetrieverConfig};
use crate::types::BudgetParams;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum GenerationConfig {
    Mock {
        script_path: PathBuf,
        #[serde(default = "default_template")]
        template_id: String,
        #[serde(default)]
        final_mode: FinalMode,
    },
    HttpChat {
        #[serde(flatten)]
        http: HttpChatConfig,
        #[serde(default = "default_template")]
        template_id: String,
        #[serde(default)]
        final_mode: FinalMode,
    },
}

fn default_template() -> String {
    crate::generation::DEFAULT_TEMPLATE.to_owned()
}

impl GenerationConfig {
    pub fn template_id(&self) -> &str {
        match self {
            GenerationConfig::Mock { template_id, .. }
            | GenerationConfig::HttpChat { template_id, .. } => template_id,
        }
    }

    pub fn final_mode(&self) -> FinalMode {
        match self {
            GenerationConfig::Mock { final_mode, .. }
            | GenerationConfig::HttpChat { final_mode, .. } => *final_mode,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub similarity: SimilarityKind,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            similarity: SimilarityKind::TokenJaccard,
        }
    }
}

fn default_metrics() -> Vec<MetricKind> {
    vec![MetricKind::Accuracy]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub retrieval: RetrievalConfig,
    pub organization: OrganizationStrategy,
    pub generation: GenerationConfig,
    #[serde(default)]
    pub consensus: ConsensusConfig,
    pub budget: BudgetParams,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    /// fixed token count a plain single response would emit; when
    /// absent, the continuation-mode baseline is measured per query
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_tokens: Option<usize>,
}

/// A `RunConfig` with its file-backed resources loaded.
pub struct LoadedConfig {
    pub run: RunConfig,
    pub retriever: Retriever,
    pub generator: GeneratorConfig,
}

pub enum Retriever {
    Index(CorpusIndex),
    External(ExternalRetrieverConfig),
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let mut config: RunConfig = serde_json::from_str(&raw)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(index_path) = &config.retrieval.index_path {
            config.retrieval.index_path = Some(base.join(index_path));
        }
        if let GenerationConfig::Mock { script_path, .. } = &mut config.generation {
            *script_path = base.join(&*script_path);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        self.organization.validate()?;
        match (&self.retrieval.index_path, &self.retrieval.endpoint_url) {
            (None, None) => Err(Error::Config(
                "retrieval needs index_path or endpoint_url".into(),
            )),
            (Some(_), Some(_)) => Err(Error::Config(
                "retrieval takes index_path or endpoint_url, not both".into(),
            )),
            _ => Ok(()),
        }?;
        if self.retrieval.n < 1 {
            return Err(Error::Config("retrieval.n must be >= 1".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("metrics list must not be empty".into()));
        }
        Ok(())
    }

    /// Validates and loads the index / script table the config points
    /// at.
    pub fn load(self) -> Result<LoadedConfig> {
        self.validate()?;
        let retriever = if let Some(index_path) = &self.retrieval.index_path {
            Retriever::Index(CorpusIndex::load(index_path)?)
        } else {
            Retriever::External(ExternalRetrieverConfig {
                endpoint_url: self.retrieval.endpoint_url.clone().unwrap(),
                request_timeout_secs: 30.0,
            })
        };
        let generator = match &self.generation {
            GenerationConfig::Mock { script_path, .. } => {
                GeneratorConfig::Mock(ScriptTable::from_jsonl(script_path)?)
            }
            GenerationConfig::HttpChat { http, .. } => GeneratorConfig::HttpChat(http.clone()),
        };
        Ok(LoadedConfig {
            run: self,
            retriever,
            generator,
        })
    }
}
