//! Candidate generation: prompt assembly, a token budget, a scripted
//! deterministic mock backend, and an OpenAI-compatible chat backend.
//!
//! Each organized subset conditions one candidate, truncated at L
//! tokens. The final answer is produced either by extending the
//! winning truncated candidate (prefix continuation, the default) or
//! by regenerating from the winning subset without a budget.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::organization::{OrganizedSet, OrganizedSubset};
use crate::par;
use crate::text;
use crate::types::Query;

pub const DEFAULT_TEMPLATE: &str = "qa-default";

/// A rendered-to-be prompt: the query plus one context block per
/// document, in subset order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub query_text: String,
    pub context_blocks: Vec<String>,
    pub template_id: String,
}

impl Prompt {
    /// Renders the prompt to the single string sent to a backend.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for block in &self.context_blocks {
            out.push_str("Context: ");
            out.push_str(block);
            out.push('\n');
        }
        out.push_str("Question: ");
        out.push_str(&self.query_text);
        out.push_str("\nAnswer:");
        out
    }
}

/// One truncated generation with its token accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// 1-based index of the subset that conditioned this candidate
    pub subset_index: usize,
    pub text: String,
    pub token_count: usize,
    /// true iff the backend stopped at the budget rather than naturally
    pub truncated: bool,
    /// tokens actually emitted by the backend for this candidate
    pub gen_token_cost: usize,
}

/// Final-answer production mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FinalMode {
    /// extend the winning truncated candidate to natural completion
    #[default]
    Continue,
    /// re-run the generator on the winning subset from scratch
    Regenerate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpChatConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default)]
    pub api_key_env_var: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: f64,
    /// additional attempts after a failed request (0 or 1)
    #[serde(default)]
    pub max_retries: u32,
    /// max_tokens sent for unbudgeted (final/baseline) generations
    #[serde(default = "default_full_max_tokens")]
    pub full_generation_max_tokens: usize,
}

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_full_max_tokens() -> usize {
    1024
}

/// Scripted responses keyed by (query id, sorted document ids).
#[derive(Debug, Clone, Default)]
pub struct ScriptTable {
    responses: HashMap<(String, Vec<String>), String>,
}

impl ScriptTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        query_id: impl Into<String>,
        doc_ids: impl IntoIterator<Item = String>,
        response: impl Into<String>,
    ) {
        let mut ids: Vec<String> = doc_ids.into_iter().collect();
        ids.sort();
        self.responses.insert((query_id.into(), ids), response.into());
    }

    pub fn lookup(&self, query_id: &str, signature: &[String]) -> Option<&str> {
        self.responses
            .get(&(query_id.to_owned(), signature.to_vec()))
            .map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, Vec<String>), &String)> {
        self.responses.iter()
    }

    /// Loads a JSONL script file with keys "query_id", "doc_ids",
    /// "response".
    pub fn from_jsonl(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Line {
            query_id: String,
            doc_ids: Vec<String>,
            response: String,
        }
        let file = fs::File::open(path)
            .map_err(|e| Error::io(format!("opening script {}", path.display()), e))?;
        let mut table = ScriptTable::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line =
                line.map_err(|e| Error::io(format!("reading script {}", path.display()), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::CorpusFormat {
                line: i + 1,
                reason: e.to_string(),
            })?;
            table.insert(parsed.query_id, parsed.doc_ids, parsed.response);
        }
        Ok(table)
    }

    pub fn to_jsonl(&self) -> String {
        let mut entries: Vec<_> = self.responses.iter().collect();
        entries.sort();
        let mut out = String::new();
        for ((query_id, doc_ids), response) in entries {
            out.push_str(
                &json!({"query_id": query_id, "doc_ids": doc_ids, "response": response})
                    .to_string(),
            );
            out.push('\n');
        }
        out
    }
}

/// Generator backend plus its settings.
#[derive(Debug, Clone)]
pub enum GeneratorConfig {
    Mock(ScriptTable),
    HttpChat(HttpChatConfig),
}

impl GeneratorConfig {
    pub fn is_mock(&self) -> bool {
        matches!(self, GeneratorConfig::Mock(_))
    }
}

/// Assembles the prompt for one (query, subset) pair. Only the
/// built-in "qa-default" template ships.
pub fn assemble_prompt(
    query: &Query,
    subset: &OrganizedSubset,
    template_id: &str,
) -> Result<Prompt> {
    if template_id != DEFAULT_TEMPLATE {
        return Err(Error::UnknownTemplate(template_id.to_owned()));
    }
    Ok(Prompt {
        query_text: query.text.clone(),
        context_blocks: subset.documents.iter().map(|d| d.text.clone()).collect(),
        template_id: template_id.to_owned(),
    })
}

fn backend_error(subset_index: usize, err: Error) -> Error {
    match err {
        e @ Error::MissingScript { .. } => e,
        e => Error::Backend {
            subset_index,
            reason: e.to_string(),
        },
    }
}

fn mock_full_text(script: &ScriptTable, query: &Query, subset: &OrganizedSubset) -> Result<String> {
    let signature = subset.doc_id_signature();
    script
        .lookup(&query.id, &signature)
        .map(|s| text::normalize(s))
        .ok_or_else(|| Error::MissingScript {
            query_id: query.id.clone(),
            doc_ids: signature,
        })
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize, Default)]
struct ChatUsage {
    #[serde(default)]
    completion_tokens: usize,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: ChatUsage,
}

struct ChatOutput {
    content: String,
    completion_tokens: usize,
    stopped_at_length: bool,
}

fn http_chat(
    cfg: &HttpChatConfig,
    messages: Vec<serde_json::Value>,
    max_tokens: usize,
) -> Result<ChatOutput> {
    let url = format!(
        "{}/v1/chat/completions",
        cfg.endpoint_url.trim_end_matches('/')
    );
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(cfg.request_timeout_secs))
        .build()
        .map_err(|e| Error::Http {
            url: url.clone(),
            reason: e.to_string(),
        })?;
    let body = json!({
        "model": cfg.model_name,
        "messages": messages,
        "max_tokens": max_tokens,
        "temperature": cfg.temperature,
    });

    let mut last_err = None;
    for _ in 0..=cfg.max_retries {
        let mut request = client.post(&url).json(&body);
        if let Some(var) = &cfg.api_key_env_var {
            if let Ok(key) = std::env::var(var) {
                request = request.bearer_auth(key);
            }
        }
        let result = (|| -> Result<ChatOutput> {
            let response = request.send().map_err(|e| Error::Http {
                url: url.clone(),
                reason: e.to_string(),
            })?;
            let status = response.status();
            let payload = response.text().map_err(|e| Error::Http {
                url: url.clone(),
                reason: e.to_string(),
            })?;
            if !status.is_success() {
                return Err(Error::Http {
                    url: url.clone(),
                    reason: format!("status {status}: {payload}"),
                });
            }
            let parsed: ChatResponse =
                serde_json::from_str(&payload).map_err(|e| Error::MalformedResponse {
                    url: url.clone(),
                    reason: e.to_string(),
                    payload: payload.clone(),
                })?;
            let choice = parsed.choices.into_iter().next().ok_or_else(|| {
                Error::MalformedResponse {
                    url: url.clone(),
                    reason: "empty choices array".into(),
                    payload,
                }
            })?;
            Ok(ChatOutput {
                stopped_at_length: choice.finish_reason.as_deref() == Some("length"),
                content: choice.message.content,
                completion_tokens: parsed.usage.completion_tokens,
            })
        })();
        match result {
            Ok(out) => return Ok(out),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Generates one truncated candidate for `subset` under budget `limit`.
pub fn generate_candidate(
    cfg: &GeneratorConfig,
    query: &Query,
    subset: &OrganizedSubset,
    template_id: &str,
    limit: usize,
) -> Result<Candidate> {
    if limit < 1 {
        return Err(Error::Config("response length must be >= 1".into()));
    }
    match cfg {
        GeneratorConfig::Mock(script) => {
            let full = mock_full_text(script, query, subset)?;
            let full_tokens = text::tokenize(&full);
            let cut = text::truncate_tokens(&full_tokens, limit);
            let truncated = full_tokens.len() > limit;
            Ok(Candidate {
                subset_index: subset.index,
                text: cut.join(),
                token_count: cut.len(),
                truncated,
                gen_token_cost: cut.len(),
            })
        }
        GeneratorConfig::HttpChat(http) => {
            let prompt = assemble_prompt(query, subset, template_id)?;
            let messages = vec![json!({"role": "user", "content": prompt.render()})];
            let out = http_chat(http, messages, limit)
                .map_err(|e| backend_error(subset.index, e))?;
            Ok(Candidate {
                subset_index: subset.index,
                text: out.content,
                token_count: out.completion_tokens,
                truncated: out.stopped_at_length,
                gen_token_cost: out.completion_tokens,
            })
        }
    }
}

/// One subset whose candidate generation failed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotFailure {
    pub subset_index: usize,
    pub reason: String,
}

/// Candidates plus recorded per-slot failures.
#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    /// surviving candidates, ordered by subset_index ascending
    pub candidates: Vec<Candidate>,
    pub failures: Vec<SlotFailure>,
    /// true when fewer than 2 candidates survived and the pipeline
    /// degrades to plain single-candidate RAG
    pub degraded: bool,
}

/// Generates one candidate per subset. Individual failures are
/// recorded; the call errors only when no candidate survives.
pub fn generate_all(
    cfg: &GeneratorConfig,
    query: &Query,
    organized: &OrganizedSet,
    template_id: &str,
    limit: usize,
) -> Result<GenerationOutcome> {
    let results = par::map_slice(&organized.subsets, |subset| {
        generate_candidate(cfg, query, subset, template_id, limit)
    });

    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for (subset, result) in organized.subsets.iter().zip(results) {
        match result {
            Ok(c) => candidates.push(c),
            Err(e) => failures.push(SlotFailure {
                subset_index: subset.index,
                reason: e.to_string(),
            }),
        }
    }
    if candidates.is_empty() {
        return Err(Error::NoCandidates {
            attempted: organized.subsets.len(),
            first: failures
                .first()
                .map(|f| f.reason.clone())
                .unwrap_or_default(),
        });
    }
    let degraded = candidates.len() < 2;
    Ok(GenerationOutcome {
        candidates,
        failures,
        degraded,
    })
}

/// A finished final answer and the tokens spent beyond the reused
/// prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    pub text: String,
    pub extra_tokens: usize,
}

/// Extends a truncated winning candidate to its natural completion.
/// An untruncated prefix is returned unchanged at zero extra cost.
pub fn continue_generation(
    cfg: &GeneratorConfig,
    query: &Query,
    subset: &OrganizedSubset,
    template_id: &str,
    prefix: &Candidate,
) -> Result<Continuation> {
    debug_assert_eq!(prefix.subset_index, subset.index);
    if !prefix.truncated {
        return Ok(Continuation {
            text: prefix.text.clone(),
            extra_tokens: 0,
        });
    }
    match cfg {
        GeneratorConfig::Mock(script) => {
            let full = mock_full_text(script, query, subset)?;
            let extra = text::word_count(&full).saturating_sub(prefix.token_count);
            Ok(Continuation {
                text: full,
                extra_tokens: extra,
            })
        }
        GeneratorConfig::HttpChat(http) => {
            let prompt = assemble_prompt(query, subset, template_id)?;
            let messages = vec![
                json!({"role": "user", "content": prompt.render()}),
                json!({"role": "assistant", "content": prefix.text}),
            ];
            let out = http_chat(http, messages, http.full_generation_max_tokens)
                .map_err(|e| backend_error(subset.index, e))?;
            Ok(Continuation {
                text: format!("{}{}", prefix.text, out.content),
                extra_tokens: out.completion_tokens,
            })
        }
    }
}

/// Full un-truncated generation for `subset`; used for regenerate-mode
/// finals and for the plain-RAG cost baseline. Returns the text and
/// the tokens the backend emitted.
pub fn generate_full(
    cfg: &GeneratorConfig,
    query: &Query,
    subset: &OrganizedSubset,
    template_id: &str,
) -> Result<Continuation> {
    match cfg {
        GeneratorConfig::Mock(script) => {
            let full = mock_full_text(script, query, subset)?;
            let tokens = text::word_count(&full);
            Ok(Continuation {
                text: full,
                extra_tokens: tokens,
            })
        }
        GeneratorConfig::HttpChat(http) => {
            let prompt = assemble_prompt(query, subset, template_id)?;
            let messages = vec![json!({"role": "user", "content": prompt.render()})];
            let out = http_chat(http, messages, http.full_generation_max_tokens)
                .map_err(|e| backend_error(subset.index, e))?;
            Ok(Continuation {
                text: out.content,
                extra_tokens: out.completion_tokens,
            })
        }
    }
}
