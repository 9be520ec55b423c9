//! Consensus negotiation and majority voting.
//!
//! Builds the V×V pairwise similarity matrix M over the truncated
//! candidate texts, sums rows into agreement scores A, picks the
//! candidate with maximal agreement (ties toward the lowest subset
//! index, which the organization module orders by retrieval quality),
//! and drives production of the final answer from the winning subset.
//!
//! The diagonal is included in the row sums; since every shipped
//! similarity kind has a unit diagonal this shifts all scores by the
//! same constant and never changes the argmax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generation::{
    self, Candidate, Continuation, FinalMode, GeneratorConfig,
};
use crate::metrics;
use crate::organization::OrganizedSet;
use crate::par;
use crate::text;
use crate::types::Query;

/// Deterministic offline embedder or an HTTP embeddings service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderConfig {
    /// fixed-key FNV-hashed bag-of-words vector, fully offline
    HashedBow {
        #[serde(default = "default_bow_dims")]
        dims: usize,
    },
    /// OpenAI-compatible POST {url}/v1/embeddings
    Http {
        endpoint_url: String,
        model_name: String,
        #[serde(default)]
        api_key_env_var: Option<String>,
    },
}

fn default_bow_dims() -> usize {
    256
}

/// Pairwise similarity method C. All kinds map into [0, 1] with a
/// unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimilarityKind {
    /// 1 iff the normalized texts are equal
    ExactNormalized,
    /// Jaccard over distinct-token sets
    TokenJaccard,
    /// LCS-based F1 over token sequences
    RougeLF1,
    /// cosine of embedder outputs, clipped to [0, 1]
    EmbeddingCosine { embedder: EmbedderConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub size: usize,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementScores {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub matrix: SimilarityMatrix,
    pub agreement: AgreementScores,
    /// subset index (1-based) of the winning candidate
    pub winner_index: usize,
    pub final_text: String,
    /// tokens spent on the final generation beyond the reused prefix
    pub final_extra_tokens: usize,
    /// true when fewer than 2 candidates voted
    pub vote_degenerate: bool,
}

fn fnv1a(token: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in token.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn hashed_bow(text_value: &str, dims: usize) -> Vec<f64> {
    let mut vector = vec![0.0; dims];
    for token in text::tokenize(text_value).tokens {
        vector[(fnv1a(&token) % dims as u64) as usize] += 1.0;
    }
    vector
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

fn embed(cfg: &EmbedderConfig, text_value: &str) -> Result<Vec<f64>> {
    match cfg {
        EmbedderConfig::HashedBow { dims } => Ok(hashed_bow(text_value, *dims)),
        EmbedderConfig::Http {
            endpoint_url,
            model_name,
            api_key_env_var,
        } => {
            let url = format!("{}/v1/embeddings", endpoint_url.trim_end_matches('/'));
            let client = reqwest::blocking::Client::new();
            let mut request = client
                .post(&url)
                .json(&serde_json::json!({"model": model_name, "input": text_value}));
            if let Some(var) = api_key_env_var {
                if let Ok(key) = std::env::var(var) {
                    request = request.bearer_auth(key);
                }
            }
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
                    url,
                    reason: format!("status {status}: {payload}"),
                });
            }
            let parsed: EmbeddingResponse =
                serde_json::from_str(&payload).map_err(|e| Error::MalformedResponse {
                    url: url.clone(),
                    reason: e.to_string(),
                    payload,
                })?;
            parsed
                .data
                .into_iter()
                .next()
                .map(|d| d.embedding)
                .ok_or_else(|| Error::MalformedResponse {
                    url,
                    reason: "empty data array".into(),
                    payload: String::new(),
                })
        }
    }
}

/// Similarity of two texts under `kind`, in [0, 1].
pub fn similarity(kind: &SimilarityKind, a: &str, b: &str) -> Result<f64> {
    let value = match kind {
        SimilarityKind::ExactNormalized => {
            if text::normalize(a) == text::normalize(b) {
                1.0
            } else {
                0.0
            }
        }
        SimilarityKind::TokenJaccard => {
            let mut set_a = text::tokenize(a).tokens;
            let mut set_b = text::tokenize(b).tokens;
            set_a.sort();
            set_a.dedup();
            set_b.sort();
            set_b.dedup();
            if set_a.is_empty() && set_b.is_empty() {
                1.0
            } else {
                let intersection = set_a.iter().filter(|t| set_b.binary_search(t).is_ok()).count();
                let union = set_a.len() + set_b.len() - intersection;
                intersection as f64 / union as f64
            }
        }
        SimilarityKind::RougeLF1 => {
            let ta = text::tokenize(a).tokens;
            let tb = text::tokenize(b).tokens;
            if ta.is_empty() && tb.is_empty() {
                1.0
            } else {
                metrics::rouge_l_f1(&ta, &tb)
            }
        }
        SimilarityKind::EmbeddingCosine { embedder } => {
            // both-empty texts have zero vectors; treat them as identical
            if text::normalize(a).is_empty() && text::normalize(b).is_empty() {
                1.0
            } else {
                let va = embed(embedder, a)?;
                let vb = embed(embedder, b)?;
                cosine(&va, &vb).clamp(0.0, 1.0)
            }
        }
    };
    Ok(value)
}

/// Builds the symmetric similarity matrix over the candidates'
/// truncated texts. The upper triangle is computed once and mirrored.
pub fn build_matrix(kind: &SimilarityKind, candidates: &[Candidate]) -> Result<SimilarityMatrix> {
    let size = candidates.len();
    let pairs: Vec<(usize, usize)> = (0..size)
        .flat_map(|i| (i + 1..size).map(move |j| (i, j)))
        .collect();
    let upper = par::map_slice(&pairs, |&(i, j)| {
        similarity(kind, &candidates[i].text, &candidates[j].text).map_err(|e| (i, j, e))
    });

    let mut values = vec![vec![0.0; size]; size];
    for (i, row) in values.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for (&(i, j), entry) in pairs.iter().zip(upper) {
        match entry {
            Ok(v) => {
                values[i][j] = v;
                values[j][i] = v;
            }
            Err((i, j, e)) => {
                return Err(Error::Backend {
                    subset_index: candidates[i].subset_index,
                    reason: format!(
                        "similarity({}, {}) failed: {e}",
                        candidates[i].subset_index, candidates[j].subset_index
                    ),
                })
            }
        }
    }
    Ok(SimilarityMatrix { size, values })
}

/// Row sums of the similarity matrix.
pub fn agreement_scores(matrix: &SimilarityMatrix) -> AgreementScores {
    AgreementScores {
        scores: matrix.values.iter().map(|row| row.iter().sum()).collect(),
    }
}

/// 1-based position of the maximal agreement score; ties break toward
/// the smallest index.
pub fn select_winner(agreement: &AgreementScores) -> usize {
    let mut best = 0;
    for (i, score) in agreement.scores.iter().enumerate() {
        if *score > agreement.scores[best] {
            best = i;
        }
    }
    best + 1
}

/// Runs consensus over the surviving candidates and produces the
/// final answer from the winning subset.
pub fn run_consensus(
    cfg: &GeneratorConfig,
    query: &Query,
    organized: &OrganizedSet,
    candidates: &[Candidate],
    kind: &SimilarityKind,
    final_mode: FinalMode,
    template_id: &str,
) -> Result<ConsensusResult> {
    assert!(!candidates.is_empty(), "consensus needs at least one candidate");
    let matrix = build_matrix(kind, candidates)?;
    let agreement = agreement_scores(&matrix);
    let winner_row = select_winner(&agreement) - 1;
    let winner = &candidates[winner_row];
    let subset = organized
        .subsets
        .iter()
        .find(|s| s.index == winner.subset_index)
        .expect("candidate refers to an organized subset");

    let Continuation { text, extra_tokens } = match final_mode {
        FinalMode::Continue => {
            generation::continue_generation(cfg, query, subset, template_id, winner)?
        }
        FinalMode::Regenerate => generation::generate_full(cfg, query, subset, template_id)?,
    };

    Ok(ConsensusResult {
        matrix,
        agreement,
        winner_index: winner.subset_index,
        final_text: text,
        final_extra_tokens: extra_tokens,
        vote_degenerate: candidates.len() < 2,
    })
}
