//! Lexical retrieval over an ingestible corpus, plus an HTTP adapter
//! for external retrieval services.
//!
//! The built-in retriever is BM25 (k1 = 1.2, b = 0.75):
//!
//! ```text
//! score(d, q) = Σ_t idf(t) * tf(t,d) * (k1 + 1) / (tf(t,d) + k1 * (1 - b + b * |d|/avgdl))
//! idf(t) = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
//! ```
//!
//! summed over the distinct query terms. Only documents matching at
//! least one query term are returned; ties break by ascending document
//! id so results are fully deterministic.
//!
//! # Index file format
//!
//! The persisted index is a binary file: the 8-byte magic
//! `45 54 32 49 44 58 00 01` ("ET2IDX", NUL, version 1) followed by a
//! single UTF-8 JSON document with keys `doc_count`, `avg_doc_length`,
//! `doc_lengths` (id -> token count), `texts` (id -> original text),
//! and `postings` (term -> [[doc id, term frequency], ...]).

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;
use crate::types::{Document, Query};

pub const INDEX_MAGIC: [u8; 8] = *b"ET2IDX\x00\x01";

const BM25_K1: f64 = 1.2;
const BM25_B: f64 = 0.75;

/// Inverted index over an ingested corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub doc_count: usize,
    pub avg_doc_length: f64,
    /// term -> (doc id, term frequency), docs in ascending id order
    pub postings: BTreeMap<String, Vec<(String, u32)>>,
    pub doc_lengths: BTreeMap<String, usize>,
    /// original document texts, needed to materialize prompt context
    pub texts: BTreeMap<String, String>,
}

/// Ranked documents for one query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub documents: Vec<Document>,
}

/// Builds an index from (id, text) pairs.
pub fn ingest<I>(corpus: I) -> Result<CorpusIndex>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut doc_lengths = BTreeMap::new();
    let mut texts = BTreeMap::new();
    let mut postings: BTreeMap<String, Vec<(String, u32)>> = BTreeMap::new();

    for (id, doc_text) in corpus {
        if doc_lengths.contains_key(&id) {
            return Err(Error::DuplicateDocId(id));
        }
        let tokens = text::tokenize(&doc_text);
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for token in &tokens.tokens {
            *tf.entry(token).or_insert(0) += 1;
        }
        for (term, count) in tf {
            postings
                .entry(term.to_owned())
                .or_default()
                .push((id.clone(), count));
        }
        doc_lengths.insert(id.clone(), tokens.len());
        texts.insert(id, doc_text);
    }

    let doc_count = doc_lengths.len();
    if doc_count == 0 {
        return Err(Error::EmptyCorpus);
    }
    let avg_doc_length = doc_lengths.values().sum::<usize>() as f64 / doc_count as f64;

    Ok(CorpusIndex {
        doc_count,
        avg_doc_length,
        postings,
        doc_lengths,
        texts,
    })
}

/// Reads a JSONL corpus file with keys "id" and "text".
pub fn read_corpus_jsonl(path: &Path) -> Result<Vec<(String, String)>> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        text: String,
    }

    let file = fs::File::open(path)
        .map_err(|e| Error::io(format!("opening corpus {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading corpus {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::CorpusFormat {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push((parsed.id, parsed.text));
    }
    Ok(out)
}

impl CorpusIndex {
    fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        let n = self.doc_count as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Writes the index to `path` (magic header + JSON payload).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = INDEX_MAGIC.to_vec();
        let payload = serde_json::to_vec(self)
            .map_err(|e| Error::json(format!("serializing index {}", path.display()), e))?;
        bytes.extend_from_slice(&payload);
        fs::write(path, bytes)
            .map_err(|e| Error::io(format!("writing index {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::io(format!("reading index {}", path.display()), e))?;
        if bytes.len() < INDEX_MAGIC.len() || bytes[..INDEX_MAGIC.len()] != INDEX_MAGIC {
            return Err(Error::IndexFormat {
                path: path.display().to_string(),
                reason: "missing or wrong magic header".into(),
            });
        }
        serde_json::from_slice(&bytes[INDEX_MAGIC.len()..]).map_err(|e| Error::IndexFormat {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Top-`n` documents for `query` by BM25 score.
pub fn retrieve(index: &CorpusIndex, query: &Query, n: usize) -> Result<RetrievalResult> {
    if index.doc_count == 0 {
        return Err(Error::EmptyIndex);
    }
    let query_tokens = text::tokenize(&query.text);
    let mut distinct: Vec<&str> = query_tokens.tokens.iter().map(String::as_str).collect();
    distinct.sort_unstable();
    distinct.dedup();

    let mut scores: HashMap<&str, f64> = HashMap::new();
    for term in distinct {
        let Some(posting) = index.postings.get(term) else {
            continue;
        };
        let idf = index.idf(term);
        for (doc_id, tf) in posting {
            let tf = *tf as f64;
            let dl = index.doc_lengths[doc_id] as f64;
            let denom = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / index.avg_doc_length);
            *scores.entry(doc_id.as_str()).or_insert(0.0) += idf * tf * (BM25_K1 + 1.0) / denom;
        }
    }

    let mut ranked: Vec<(&str, f64)> = scores.into_iter().collect();
    // score descending, then id ascending
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(b.0)));
    ranked.truncate(n);

    let documents = ranked
        .into_iter()
        .enumerate()
        .map(|(i, (doc_id, score))| Document {
            id: doc_id.to_owned(),
            text: index.texts[doc_id].clone(),
            score,
            rank: i + 1,
        })
        .collect();

    Ok(RetrievalResult {
        query_id: query.id.clone(),
        documents,
    })
}

/// Endpoint settings for an external HTTP retrieval service.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalRetrieverConfig {
    pub endpoint_url: String,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: f64,
}

fn default_timeout_secs() -> f64 {
    30.0
}

#[derive(Deserialize)]
struct ExternalDoc {
    id: String,
    text: String,
    score: f64,
}

#[derive(Deserialize)]
struct ExternalResponse {
    documents: Vec<ExternalDoc>,
}

/// Adapts an HTTP retrieval service into a rank-contiguous
/// `RetrievalResult`. The service receives
/// `POST {endpoint_url}` with `{"query": ..., "top_k": n}` and must
/// answer `{"documents": [{"id", "text", "score"}, ...]}`; the adapter
/// re-sorts by score descending and assigns ranks.
pub fn external_retrieve(
    cfg: &ExternalRetrieverConfig,
    query: &Query,
    n: usize,
) -> Result<RetrievalResult> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(cfg.request_timeout_secs))
        .build()
        .map_err(|e| Error::Http {
            url: cfg.endpoint_url.clone(),
            reason: e.to_string(),
        })?;
    let body = serde_json::json!({ "query": query.text, "top_k": n });
    let response = client
        .post(&cfg.endpoint_url)
        .json(&body)
        .send()
        .map_err(|e| Error::Http {
            url: cfg.endpoint_url.clone(),
            reason: e.to_string(),
        })?;
    let status = response.status();
    let payload = response.text().map_err(|e| Error::Http {
        url: cfg.endpoint_url.clone(),
        reason: e.to_string(),
    })?;
    if !status.is_success() {
        return Err(Error::Http {
            url: cfg.endpoint_url.clone(),
            reason: format!("status {status}: {payload}"),
        });
    }
    let parsed: ExternalResponse =
        serde_json::from_str(&payload).map_err(|e| Error::MalformedResponse {
            url: cfg.endpoint_url.clone(),
            reason: e.to_string(),
            payload,
        })?;

    let mut docs = parsed.documents;
    docs.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then_with(|| a.id.cmp(&b.id)));
    docs.truncate(n);
    let documents = docs
        .into_iter()
        .enumerate()
        .map(|(i, d)| Document {
            id: d.id,
            text: d.text,
            score: d.score,
            rank: i + 1,
        })
        .collect();
    Ok(RetrievalResult {
        query_id: query.id.clone(),
        documents,
    })
}
