//! End-to-end per-query pipeline and batch runner: retrieve, organize,
//! generate truncated candidates, vote, finalize, and account tokens.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{LoadedConfig, Retriever};
use crate::consensus;
use crate::error::{Error, Result};
use crate::generation::{self, FinalMode, SlotFailure};
use crate::metrics::{self, EvalRecord};
use crate::organization::{self, OrganizedSubset};
use crate::par;
use crate::retrieval;
use crate::sweep::{extra_cost, CostLedger};
use crate::types::{BudgetParams, Query};

/// One QA dataset entry; the schema doubles as the gold file for eval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetItem {
    pub id: String,
    pub question: String,
    pub answers: Vec<String>,
}

pub fn read_dataset_jsonl(path: &Path) -> Result<Vec<DatasetItem>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::io(format!("opening dataset {}", path.display()), e))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading dataset {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: DatasetItem = serde_json::from_str(&line).map_err(|e| Error::CorpusFormat {
            line: i + 1,
            reason: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateCost {
    pub subset_index: usize,
    pub tokens: usize,
}

/// One query's replayable result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub query_id: String,
    pub winner_index: usize,
    pub final_text: String,
    pub agreement: Vec<f64>,
    pub candidate_texts: Vec<String>,
    pub candidate_costs: Vec<CandidateCost>,
    pub extra_cost: usize,
    pub vote_degenerate: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slot_failures: Vec<SlotFailure>,
    /// wall-clock time; omitted on the mock backend so replays are
    /// byte-identical
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryFailure {
    pub query_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n_succeeded: usize,
    pub n_failed: usize,
    /// the run's headline quality: the single configured metric's
    /// corpus value, or the sum over the configured metric list
    pub quality: f64,
    pub metric_values: Vec<(String, f64)>,
    pub mean_extra_cost: f64,
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<QueryFailure>,
    pub summary: BatchSummary,
}

fn retrieve_for(loaded: &LoadedConfig, query: &Query) -> Result<retrieval::RetrievalResult> {
    match &loaded.retriever {
        Retriever::Index(index) => retrieval::retrieve(index, query, loaded.run.retrieval.n),
        Retriever::External(cfg) => retrieval::external_retrieve(cfg, query, loaded.run.retrieval.n),
    }
}

fn top1_subset(result: &retrieval::RetrievalResult) -> OrganizedSubset {
    OrganizedSubset {
        index: 1,
        documents: vec![result.documents[0].clone()],
    }
}

/// Runs one query through the full pipeline under `budget`.
pub fn run_query(
    loaded: &LoadedConfig,
    budget: BudgetParams,
    item: &DatasetItem,
) -> Result<RunRecord> {
    let started = Instant::now();
    let query = Query::new(item.id.clone(), item.question.clone())?;
    let result = retrieve_for(loaded, &query)?;
    let organized = organization::organize(&result, &loaded.run.organization, budget.vote_size)?;
    let template_id = loaded.run.generation.template_id();
    let final_mode = loaded.run.generation.final_mode();

    let outcome = generation::generate_all(
        &loaded.generator,
        &query,
        &organized,
        template_id,
        budget.response_length,
    )?;
    let consensus_result = consensus::run_consensus(
        &loaded.generator,
        &query,
        &organized,
        &outcome.candidates,
        &loaded.run.consensus.similarity,
        final_mode,
        template_id,
    )?;

    let candidate_tokens: usize = outcome.candidates.iter().map(|c| c.gen_token_cost).sum();
    let winner_prefix = outcome
        .candidates
        .iter()
        .find(|c| c.subset_index == consensus_result.winner_index)
        .map(|c| c.token_count)
        .unwrap_or(0);
    let baseline_tokens = match (final_mode, loaded.run.baseline_tokens) {
        (_, Some(fixed)) => fixed,
        (FinalMode::Regenerate, None) => 0, // unused by the regenerate formula
        (FinalMode::Continue, None) => {
            // measure the plain single-response length; if that fails,
            // fall back to the final path so the extra cost reduces to
            // the losing candidates
            generation::generate_full(&loaded.generator, &query, &top1_subset(&result), template_id)
                .map(|c| c.extra_tokens)
                .unwrap_or(winner_prefix + consensus_result.final_extra_tokens)
        }
    };
    let ledger = CostLedger {
        candidate_tokens,
        final_tokens: consensus_result.final_extra_tokens,
        baseline_tokens,
    };

    Ok(RunRecord {
        query_id: item.id.clone(),
        winner_index: consensus_result.winner_index,
        final_text: consensus_result.final_text,
        agreement: consensus_result.agreement.scores,
        candidate_texts: outcome.candidates.iter().map(|c| c.text.clone()).collect(),
        candidate_costs: outcome
            .candidates
            .iter()
            .map(|c| CandidateCost {
                subset_index: c.subset_index,
                tokens: c.gen_token_cost,
            })
            .collect(),
        extra_cost: extra_cost(&ledger, final_mode),
        vote_degenerate: consensus_result.vote_degenerate,
        slot_failures: outcome.failures,
        elapsed_ms: if loaded.generator.is_mock() {
            None
        } else {
            Some(started.elapsed().as_millis() as u64)
        },
    })
}

/// Plain top-1 RAG on the same backend: one full generation from the
/// best document, no voting. Returns the answer text and its token
/// cost.
pub fn run_plain_rag(loaded: &LoadedConfig, item: &DatasetItem) -> Result<(String, usize)> {
    let query = Query::new(item.id.clone(), item.question.clone())?;
    let result = retrieve_for(loaded, &query)?;
    if result.documents.is_empty() {
        return Err(Error::InsufficientDocuments {
            strategy: "PlainRag".into(),
            needed: 1,
            available: 0,
        });
    }
    let full = generation::generate_full(
        &loaded.generator,
        &query,
        &top1_subset(&result),
        loaded.run.generation.template_id(),
    )?;
    Ok((full.text, full.extra_tokens))
}

fn summarize(
    loaded: &LoadedConfig,
    dataset: &[DatasetItem],
    records: &[RunRecord],
    n_failed: usize,
) -> BatchSummary {
    let eval_records: Vec<EvalRecord> = records
        .iter()
        .map(|record| {
            let answers = dataset
                .iter()
                .find(|item| item.id == record.query_id)
                .map(|item| item.answers.clone())
                .unwrap_or_default();
            EvalRecord {
                query_id: record.query_id.clone(),
                prediction: record.final_text.clone(),
                references: answers,
            }
        })
        .collect();
    let reports: Vec<_> = loaded
        .run
        .metrics
        .iter()
        .map(|kind| kind.compute(&eval_records))
        .collect();
    let quality = if reports.len() == 1 {
        reports[0].corpus_value
    } else {
        metrics::eval_sum(&reports)
    };
    let mean_extra_cost = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.extra_cost as f64).sum::<f64>() / records.len() as f64
    };
    BatchSummary {
        n_succeeded: records.len(),
        n_failed,
        quality,
        metric_values: reports
            .into_iter()
            .map(|r| (r.metric_name, r.corpus_value))
            .collect(),
        mean_extra_cost,
    }
}

/// Runs every dataset item under `budget`. Queries execute in
/// parallel up to `workers`; records come back in dataset order, so
/// output is independent of scheduling.
pub fn run_batch_with_budget(
    loaded: &LoadedConfig,
    budget: BudgetParams,
    dataset: &[DatasetItem],
    workers: Option<usize>,
) -> Result<BatchOutcome> {
    budget.validate()?;
    let results = par::with_workers(workers, || {
        par::map_slice(dataset, |item| run_query(loaded, budget, item))
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (item, result) in dataset.iter().zip(results) {
        match result {
            Ok(record) => records.push(record),
            Err(e) => failures.push(QueryFailure {
                query_id: item.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    if records.is_empty() {
        return Err(Error::Config(format!(
            "all {} queries failed; first: {}",
            dataset.len(),
            failures.first().map(|f| f.reason.as_str()).unwrap_or("")
        )));
    }
    let summary = summarize(loaded, dataset, &records, failures.len());
    Ok(BatchOutcome {
        records,
        failures,
        summary,
    })
}

/// Runs the batch under the config's own budget.
pub fn run_batch(
    loaded: &LoadedConfig,
    dataset: &[DatasetItem],
    workers: Option<usize>,
) -> Result<BatchOutcome> {
    run_batch_with_budget(loaded, loaded.run.budget, dataset, workers)
}
