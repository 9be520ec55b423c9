use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use et2rag::config::RunConfig;
use et2rag::error::{Error, Result};
use et2rag::metrics::{self, EvalRecord, MetricKind};
use et2rag::pipeline;
use et2rag::retrieval;
use et2rag::sweep;

#[derive(Parser)]
#[command(name = "et2rag", about = "Organized-retrieval consensus pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct WorkerArgs {
    /// worker threads for per-query parallelism (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a retrieval index from a JSONL corpus
    Ingest {
        /// corpus file, one {"id", "text"} object per line
        corpus: PathBuf,
        /// index file to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline over a QA dataset
    Run {
        #[arg(long)]
        config: PathBuf,
        /// dataset file, one {"id", "question", "answers"} per line
        #[arg(long)]
        dataset: PathBuf,
        /// output run records (JSONL)
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        workers: WorkerArgs,
    },
    /// Grid-sweep response length L and vote size V
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// comma-separated response lengths, e.g. 3,5,10
        #[arg(long, value_delimiter = ',')]
        l_grid: Vec<usize>,
        /// comma-separated vote sizes, e.g. 3,5,9
        #[arg(long, value_delimiter = ',')]
        v_grid: Vec<usize>,
        /// output CSV (columns L,V,quality,cost,n_queries,failures)
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        workers: WorkerArgs,
    },
    /// Extract the Pareto frontier from a sweep CSV
    Pareto {
        /// sweep CSV produced by the sweep command
        #[arg(long = "in")]
        input: PathBuf,
        /// frontier CSV to write
        #[arg(long)]
        out: PathBuf,
        /// optional SVG scatter with the frontier highlighted
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Score predictions against gold answers
    Eval {
        /// predictions file, one {"query_id", "prediction"} per line
        #[arg(long)]
        pred: PathBuf,
        /// gold file, {"query_id", "references"} or dataset schema
        #[arg(long)]
        gold: PathBuf,
        /// metrics to report
        #[arg(long, value_delimiter = ',', default_value = "accuracy")]
        metrics: Vec<String>,
    },
}

fn cmd_ingest(corpus: &Path, out: &Path) -> Result<()> {
    let entries = retrieval::read_corpus_jsonl(corpus)?;
    let index = retrieval::ingest(entries)?;
    index.save(out)?;
    println!("{} documents", index.doc_count);
    Ok(())
}

fn cmd_run(config: &Path, dataset: &Path, out: &Path, workers: Option<usize>) -> Result<()> {
    let loaded = RunConfig::from_file(config)?.load()?;
    let items = pipeline::read_dataset_jsonl(dataset)?;
    if items.is_empty() {
        return Err(Error::Config(format!("{}: empty dataset", dataset.display())));
    }
    let max_v = et2rag::organization::max_vote_size(loaded.run.retrieval.n, &loaded.run.organization);
    if loaded.run.budget.vote_size > max_v {
        return Err(Error::Config(format!(
            "budget.vote_size {} exceeds max vote size {} for this strategy at retrieval.n {}",
            loaded.run.budget.vote_size, max_v, loaded.run.retrieval.n
        )));
    }

    let batch = pipeline::run_batch(&loaded, &items, workers)?;
    let mut file = fs::File::create(out)
        .map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    for record in &batch.records {
        serde_json::to_writer(&mut file, record).map_err(|e| Error::json("run record", e))?;
        file.write_all(b"\n")
            .map_err(|e| Error::io("writing run records", e))?;
    }
    for failure in &batch.failures {
        eprintln!("query {} failed: {}", failure.query_id, failure.reason);
    }
    println!(
        "{}",
        json!({
            "n_succeeded": batch.summary.n_succeeded,
            "n_failed": batch.summary.n_failed,
            "quality": batch.summary.quality,
            "metrics": batch.summary.metric_values,
            "mean_extra_cost": batch.summary.mean_extra_cost,
        })
    );
    Ok(())
}

fn cmd_sweep(
    config: &Path,
    dataset: &Path,
    l_grid: &[usize],
    v_grid: &[usize],
    out: &Path,
    workers: Option<usize>,
) -> Result<()> {
    let loaded = RunConfig::from_file(config)?.load()?;
    let items = pipeline::read_dataset_jsonl(dataset)?;
    let outcome = sweep::run_sweep(&loaded, &items, l_grid, v_grid, workers)?;
    for failed in &outcome.failed {
        eprintln!(
            "grid point L={} V={} failed: {}",
            failed.response_length, failed.vote_size, failed.reason
        );
    }
    sweep::write_sweep_csv(&outcome, out)?;
    println!(
        "{}",
        json!({"points": outcome.points.len(), "failed_points": outcome.failed.len()})
    );
    Ok(())
}

fn cmd_pareto(input: &Path, out: &Path, svg: Option<&Path>) -> Result<()> {
    let points = sweep::read_sweep_csv(input)?;
    let frontier = sweep::pareto_frontier(&points);
    let outcome = sweep::SweepOutcome {
        points: frontier.points.clone(),
        failed: Vec::new(),
    };
    sweep::write_sweep_csv(&outcome, out)?;
    if let Some(svg_path) = svg {
        sweep::write_svg(&points, &frontier, svg_path)?;
    }
    println!(
        "{}",
        json!({"input_points": points.len(), "frontier_points": frontier.points.len()})
    );
    Ok(())
}

#[derive(Deserialize)]
struct PredLine {
    query_id: String,
    prediction: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GoldLine {
    Plain {
        query_id: String,
        references: Vec<String>,
    },
    Dataset {
        id: String,
        answers: Vec<String>,
    },
}

fn read_jsonl_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file =
        fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::CorpusFormat {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

fn cmd_eval(pred: &Path, gold: &Path, metric_names: &[String]) -> Result<()> {
    let kinds: Vec<MetricKind> = metric_names
        .iter()
        .map(|n| MetricKind::parse(n))
        .collect::<Result<_>>()?;
    let predictions: Vec<PredLine> = read_jsonl_lines(pred)?;
    let gold_lines: Vec<GoldLine> = read_jsonl_lines(gold)?;
    let gold_map: std::collections::HashMap<String, Vec<String>> = gold_lines
        .into_iter()
        .map(|line| match line {
            GoldLine::Plain {
                query_id,
                references,
            } => (query_id, references),
            GoldLine::Dataset { id, answers } => (id, answers),
        })
        .collect();

    let mut records = Vec::new();
    let mut unmatched = Vec::new();
    for p in predictions {
        match gold_map.get(&p.query_id) {
            Some(references) => records.push(EvalRecord {
                query_id: p.query_id,
                prediction: p.prediction,
                references: references.clone(),
            }),
            None => unmatched.push(p.query_id),
        }
    }
    if !unmatched.is_empty() {
        eprintln!(
            "warning: {} predictions without gold references, excluded: {}",
            unmatched.len(),
            unmatched.join(", ")
        );
    }
    if records.is_empty() {
        return Err(Error::Config(
            "no prediction matched a gold query_id".into(),
        ));
    }

    let reports: Vec<_> = kinds.iter().map(|k| k.compute(&records)).collect();
    println!(
        "{}",
        json!({
            "n_items": records.len(),
            "n_excluded": unmatched.len(),
            "containment": "token-subsequence",
            "reports": reports.iter().map(|r| json!({
                "metric": r.metric_name,
                "value": r.corpus_value,
            })).collect::<Vec<_>>(),
            "eval_sum": metrics::eval_sum(&reports),
        })
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { corpus, out } => cmd_ingest(&corpus, &out),
        Command::Run {
            config,
            dataset,
            out,
            workers,
        } => cmd_run(&config, &dataset, &out, workers.workers),
        Command::Sweep {
            config,
            dataset,
            l_grid,
            v_grid,
            out,
            workers,
        } => cmd_sweep(&config, &dataset, &l_grid, &v_grid, &out, workers.workers),
        Command::Pareto { input, out, svg } => cmd_pareto(&input, &out, svg.as_deref()),
        Command::Eval {
            pred,
            gold,
            metrics,
        } => cmd_eval(&pred, &gold, &metrics),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
