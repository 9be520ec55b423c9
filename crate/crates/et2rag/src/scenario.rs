//! A shipped, fully scripted 20-query scenario in which the top-1
//! document misleads the generator on 8 queries while the broader
//! subsets support the right answer.
//!
//! Plain top-1 RAG answers those 8 queries wrongly (12/20 correct);
//! the anchored-pair vote with V = 3 recovers them, because two of the
//! three subsets script the gold answer. The scenario doubles as the
//! deterministic fixture for cost accounting and replay tests.

use std::fs;
use std::path::Path;

use serde_json::json;

use crate::error::{Error, Result};
use crate::generation::ScriptTable;
use crate::pipeline::DatasetItem;
use crate::retrieval;

pub const QUERY_COUNT: usize = 20;
/// 0-based positions of the queries whose top-1 document misleads
pub const MISLEADING: [usize; 8] = [1, 3, 5, 7, 9, 11, 13, 15];

const GOLD: [&str; 20] = [
    "emerald", "saffron", "quartz", "juniper", "cobalt", "meadow", "harbor", "lantern", "orchid",
    "timber", "velvet", "anchor", "bramble", "copper", "damson", "ember", "fjord", "garnet",
    "heather", "indigo",
];

const WRONG: [&str; 20] = [
    "basalt", "chalk", "dune", "eclipse", "fathom", "gully", "hollow", "inlet", "jetsam", "knoll",
    "lagoon", "mesa", "nimbus", "osprey", "plume", "quill", "ridge", "shale", "tundra", "umber",
];

pub struct Scenario {
    pub corpus: Vec<(String, String)>,
    pub dataset: Vec<DatasetItem>,
    pub scripts: ScriptTable,
}

fn topic(i: usize) -> String {
    format!("tq{i:02}")
}

fn doc_ids(i: usize) -> [String; 3] {
    [
        format!("d{i:02}a"),
        format!("d{i:02}b"),
        format!("d{i:02}c"),
    ]
}

fn answer(word: &str) -> String {
    format!("the secret word is {word}")
}

/// Builds the in-memory scenario. Document lengths are graded so BM25
/// ranks each query's documents a > b > c deterministically.
pub fn mechanism_scenario() -> Scenario {
    let mut corpus = Vec::new();
    let mut dataset = Vec::new();
    let mut scripts = ScriptTable::new();

    for i in 0..QUERY_COUNT {
        let topic = topic(i);
        let [da, db, dc] = doc_ids(i);
        corpus.push((da.clone(), format!("{topic} guide alpha")));
        corpus.push((db.clone(), format!("{topic} guide beta note")));
        corpus.push((dc.clone(), format!("{topic} guide gamma note more")));

        let query_id = format!("q{i:02}");
        dataset.push(DatasetItem {
            id: query_id.clone(),
            question: format!("what is the secret word for {topic}"),
            answers: vec![GOLD[i].to_owned()],
        });

        let top1_answer = if MISLEADING.contains(&i) {
            answer(WRONG[i])
        } else {
            answer(GOLD[i])
        };
        scripts.insert(query_id.clone(), [da.clone()], top1_answer);
        scripts.insert(query_id.clone(), [da.clone(), db], answer(GOLD[i]));
        scripts.insert(query_id, [da, dc], answer(GOLD[i]));
    }

    Scenario {
        corpus,
        dataset,
        scripts,
    }
}

fn run_config_json(final_mode: &str) -> serde_json::Value {
    json!({
        "retrieval": {"index_path": "corpus.idx", "n": 3},
        "organization": {"kind": "anchor_pair"},
        "generation": {
            "backend": "mock",
            "script_path": "scripts.jsonl",
            "template_id": "qa-default",
            "final_mode": final_mode
        },
        "consensus": {"similarity": {"kind": "token_jaccard"}},
        "budget": {"response_length": 5, "vote_size": 3},
        "metrics": ["accuracy"]
    })
}

/// Writes the scenario's corpus, prebuilt index, dataset, scripts, and
/// two run configs (prefix continuation and regenerate) into `dir`.
pub fn write_files(dir: &Path) -> Result<()> {
    let scenario = mechanism_scenario();
    let write = |name: &str, contents: String| -> Result<()> {
        fs::write(dir.join(name), contents)
            .map_err(|e| Error::io(format!("writing scenario file {name}"), e))
    };

    let mut corpus_jsonl = String::new();
    for (id, text) in &scenario.corpus {
        corpus_jsonl.push_str(&json!({"id": id, "text": text}).to_string());
        corpus_jsonl.push('\n');
    }
    write("corpus.jsonl", corpus_jsonl)?;

    let index = retrieval::ingest(scenario.corpus.clone())?;
    index.save(&dir.join("corpus.idx"))?;

    let mut dataset_jsonl = String::new();
    for item in &scenario.dataset {
        dataset_jsonl.push_str(&serde_json::to_string(item).expect("dataset item serializes"));
        dataset_jsonl.push('\n');
    }
    write("dataset.jsonl", dataset_jsonl)?;
    write("scripts.jsonl", scenario.scripts.to_jsonl())?;
    write("config.json", run_config_json("continue").to_string())?;
    write(
        "config_regenerate.json",
        run_config_json("regenerate").to_string(),
    )?;
    Ok(())
}
