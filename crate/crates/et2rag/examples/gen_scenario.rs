//! Regenerates the committed mechanism-scenario fixtures under
//! data/mechanism/: corpus, index, dataset, mock scripts, and the two
//! run configs. Usage: `cargo run --example gen_scenario [out_dir]`.

use std::path::PathBuf;

fn main() {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/mechanism"));
    std::fs::create_dir_all(&out_dir).expect("creating output directory");
    et2rag::scenario::write_files(&out_dir).expect("writing scenario files");
    println!("wrote scenario fixtures to {}", out_dir.display());
}
