//! Runs the ablation ladder over the bundled toy manifest with scripted
//! backends and prints the tables.
//!
//! cargo run --example evaluate_toy [out-dir]

use std::path::PathBuf;

use dsg::eval::MetricKind;
use dsg::pipeline::{cmd_ablate, RunConfig};

fn main() {
    let toy = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy");
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("dsg-evaluate-toy"));
    let cfg = RunConfig {
        backend_config: Some(toy.join("backends.json")),
        backend: Some("vlm".into()),
        manifest: Some(toy.join("manifest.json")),
        cache_dir: Some(out.join("cache")),
        out: out.clone(),
        runs: 3,
        metric: MetricKind::Graded,
        human_row: true,
        ..RunConfig::default()
    };
    match cmd_ablate(&cfg) {
        Ok(evaluation) => {
            print!("{}", evaluation.table);
            println!("\nartifacts in {}", out.display());
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class_name());
            std::process::exit(e.exit_code());
        }
    }
}
