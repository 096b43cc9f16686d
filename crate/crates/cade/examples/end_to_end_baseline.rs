//! Full pipeline run, offline: ingest a toy dataset, score the majority
//! baseline, and inspect the artifacts.
//!
//! ```bash
//! cargo run -p cade --example end_to_end_baseline
//! ```

use std::io::Write;

use cade::config::ExperimentConfig;
use cade::pipeline::Runtime;

fn main() -> cade::Result<()> {
    let root = std::env::temp_dir().join("cade-e2e-example");
    std::fs::create_dir_all(&root).map_err(|e| cade::Error::io(&root, e))?;

    // three situations, five annotators, three dimensions
    let dataset_path = root.join("toy.jsonl");
    let mut file =
        std::fs::File::create(&dataset_path).map_err(|e| cade::Error::io(&dataset_path, e))?;
    for s in 0..3 {
        let mut annotations = Vec::new();
        for a in 0..5 {
            for (d, dim) in ["suddenness", "pleasantness", "effort"].iter().enumerate() {
                annotations.push(format!(
                    r#"{{"annotator_id":"a{a}","dimension":"{dim}","rating":{}}}"#,
                    1 + (s + a + d) % 5
                ));
            }
        }
        writeln!(
            file,
            r#"{{"situation_id":"s{s}","text":"Toy situation {s}.","source_dataset":"EnVent","annotations":[{}]}}"#,
            annotations.join(",")
        )
        .map_err(|e| cade::Error::io(&dataset_path, e))?;
    }
    drop(file);

    let config_path = root.join("experiment.toml");
    std::fs::write(
        &config_path,
        format!(
            r#"[dataset]
path = "{dataset}"
train_path = "{dataset}"

[prediction]
source = "baseline-majority"

[smoothing]
targets = "unimodal"

[run]
seed = 7
out_dir = "{out}"
"#,
            dataset = dataset_path.display(),
            out = root.join("out").display(),
        ),
    )
    .map_err(|e| cade::Error::io(&config_path, e))?;

    let (config, hash) = ExperimentConfig::load(&config_path)?;
    let mut runtime = Runtime::new(config, hash)?;
    runtime.run(None)?;

    println!("stages: {:?}", runtime.manifest().stages);
    println!("\neval report:\n");
    let report = std::fs::read_to_string(root.join("out/eval_report.txt"))
        .map_err(|e| cade::Error::io(root.join("out/eval_report.txt"), e))?;
    println!("{report}");
    println!("artifacts under {}:", root.join("out").display());
    for name in runtime.manifest().artifacts.keys() {
        println!("  {name}");
    }
    Ok(())
}
