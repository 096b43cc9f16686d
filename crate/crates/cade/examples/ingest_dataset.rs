//! Parse a dataset export, unify dimensions and scales, and build rating
//! multisets. Demonstrates the rejects report with a malformed row.
//!
//! ```bash
//! cargo run -p cade --example ingest_dataset
//! ```

use std::io::Write;

use cade::dataset::{
    build_rating_multisets, parse_records, DatasetLayout, DimensionMap, RatingScale,
};

fn main() -> cade::Result<()> {
    // a small 10-point export in the FGE naming scheme; the third row
    // carries an out-of-range rating and must land in the rejects report
    let rows = [
        r#"{"situation_id":"e1","text":"Missed the last train home.","source_dataset":"FGE","annotations":[{"annotator_id":"a1","dimension":"expectedness","rating":3},{"annotator_id":"a2","dimension":"expectedness","rating":7},{"annotator_id":"a1","dimension":"goal_consistency","rating":2}]}"#,
        r#"{"situation_id":"e2","text":"Won a small raffle prize.","source_dataset":"FGE","annotations":[{"annotator_id":"a1","dimension":"expectedness","rating":9},{"annotator_id":"a2","dimension":"mind_body","rating":4}]}"#,
        r#"{"situation_id":"e3","text":"Broken row.","source_dataset":"FGE","annotations":[{"annotator_id":"a1","dimension":"expectedness","rating":11}]}"#,
    ];
    let dir = std::env::temp_dir().join("cade-ingest-example");
    std::fs::create_dir_all(&dir).map_err(|e| cade::Error::io(&dir, e))?;
    let input = dir.join("fge_export.jsonl");
    let mut file = std::fs::File::create(&input).map_err(|e| cade::Error::io(&input, e))?;
    for row in rows {
        writeln!(file, "{row}").map_err(|e| cade::Error::io(&input, e))?;
    }

    let layout = DatasetLayout::source(RatingScale::TenPoint);
    let outcome = parse_records(&input, &layout, &DimensionMap::built_in())?;

    println!(
        "parsed {} records, rejected {} rows",
        outcome.records.len(),
        outcome.rejects.len()
    );
    for reject in &outcome.rejects {
        println!("  line {}: {}", reject.line, reject.reason);
    }
    for (name, count) in &outcome.dropped_dimensions {
        println!("  dropped {count} annotation(s) of unmapped dimension {name:?}");
    }

    println!("\nrescaled, canonical annotations:");
    for record in &outcome.records {
        for ann in &record.annotations {
            println!(
                "  {} / {:<14} {} -> {}",
                record.situation_id, ann.annotator_id, ann.dimension, ann.rating
            );
        }
    }

    let multisets = build_rating_multisets(&outcome.records);
    println!("\n{} rating multisets:", multisets.len());
    for m in &multisets {
        let values: Vec<u8> = m.ratings.iter().map(|r| r.value()).collect();
        println!("  ({}, {}) -> {values:?}", m.situation_id, m.dimension);
    }
    Ok(())
}
