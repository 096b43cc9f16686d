//! Second-order analyses: per-group variance, dimension rankings,
//! significance tests and metric correlations.
//!
//! ```bash
//! cargo run -p cade --example subjectivity_analysis
//! ```

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use cade::analysis::{group_variance, pearson, rank_dimensions, welch_one_tailed, GroupBy};
use cade::dataset::{Annotation, AppraisalRecord, DimensionId, Rating, SourceDataset};
use cade::metrics::{evaluate, random_baseline, EvalOptions};
use cade::persona::PersonaProfile;

fn main() -> cade::Result<()> {
    let mut rng = ChaCha12Rng::seed_from_u64(11);

    // two annotator groups: one consistent, one dispersed
    let mut records = Vec::new();
    for i in 0..25 {
        let mut annotations = Vec::new();
        let mut profiles = BTreeMap::new();
        for (a, origin) in [
            ("a0", "Oceania"),
            ("a1", "Oceania"),
            ("a2", "Africa"),
            ("a3", "Africa"),
        ] {
            profiles.insert(
                a.to_string(),
                PersonaProfile {
                    ethnicity: Some(origin.to_string()),
                    ..Default::default()
                },
            );
            for dim in [DimensionId::Attention, DimensionId::Pleasantness] {
                let rating = if origin == "Oceania" {
                    3
                } else {
                    rng.random_range(1..=5)
                };
                annotations.push(Annotation {
                    annotator_id: a.to_string(),
                    dimension: dim,
                    rating: Rating::new(rating)?,
                });
            }
        }
        records.push(AppraisalRecord {
            situation_id: format!("s{i:02}"),
            text: format!("Situation {i}."),
            source_dataset: SourceDataset::EnVent,
            annotations,
            profiles,
        });
    }

    let table = group_variance(&records, &GroupBy::Ethnicity)?;
    println!(
        "per-group appraisal variance (long CSV):\n{}",
        table.to_long_csv()
    );

    // rank dimensions of a random-baseline report
    let multisets = cade::dataset::build_rating_multisets(&records);
    let keys: Vec<_> = multisets.iter().map(|m| m.key()).collect();
    let preds = random_baseline(&keys, 30, 5);
    let report = evaluate(&preds, &multisets, &EvalOptions::default())?;
    let (top, bottom) = rank_dimensions(&report, 1)?;
    println!("best-modeled dimension:  {}", top[0]);
    println!("worst-modeled dimension: {}", bottom[0]);

    // does a condition improve per-situation distances?
    let without: Vec<f64> = (0..30).map(|_| 1.1 + rng.random_range(0.0..0.4)).collect();
    let with: Vec<f64> = (0..30).map(|_| 0.9 + rng.random_range(0.0..0.4)).collect();
    let p = welch_one_tailed(&without, &with)?;
    println!("\none-tailed welch p-value (condition helps): {p:.3}");

    // correlation between two per-dimension metric vectors
    let var_mae: Vec<f64> = (0..21).map(|_| rng.random_range(0.6..1.1)).collect();
    let wasserstein: Vec<f64> = var_mae
        .iter()
        .map(|v| 0.9 * v + rng.random_range(-0.05..0.05) + 0.2)
        .collect();
    println!(
        "pearson(var-mae, wasserstein) = {:.3}",
        pearson(&var_mae, &wasserstein)?
    );

    Ok(())
}
