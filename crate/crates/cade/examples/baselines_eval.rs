//! Score the Random and Majority reference predictors on a synthetic
//! dataset and print the evaluation tables.
//!
//! ```bash
//! cargo run -p cade --example baselines_eval
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use cade::dataset::{DimensionId, Rating, RatingMultiset};
use cade::metrics::{evaluate, random_baseline, EvalOptions, MajorityBaseline};

fn main() -> cade::Result<()> {
    // synthetic humans: each dimension has its own typical rating, with
    // annotator noise around it
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let dims = [
        DimensionId::Suddenness,
        DimensionId::Pleasantness,
        DimensionId::SocialNorms,
        DimensionId::Effort,
    ];
    let mut truth = Vec::new();
    for i in 0..40 {
        for (d, dim) in dims.iter().enumerate() {
            let center = (d as i16 % 4) + 1;
            let ratings: Vec<Rating> = (0..5)
                .map(|_| {
                    let noise = rng.random_range(-1i16..=1);
                    Rating::new((center + noise).clamp(1, 5) as u8).unwrap()
                })
                .collect();
            truth.push(RatingMultiset::new(format!("s{i:02}"), *dim, ratings)?);
        }
    }
    let keys: Vec<_> = truth.iter().map(|m| m.key()).collect();

    let random = random_baseline(&keys, 30, 42);
    let report = evaluate(&random, &truth, &EvalOptions::default())?;
    println!(
        "random baseline (30 uniform samples per item)\n{}",
        report.to_text_table()
    );

    let majority = MajorityBaseline::fit(&truth)?.predict(&keys)?;
    let report = evaluate(&majority, &truth, &EvalOptions::default())?;
    println!(
        "majority baseline (modal training rating per dimension)\n{}",
        report.to_text_table()
    );

    Ok(())
}
