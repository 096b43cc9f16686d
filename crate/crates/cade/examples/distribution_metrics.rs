//! Distribution primitives: empirical pmfs, moments, Wasserstein-1,
//! modality and smoothed targets.
//!
//! ```bash
//! cargo run -p cade --example distribution_metrics
//! ```

use cade::dataset::{DimensionId, Rating, RatingMultiset};
use cade::distributions::{
    empirical_distribution, modality, sample_variance, smooth_bimodal, smooth_unimodal,
    wasserstein1, Histogram, RatingDistribution,
};

fn main() -> cade::Result<()> {
    // five annotators rated the same situation on one dimension
    let ratings = [2u8, 5, 5, 4, 1]
        .iter()
        .map(|&v| Rating::new(v))
        .collect::<cade::Result<Vec<_>>>()?;
    let multiset = RatingMultiset::new("demo", DimensionId::Pleasantness, ratings)?;

    let human = empirical_distribution(&multiset)?;
    let (mean, variance) = human.moments();
    println!(
        "human ratings {:?}",
        multiset
            .ratings
            .iter()
            .map(|r| r.value())
            .collect::<Vec<_>>()
    );
    println!("empirical pmf       {human}");
    println!("pmf moments         mean = {mean:.3}, variance = {variance:.3}");
    println!(
        "sample variance     {:.3} (n - 1 form)",
        sample_variance(&multiset)?
    );

    let histogram = Histogram::from_multiset(&multiset);
    println!("modality            {} mode(s)", modality(&histogram));

    // how far are two candidate predictions from the human distribution?
    let sharp = RatingDistribution::point_mass(Rating::new(4)?);
    let flat = RatingDistribution::uniform();
    println!(
        "\nwasserstein to a point mass at 4: {:.3}",
        wasserstein1(&human, &sharp)
    );
    println!(
        "wasserstein to the uniform pmf:   {:.3}",
        wasserstein1(&human, &flat)
    );

    // smoothed training targets around a ground-truth rating
    let unimodal = smooth_unimodal(Rating::new(4)?, 1.0)?;
    let bimodal = smooth_bimodal(Rating::new(2)?, Rating::new(4)?, 0.8, 0.7)?;
    println!("\nunimodal target around 4: {unimodal}");
    println!("bimodal target 2 and 4:   {bimodal}");

    Ok(())
}
