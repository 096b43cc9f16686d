//! Temperature grid search against an offline softmax endpoint. The
//! endpoint's output sharpens as temperature drops, so dispersed human
//! ratings favour the top of the grid.
//!
//! ```bash
//! cargo run -p cade --example grid_search
//! ```

use cade::dataset::{DimensionId, Rating, RatingMultiset};
use cade::persona::{build_prompt, StatementSet, Variant};
use cade::sampler::{
    grid_search_temperature, BoltzmannEndpoint, CollectOptions, GridItem, ReplyCache, SamplingSpec,
    DEFAULT_GRID,
};

fn main() -> cade::Result<()> {
    let statements = StatementSet::built_in();
    let items: Vec<GridItem> = (0..15)
        .map(|i| {
            let prompt = build_prompt(
                &format!("Synthetic situation number {i}."),
                statements.get(DimensionId::Suddenness),
                None,
                Variant::Vanilla,
            )?;
            let truth = RatingMultiset::new(
                format!("s{i:02}"),
                DimensionId::Suddenness,
                vec![
                    Rating::new(1)?,
                    Rating::new(2)?,
                    Rating::new(3)?,
                    Rating::new(4)?,
                    Rating::new(5)?,
                ],
            )?;
            Ok(GridItem { prompt, truth })
        })
        .collect::<cade::Result<_>>()?;

    let cache_dir = std::env::temp_dir().join("cade-grid-example-cache");
    let cache = ReplyCache::open(&cache_dir)?;
    let endpoint = BoltzmannEndpoint::peaked_at(3, 2024);

    let outcome = grid_search_temperature(
        &items,
        &SamplingSpec {
            model_name: "offline-stub".into(),
            n: 30,
        },
        &DEFAULT_GRID,
        &endpoint,
        &cache,
        &CollectOptions {
            workers: 4,
            ..Default::default()
        },
    )?;

    println!("{}", outcome.to_csv());
    println!("selected temperature: {}", outcome.selected_temperature);
    println!(
        "(cache at {}; rerunning replays without sampling)",
        cache_dir.display()
    );
    Ok(())
}
