//! Post-hoc calibration: Avg-Conf over (rating, confidence) pairs and
//! Pair-Rank over sampled rankings.
//!
//! ```bash
//! cargo run -p cade --example calibrate_samples
//! ```

use cade::calibration::{
    avg_conf, pair_rank_fit, parse_conf_reply, parse_ranking_reply, ConfSample, PairRankOptions,
};
use cade::dataset::Rating;

fn main() -> cade::Result<()> {
    // raw confidence replies as a model would produce them
    let replies = [
        "Rating: 4 Confidence: 0.8",
        "Rating: 4 Confidence: 0.6",
        "Rating: 3 Confidence: 0.5",
        "Rating: 5 Confidence: 0.3",
        "Rating: 4 Confidence: 0.7",
    ];
    let samples: Vec<ConfSample> = replies
        .iter()
        .map(|r| parse_conf_reply(r))
        .collect::<cade::Result<_>>()?;
    let calibrated = avg_conf(&samples)?;
    println!("avg-conf from {} replies: {calibrated}", replies.len());

    // a direct construction works too
    let direct = avg_conf(&[
        ConfSample::new(Rating::new(2)?, 0.5)?,
        ConfSample::new(Rating::new(4)?, 0.5)?,
    ])?;
    println!("avg-conf symmetric pair:  {direct}");

    // ranking replies favouring the middle of the scale
    let ranking_replies = [
        "Ranking: [3, 4, 2, 5, 1]",
        "Ranking: [3, 2, 4, 1, 5]",
        "Ranking: [4, 3, 2, 5, 1]",
        "Ranking: [3, 4, 2, 1, 5]",
        "Ranking: [3, 2, 4, 5, 1]",
        "Ranking: [2, 3, 4, 5, 1]",
        "Ranking: [3, 4, 5, 2, 1]",
        "Ranking: [3, 4, 2, 5, 1]",
        "Ranking: [4, 2, 3, 1, 5]",
        "Ranking: [3, 2, 1, 4, 5]",
    ];
    let rankings = ranking_replies
        .iter()
        .map(|r| parse_ranking_reply(r))
        .collect::<cade::Result<Vec<_>>>()?;
    let fit = pair_rank_fit(&rankings, &PairRankOptions::default())?;
    println!(
        "pair-rank from {} rankings: {} (log-likelihood {:.4}, converged: {}, {} steps)",
        rankings.len(),
        fit.distribution,
        fit.log_likelihood,
        fit.converged,
        fit.steps_taken
    );
    Ok(())
}
