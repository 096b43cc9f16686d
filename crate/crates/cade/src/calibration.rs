//! Post-hoc calibration of sampled outputs into rating distributions.
//!
//! Two calibrators: Avg-Conf normalizes verbalized confidence scores across
//! the ratings each was attached to; Pair-Rank fits a categorical
//! distribution to sampled rating rankings by maximizing the ranking
//! log-likelihood with gradient ascent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Rating;
use crate::distributions::RatingDistribution;
use crate::error::{Error, Result};
use crate::sampler::parse_rating;

/// One sampled (rating, confidence) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfSample {
    pub rating: Rating,
    pub confidence: f64,
}

impl ConfSample {
    pub fn new(rating: Rating, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) || !confidence.is_finite() {
            return Err(Error::Config(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(ConfSample { rating, confidence })
    }
}

/// Parse a reply of the form `Rating: 4 ... Confidence: 0.8`.
pub fn parse_conf_reply(reply: &str) -> Result<ConfSample> {
    let rating = parse_rating(reply)?;
    let lower = reply.to_lowercase();
    let pos = lower
        .find("confidence:")
        .ok_or_else(|| Error::UnparseableReply(reply.to_string()))?;
    let tail = &reply[pos + "confidence:".len()..];
    let token: String = tail
        .chars()
        .skip_while(|c| !c.is_ascii_digit() && *c != '.')
        .take_while(|c| c.is_ascii_digit() || *c == '.')
        .collect();
    let confidence: f64 = token
        .parse()
        .map_err(|_| Error::UnparseableReply(reply.to_string()))?;
    ConfSample::new(rating, confidence)
}

/// Normalize confidence scores across all ratings.
///
/// `pmf[r]` is the share of total confidence attached to rating `r`. The
/// result is invariant to positive rescaling of all confidences.
pub fn avg_conf(samples: &[ConfSample]) -> Result<RatingDistribution> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut mass = [0.0f64; 5];
    for s in samples {
        mass[s.rating.index()] += s.confidence;
    }
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZeroConfidence);
    }
    let mut pmf = [0.0; 5];
    for (slot, m) in pmf.iter_mut().zip(mass.iter()) {
        *slot = m / total;
    }
    RatingDistribution::from_pmf(pmf)
}

/// Extend a rating prompt to also elicit a verbalized confidence.
pub fn confidence_elicitation(base: &crate::persona::PromptBundle) -> crate::persona::PromptBundle {
    use crate::persona::RATING_FORMAT_INSTRUCTION;
    let extended = "Provide your rating in the following format: \"Rating: [Score]\" and your \
confidence between 0 and 1 in the format 'Confidence: [value]'.";
    let mut out = base.clone();
    out.user = out.user.replace(RATING_FORMAT_INSTRUCTION, extended);
    out
}

/// Replace the rating instruction with a full-ranking instruction.
pub fn ranking_elicitation(base: &crate::persona::PromptBundle) -> crate::persona::PromptBundle {
    use crate::persona::RATING_FORMAT_INSTRUCTION;
    let ranking = "Provide your ranking of all five ratings from the most to the least \
appropriate in the following format: \"Ranking: [Score, Score, Score, Score, Score]\".";
    let mut out = base.clone();
    out.user = out.user.replace(RATING_FORMAT_INSTRUCTION, ranking);
    out
}

/// Parse a reply of the form `Ranking: [3, 4, 2, 5, 1]`.
pub fn parse_ranking_reply(reply: &str) -> Result<RankingSample> {
    let lower = reply.to_lowercase();
    let pos = lower
        .find("ranking:")
        .ok_or_else(|| Error::UnparseableReply(reply.to_string()))?;
    let tail = &reply[pos + "ranking:".len()..];
    let mut order = Vec::with_capacity(5);
    let mut chars = tail.chars().peekable();
    while order.len() < 5 {
        match chars.next() {
            Some(c) if c.is_ascii_digit() => {
                // single digits only on this scale
                if chars.peek().is_some_and(|n| n.is_ascii_digit()) {
                    return Err(Error::UnparseableReply(reply.to_string()));
                }
                order.push(c as u8 - b'0');
            }
            Some(_) => continue,
            None => return Err(Error::UnparseableReply(reply.to_string())),
        }
    }
    RankingSample::new(order)
}

/// One sampled ranking: all five ratings, most preferred first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct RankingSample {
    order: [u8; 5],
}

impl RankingSample {
    pub fn new(order: Vec<u8>) -> Result<Self> {
        let mut seen = [false; 5];
        if order.len() != 5 {
            return Err(Error::NotAPermutation(order));
        }
        for &v in &order {
            if !(1..=5).contains(&v) || seen[usize::from(v - 1)] {
                return Err(Error::NotAPermutation(order));
            }
            seen[usize::from(v - 1)] = true;
        }
        let mut fixed = [0u8; 5];
        fixed.copy_from_slice(&order);
        Ok(RankingSample { order: fixed })
    }

    pub fn order(&self) -> [u8; 5] {
        self.order
    }
}

impl TryFrom<Vec<u8>> for RankingSample {
    type Error = Error;
    fn try_from(order: Vec<u8>) -> Result<Self> {
        RankingSample::new(order)
    }
}

impl From<RankingSample> for Vec<u8> {
    fn from(r: RankingSample) -> Vec<u8> {
        r.order.to_vec()
    }
}

/// Unconstrained logits over the five ratings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoricalParams {
    pub logits: [f64; 5],
}

impl CategoricalParams {
    pub fn uniform() -> Self {
        CategoricalParams { logits: [0.0; 5] }
    }

    /// Softmax of the logits.
    pub fn pmf(&self) -> RatingDistribution {
        let max = self
            .logits
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut weights = [0.0; 5];
        for (w, l) in weights.iter_mut().zip(self.logits.iter()) {
            *w = (l - max).exp();
        }
        let total: f64 = weights.iter().sum();
        let mut pmf = [0.0; 5];
        for (slot, w) in pmf.iter_mut().zip(weights.iter()) {
            *slot = w / total;
        }
        RatingDistribution::from_pmf(pmf).expect("softmax yields a valid pmf")
    }
}

#[derive(Debug, Clone)]
pub struct PairRankOptions {
    pub steps: usize,
    pub learning_rate: f64,
    /// Objective-delta threshold below which the fit counts as converged.
    pub tolerance: f64,
}

impl Default for PairRankOptions {
    fn default() -> Self {
        PairRankOptions {
            steps: 500,
            learning_rate: 0.05,
            tolerance: 1e-8,
        }
    }
}

/// Outcome of a Pair-Rank fit.
#[derive(Debug, Clone)]
pub struct PairRankFit {
    pub distribution: RatingDistribution,
    pub params: CategoricalParams,
    pub log_likelihood: f64,
    /// False when the objective still improved by more than the tolerance
    /// on the final step.
    pub converged: bool,
    pub steps_taken: usize,
}

fn ranking_log_likelihood(counts: &BTreeMap<[u8; 5], usize>, logits: &[f64; 5]) -> f64 {
    let mut total = 0.0;
    for (order, &count) in counts {
        let mut ll = 0.0;
        for j in 0..4 {
            let suffix: Vec<f64> = order[j..]
                .iter()
                .map(|&r| logits[usize::from(r - 1)])
                .collect();
            let max = suffix.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + suffix.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            ll += logits[usize::from(order[j] - 1)] - lse;
        }
        total += count as f64 * ll;
    }
    total
}

fn ranking_gradient(counts: &BTreeMap<[u8; 5], usize>, logits: &[f64; 5]) -> [f64; 5] {
    let mut grad = [0.0f64; 5];
    for (order, &count) in counts {
        let c = count as f64;
        for j in 0..4 {
            let suffix = &order[j..];
            let max = suffix
                .iter()
                .map(|&r| logits[usize::from(r - 1)])
                .fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = suffix
                .iter()
                .map(|&r| (logits[usize::from(r - 1)] - max).exp())
                .collect();
            let total: f64 = weights.iter().sum();
            grad[usize::from(order[j] - 1)] += c;
            for (&r, w) in suffix.iter().zip(weights.iter()) {
                grad[usize::from(r - 1)] -= c * w / total;
            }
        }
    }
    grad
}

/// Fit a categorical distribution to sampled rankings.
///
/// Maximizes the sequential ranking log-likelihood (each position chosen
/// from the remaining ratings in proportion to its exponentiated logit) by
/// full-batch gradient ascent from a uniform initialization.
pub fn pair_rank_fit(rankings: &[RankingSample], opts: &PairRankOptions) -> Result<PairRankFit> {
    if rankings.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut counts: BTreeMap<[u8; 5], usize> = BTreeMap::new();
    for r in rankings {
        *counts.entry(r.order()).or_insert(0) += 1;
    }
    let n = rankings.len() as f64;

    let mut logits = [0.0f64; 5];
    let mut objective = ranking_log_likelihood(&counts, &logits) / n;
    let mut last_delta = f64::INFINITY;
    let mut steps_taken = 0;
    for _ in 0..opts.steps {
        let grad = ranking_gradient(&counts, &logits);
        for (l, g) in logits.iter_mut().zip(grad.iter()) {
            *l += opts.learning_rate * g / n;
        }
        // recenter; the objective is shift-invariant
        let mean: f64 = logits.iter().sum::<f64>() / 5.0;
        for l in &mut logits {
            *l -= mean;
        }
        let next = ranking_log_likelihood(&counts, &logits) / n;
        last_delta = next - objective;
        objective = next;
        steps_taken += 1;
        if last_delta.abs() <= opts.tolerance {
            break;
        }
    }

    let params = CategoricalParams { logits };
    Ok(PairRankFit {
        distribution: params.pmf(),
        params,
        log_likelihood: objective,
        converged: last_delta.abs() <= opts.tolerance,
        steps_taken,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn r(v: u8) -> Rating {
        Rating::new(v).unwrap()
    }

    #[test]
    fn avg_conf_normalizes_confidence_mass() {
        let d = avg_conf(&[ConfSample::new(r(3), 0.9).unwrap()]).unwrap();
        assert_eq!(d.pmf(), &[0.0, 0.0, 1.0, 0.0, 0.0]);

        let d = avg_conf(&[
            ConfSample::new(r(2), 0.5).unwrap(),
            ConfSample::new(r(4), 0.5).unwrap(),
        ])
        .unwrap();
        assert_eq!(d.pmf(), &[0.0, 0.5, 0.0, 0.5, 0.0]);

        let d = avg_conf(&[
            ConfSample::new(r(1), 0.2).unwrap(),
            ConfSample::new(r(1), 0.2).unwrap(),
            ConfSample::new(r(5), 0.6).unwrap(),
        ])
        .unwrap();
        assert!((d.pmf()[0] - 0.4).abs() < 1e-15);
        assert!((d.pmf()[4] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn avg_conf_rejects_degenerate_inputs() {
        assert!(matches!(avg_conf(&[]), Err(Error::EmptySamples)));
        let zeros = vec![ConfSample::new(r(2), 0.0).unwrap(); 3];
        assert!(matches!(avg_conf(&zeros), Err(Error::AllZeroConfidence)));
    }

    #[test]
    fn conf_reply_parsing() {
        let s = parse_conf_reply("Rating: 4 Confidence: 0.8").unwrap();
        assert_eq!(s.rating.value(), 4);
        assert!((s.confidence - 0.8).abs() < 1e-15);
        let s = parse_conf_reply("rating: [2], confidence: [0.35]").unwrap();
        assert_eq!(s.rating.value(), 2);
        assert!((s.confidence - 0.35).abs() < 1e-15);
        assert!(parse_conf_reply("Rating: 4").is_err());
        assert!(parse_conf_reply("Rating: 4 Confidence: 1.7").is_err());
    }

    #[test]
    fn elicitation_prompts_rewrite_the_format_instruction() {
        let base = crate::persona::build_prompt("E.", "S.", None, crate::persona::Variant::Vanilla)
            .unwrap();
        let conf = confidence_elicitation(&base);
        assert!(conf.user.contains("'Confidence: [value]'"));
        assert!(conf.user.contains("\"Rating: [Score]\""));
        let rank = ranking_elicitation(&base);
        assert!(rank
            .user
            .contains("\"Ranking: [Score, Score, Score, Score, Score]\""));
        assert!(!rank.user.contains("Provide your rating"));
        assert_eq!(conf.system, base.system);
    }

    #[test]
    fn ranking_reply_parsing() {
        let r = parse_ranking_reply("Ranking: [3, 4, 2, 5, 1]").unwrap();
        assert_eq!(r.order(), [3, 4, 2, 5, 1]);
        let r = parse_ranking_reply("ranking: 5 4 3 2 1 done").unwrap();
        assert_eq!(r.order(), [5, 4, 3, 2, 1]);
        assert!(parse_ranking_reply("Ranking: [3, 4, 2]").is_err());
        assert!(parse_ranking_reply("Ranking: [3, 3, 2, 5, 1]").is_err());
        assert!(parse_ranking_reply("no marker 1 2 3 4 5").is_err());
        assert!(parse_ranking_reply("Ranking: [13, 4, 2, 5, 1]").is_err());
    }

    #[test]
    fn ranking_sample_must_be_a_permutation() {
        assert!(RankingSample::new(vec![3, 4, 2, 5, 1]).is_ok());
        assert!(RankingSample::new(vec![3, 4, 2, 5]).is_err());
        assert!(RankingSample::new(vec![3, 3, 2, 5, 1]).is_err());
        assert!(RankingSample::new(vec![3, 4, 2, 6, 1]).is_err());
    }

    #[test]
    fn unanimous_rankings_recover_the_stated_ordering() {
        let rankings = vec![RankingSample::new(vec![3, 4, 2, 5, 1]).unwrap(); 50];
        let fit = pair_rank_fit(&rankings, &PairRankOptions::default()).unwrap();
        let pmf = fit.distribution.pmf();
        assert!(pmf[2] > pmf[3]);
        assert!(pmf[3] > pmf[1]);
        assert!(pmf[1] > pmf[4]);
        assert!(pmf[4] > pmf[0]);
    }

    #[test]
    fn opposite_rankings_recover_symmetry() {
        let mut rankings = Vec::new();
        for _ in 0..50 {
            rankings.push(RankingSample::new(vec![1, 2, 3, 4, 5]).unwrap());
            rankings.push(RankingSample::new(vec![5, 4, 3, 2, 1]).unwrap());
        }
        let fit = pair_rank_fit(&rankings, &PairRankOptions::default()).unwrap();
        let pmf = fit.distribution.pmf();
        assert!((pmf[0] - pmf[4]).abs() < 1e-3);
        assert!((pmf[1] - pmf[3]).abs() < 1e-3);
    }

    /// Sequential sampling without replacement, proportional to pmf mass.
    fn sample_ranking(pmf: &[f64; 5], rng: &mut ChaCha12Rng) -> RankingSample {
        let mut remaining: Vec<u8> = vec![1, 2, 3, 4, 5];
        let mut order = Vec::with_capacity(5);
        while !remaining.is_empty() {
            let total: f64 = remaining.iter().map(|&r| pmf[usize::from(r - 1)]).sum();
            let mut draw = rng.random_range(0.0..total);
            let mut chosen = remaining.len() - 1;
            for (i, &r) in remaining.iter().enumerate() {
                let w = pmf[usize::from(r - 1)];
                if draw < w {
                    chosen = i;
                    break;
                }
                draw -= w;
            }
            order.push(remaining.remove(chosen));
        }
        RankingSample::new(order).unwrap()
    }

    #[test]
    fn recovers_generating_distribution_within_tv_tolerance() {
        let target = [0.4, 0.3, 0.15, 0.1, 0.05];
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let rankings: Vec<RankingSample> = (0..10_000)
            .map(|_| sample_ranking(&target, &mut rng))
            .collect();
        let fit = pair_rank_fit(&rankings, &PairRankOptions::default()).unwrap();
        let tv: f64 = fit
            .distribution
            .pmf()
            .iter()
            .zip(target.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.05, "total variation {tv}");
    }

    #[test]
    fn objective_is_non_decreasing_across_steps() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let target = [0.3, 0.25, 0.2, 0.15, 0.1];
        let rankings: Vec<RankingSample> = (0..200)
            .map(|_| sample_ranking(&target, &mut rng))
            .collect();

        let mut counts: BTreeMap<[u8; 5], usize> = BTreeMap::new();
        for r in &rankings {
            *counts.entry(r.order()).or_insert(0) += 1;
        }
        let n = rankings.len() as f64;
        let mut logits = [0.0f64; 5];
        let mut prev = ranking_log_likelihood(&counts, &logits) / n;
        for _ in 0..200 {
            let grad = ranking_gradient(&counts, &logits);
            for (l, g) in logits.iter_mut().zip(grad.iter()) {
                *l += 0.05 * g / n;
            }
            let next = ranking_log_likelihood(&counts, &logits) / n;
            assert!(
                next >= prev - 1e-12,
                "objective regressed: {prev} -> {next}"
            );
            prev = next;
        }
    }

    #[test]
    fn shift_invariance_of_the_fitted_pmf() {
        let params = CategoricalParams {
            logits: [0.3, -0.2, 0.9, 0.0, -1.0],
        };
        let shifted = CategoricalParams {
            logits: params.logits.map(|l| l + 7.5),
        };
        for (a, b) in params.pmf().pmf().iter().zip(shifted.pmf().pmf().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn avg_conf_invariant_to_positive_rescaling(
            ratings in proptest::collection::vec(1u8..=5, 1..20),
            confs in proptest::collection::vec(0.01f64..1.0, 20),
            scale in 0.1f64..0.9,
        ) {
            let samples: Vec<ConfSample> = ratings
                .iter()
                .zip(confs.iter())
                .map(|(&rv, &c)| ConfSample::new(r(rv), c).unwrap())
                .collect();
            let scaled: Vec<ConfSample> = samples
                .iter()
                .map(|s| ConfSample::new(s.rating, s.confidence * scale).unwrap())
                .collect();
            let a = avg_conf(&samples).unwrap();
            let b = avg_conf(&scaled).unwrap();
            for (x, y) in a.pmf().iter().zip(b.pmf().iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn calibrators_always_emit_valid_pmfs(orders in proptest::collection::vec(0usize..120, 1..40)) {
            // map indices into permutations via factorial decomposition
            let rankings: Vec<RankingSample> = orders
                .iter()
                .map(|&code| {
                    let mut pool: Vec<u8> = vec![1, 2, 3, 4, 5];
                    let mut order = Vec::new();
                    let mut c = code;
                    for radix in [24usize, 6, 2, 1] {
                        let idx = c / radix;
                        c %= radix;
                        order.push(pool.remove(idx % pool.len()));
                    }
                    order.push(pool[0]);
                    RankingSample::new(order).unwrap()
                })
                .collect();
            let fit = pair_rank_fit(&rankings, &PairRankOptions { steps: 50, ..Default::default() }).unwrap();
            let sum: f64 = fit.distribution.pmf().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(fit.distribution.pmf().iter().all(|&p| p >= 0.0));
        }
    }
}
