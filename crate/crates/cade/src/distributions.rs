//! Discrete-distribution primitives over the 5-point rating scale:
//! empirical pmfs, moments, Wasserstein-1 distance, histogram modality,
//! and smoothed-label target construction.
//!
//! Everything here is pure and re-entrant.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{DimensionId, Rating, RatingMultiset};
use crate::error::{Error, Result};

/// Probability mass over the five rating points.
///
/// Entries are non-negative and sum to one (within 1e-9 at construction).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct RatingDistribution {
    pmf: [f64; 5],
}

const SUM_TOLERANCE: f64 = 1e-9;

impl RatingDistribution {
    pub fn from_pmf(pmf: [f64; 5]) -> Result<Self> {
        for (i, &p) in pmf.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidPmf(format!(
                    "entry {} for rating {} is invalid",
                    p,
                    i + 1
                )));
            }
        }
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidPmf(format!("mass sums to {sum}, not 1")));
        }
        Ok(RatingDistribution { pmf })
    }

    /// Empirical pmf of a set of counts.
    pub fn from_counts(counts: [u32; 5]) -> Result<Self> {
        let total: u32 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyMultiset);
        }
        let n = f64::from(total);
        let mut pmf = [0.0; 5];
        for (slot, &c) in pmf.iter_mut().zip(counts.iter()) {
            *slot = f64::from(c) / n;
        }
        Ok(RatingDistribution { pmf })
    }

    /// All mass on a single rating.
    pub fn point_mass(rating: Rating) -> Self {
        let mut pmf = [0.0; 5];
        pmf[rating.index()] = 1.0;
        RatingDistribution { pmf }
    }

    /// Equal mass on every rating.
    pub fn uniform() -> Self {
        RatingDistribution { pmf: [0.2; 5] }
    }

    pub fn pmf(&self) -> &[f64; 5] {
        &self.pmf
    }

    pub fn mass(&self, rating: Rating) -> f64 {
        self.pmf[rating.index()]
    }

    /// Mean and population variance of the pmf.
    pub fn moments(&self) -> (f64, f64) {
        let mut mean = 0.0;
        for (i, &p) in self.pmf.iter().enumerate() {
            mean += (i as f64 + 1.0) * p;
        }
        let mut variance = 0.0;
        for (i, &p) in self.pmf.iter().enumerate() {
            let d = (i as f64 + 1.0) - mean;
            variance += d * d * p;
        }
        (mean, variance)
    }

    pub fn mean(&self) -> f64 {
        self.moments().0
    }

    pub fn variance(&self) -> f64 {
        self.moments().1
    }

    /// Cumulative distribution at each rating point.
    pub fn cdf(&self) -> [f64; 5] {
        let mut out = [0.0; 5];
        let mut acc = 0.0;
        for (slot, &p) in out.iter_mut().zip(self.pmf.iter()) {
            acc += p;
            *slot = acc;
        }
        out
    }
}

impl From<RatingDistribution> for [f64; 5] {
    fn from(d: RatingDistribution) -> [f64; 5] {
        d.pmf
    }
}

impl TryFrom<[f64; 5]> for RatingDistribution {
    type Error = Error;
    fn try_from(pmf: [f64; 5]) -> Result<Self> {
        RatingDistribution::from_pmf(pmf)
    }
}

impl fmt::Display for RatingDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({:.3}, {:.3}, {:.3}, {:.3}, {:.3})",
            self.pmf[0], self.pmf[1], self.pmf[2], self.pmf[3], self.pmf[4]
        )
    }
}

/// Empirical distribution of a rating multiset.
pub fn empirical_distribution(m: &RatingMultiset) -> Result<RatingDistribution> {
    RatingDistribution::from_counts(m.counts())
}

/// Unbiased sample variance (denominator n - 1) of the ratings.
///
/// Needs at least two ratings; a single measurement carries no spread
/// information.
pub fn sample_variance(m: &RatingMultiset) -> Result<f64> {
    let n = m.len();
    if n < 2 {
        return Err(Error::InsufficientRepeats { needed: 2, got: n });
    }
    let mean = m.mean();
    let ss: f64 = m
        .ratings
        .iter()
        .map(|r| {
            let d = f64::from(r.value()) - mean;
            d * d
        })
        .sum();
    Ok(ss / (n as f64 - 1.0))
}

/// Wasserstein-1 distance between two pmfs on the shared 5-point support.
///
/// With unit spacing this is the sum of absolute cdf differences over the
/// four interior cut points, which equals the optimal-transport cost under
/// the |i - j| ground metric.
pub fn wasserstein1(p: &RatingDistribution, q: &RatingDistribution) -> f64 {
    let fp = p.cdf();
    let fq = q.cdf();
    let mut total = 0.0;
    for k in 0..4 {
        total += (fp[k] - fq[k]).abs();
    }
    total
}

/// Rating counts for one (situation, dimension).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: [u32; 5],
}

impl Histogram {
    pub fn new(counts: [u32; 5]) -> Result<Self> {
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::EmptyMultiset);
        }
        Ok(Histogram { counts })
    }

    pub fn from_multiset(m: &RatingMultiset) -> Self {
        Histogram { counts: m.counts() }
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }
}

/// Number of modes of a histogram, from 1 (unimodal) to 5 (uniform).
///
/// A plateau of equal positive counts bounded by strictly lower (or absent)
/// neighbours counts as one mode. The all-equal positive histogram is the
/// uniform case and reports 5.
pub fn modality(h: &Histogram) -> u8 {
    let counts = h.counts;
    let first = counts[0];
    if first > 0 && counts.iter().all(|&c| c == first) {
        return 5;
    }

    let mut modes = 0u8;
    let mut i = 0;
    while i < 5 {
        let run_value = counts[i];
        let mut j = i;
        while j + 1 < 5 && counts[j + 1] == run_value {
            j += 1;
        }
        if run_value > 0 {
            let left_lower = i == 0 || counts[i - 1] < run_value;
            let right_lower = j == 4 || counts[j + 1] < run_value;
            if left_lower && right_lower {
                modes += 1;
            }
        }
        i = j + 1;
    }
    modes
}

/// Per-dimension modality counts: `census[d][m - 1]` is the number of
/// multisets of dimension `d` with `m` modes.
pub fn modality_census(multisets: &[RatingMultiset]) -> BTreeMap<DimensionId, [u32; 5]> {
    let mut census: BTreeMap<DimensionId, [u32; 5]> = BTreeMap::new();
    for m in multisets {
        let h = Histogram::from_multiset(m);
        let modes = modality(&h);
        census.entry(m.dimension).or_insert([0; 5])[usize::from(modes - 1)] += 1;
    }
    census
}

/// Discretized Gaussian centered at `center`, renormalized over the scale.
///
/// As sigma tends to zero the result collapses to a point mass at the
/// center.
pub fn smooth_unimodal(center: Rating, sigma: f64) -> Result<RatingDistribution> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidSigma(sigma));
    }
    let c = f64::from(center.value());
    let inv = 1.0 / (2.0 * sigma * sigma);
    // exponents are <= 0 with the maximum exactly 0 at the center, so the
    // center keeps mass 1.0 before normalization and tiny sigmas underflow
    // cleanly to a one-hot vector
    let mut weights = [0.0; 5];
    for (i, w) in weights.iter_mut().enumerate() {
        let d = (i as f64 + 1.0) - c;
        *w = (-d * d * inv).exp();
    }
    let sum: f64 = weights.iter().sum();
    let mut pmf = [0.0; 5];
    for (slot, w) in pmf.iter_mut().zip(weights.iter()) {
        *slot = w / sum;
    }
    Ok(RatingDistribution { pmf })
}

/// Mixture of two discretized Gaussians with non-adjacent modes.
///
/// `w` is the weight on the `center` component and must lie strictly
/// inside (0, 1).
pub fn smooth_bimodal(
    center: Rating,
    second: Rating,
    sigma: f64,
    w: f64,
) -> Result<RatingDistribution> {
    let gap = i16::from(center.value()) - i16::from(second.value());
    if gap.abs() < 2 {
        return Err(Error::AdjacentModes {
            center: center.value(),
            second: second.value(),
        });
    }
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::InvalidWeight(w));
    }
    let a = smooth_unimodal(center, sigma)?;
    let b = smooth_unimodal(second, sigma)?;
    let mut pmf = [0.0; 5];
    for ((slot, pa), pb) in pmf.iter_mut().zip(a.pmf.iter()).zip(b.pmf.iter()) {
        *slot = w * pa + (1.0 - w) * pb;
    }
    Ok(RatingDistribution { pmf })
}

/// Valid non-adjacent second modes for a given ground-truth rating.
pub fn non_adjacent_ratings(center: Rating) -> Vec<Rating> {
    Rating::all()
        .filter(|r| (i16::from(r.value()) - i16::from(center.value())).abs() >= 2)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RatingMultiset;
    use proptest::prelude::*;

    fn r(v: u8) -> Rating {
        Rating::new(v).unwrap()
    }

    fn multiset(values: &[u8]) -> RatingMultiset {
        RatingMultiset::new(
            "s",
            DimensionId::Suddenness,
            values.iter().map(|&v| r(v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn empirical_counts_directly() {
        let d = empirical_distribution(&multiset(&[3, 3, 3, 3, 3])).unwrap();
        assert_eq!(d.pmf(), &[0.0, 0.0, 1.0, 0.0, 0.0]);

        let d = empirical_distribution(&multiset(&[1, 2, 3, 4, 5])).unwrap();
        assert_eq!(d.pmf(), &[0.2, 0.2, 0.2, 0.2, 0.2]);

        let d = empirical_distribution(&multiset(&[1, 1, 4, 5, 5])).unwrap();
        assert_eq!(d.pmf(), &[0.4, 0.0, 0.0, 0.2, 0.4]);
    }

    #[test]
    fn moments_match_direct_summation() {
        // direct-summation oracle over the pmf
        fn oracle(pmf: &[f64; 5]) -> (f64, f64) {
            let mean: f64 = pmf
                .iter()
                .enumerate()
                .map(|(i, p)| (i as f64 + 1.0) * p)
                .sum();
            let var: f64 = pmf
                .iter()
                .enumerate()
                .map(|(i, p)| (i as f64 + 1.0 - mean).powi(2) * p)
                .sum();
            (mean, var)
        }

        let point = RatingDistribution::point_mass(r(3));
        assert_eq!(point.moments(), (3.0, 0.0));

        let uniform = RatingDistribution::uniform();
        let (mean, var) = uniform.moments();
        assert!((mean - 3.0).abs() < 1e-12);
        assert!((var - 2.0).abs() < 1e-12, "uniform variance {var}");
        let (om, ov) = oracle(uniform.pmf());
        assert!((mean - om).abs() < 1e-15 && (var - ov).abs() < 1e-15);

        let split = RatingDistribution::from_pmf([0.5, 0.0, 0.0, 0.0, 0.5]).unwrap();
        assert_eq!(split.moments(), (3.0, 4.0));
    }

    #[test]
    fn sample_variance_uses_n_minus_one() {
        assert_eq!(sample_variance(&multiset(&[2, 2, 2, 2, 2])).unwrap(), 0.0);
        assert_eq!(sample_variance(&multiset(&[1, 5])).unwrap(), 8.0);
        assert_eq!(sample_variance(&multiset(&[1, 2, 3, 4, 5])).unwrap(), 2.5);
        assert!(matches!(
            sample_variance(&multiset(&[4])),
            Err(Error::InsufficientRepeats { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn wasserstein_basic_values() {
        let u = RatingDistribution::uniform();
        assert_eq!(wasserstein1(&u, &u), 0.0);

        let p1 = RatingDistribution::point_mass(r(1));
        let p5 = RatingDistribution::point_mass(r(5));
        assert!((wasserstein1(&p1, &p5) - 4.0).abs() < 1e-15);

        // frozen from the transport-program oracle in the acceptance suite
        let p3 = RatingDistribution::point_mass(r(3));
        assert!((wasserstein1(&u, &p3) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn modality_counts_local_maxima() {
        assert_eq!(modality(&Histogram::new([0, 0, 5, 0, 0]).unwrap()), 1);
        assert_eq!(modality(&Histogram::new([1, 1, 1, 1, 1]).unwrap()), 5);
        assert_eq!(modality(&Histogram::new([2, 0, 1, 0, 2]).unwrap()), 3);
        assert_eq!(modality(&Histogram::new([2, 2, 1, 0, 0]).unwrap()), 1);
        assert_eq!(modality(&Histogram::new([3, 0, 0, 0, 2]).unwrap()), 2);
    }

    #[test]
    fn modality_in_range_for_all_histograms_of_total_five() {
        // brute-force enumeration of the 126 count vectors with total 5
        let mut seen = 0;
        for a in 0..=5u32 {
            for b in 0..=5 - a {
                for c in 0..=5 - a - b {
                    for d in 0..=5 - a - b - c {
                        let e = 5 - a - b - c - d;
                        let h = Histogram::new([a, b, c, d, e]).unwrap();
                        let m = modality(&h);
                        assert!((1..=5).contains(&m), "{:?} -> {m}", h.counts);
                        seen += 1;
                    }
                }
            }
        }
        assert_eq!(seen, 126);
        for i in 0..5 {
            let mut counts = [0u32; 5];
            counts[i] = 5;
            assert_eq!(modality(&Histogram::new(counts).unwrap()), 1);
        }
    }

    #[test]
    fn smoothing_limits_and_frozen_values() {
        let tight = smooth_unimodal(r(3), 1e-6).unwrap();
        for (i, &p) in tight.pmf().iter().enumerate() {
            if i == 2 {
                assert!((p - 1.0).abs() < 1e-12);
            } else {
                assert!(p < 1e-12);
            }
        }

        // exp(-k^2/2) for k = -2..2, renormalized
        let d = smooth_unimodal(r(3), 1.0).unwrap();
        let e1 = (-0.5f64).exp();
        let e2 = (-2.0f64).exp();
        let z = 1.0 + 2.0 * e1 + 2.0 * e2;
        let expect = [e2 / z, e1 / z, 1.0 / z, e1 / z, e2 / z];
        for (got, want) in d.pmf().iter().zip(expect.iter()) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((d.pmf()[0] - 0.054).abs() < 5e-4);
        assert!((d.pmf()[1] - 0.244).abs() < 5e-4);
        assert!((d.pmf()[2] - 0.403).abs() < 5e-4);

        let edge = smooth_unimodal(r(1), 1.0).unwrap();
        assert!(edge.pmf().windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn bimodal_mixture_and_mode_gap() {
        let d = smooth_bimodal(r(2), r(4), 1e-6, 0.5).unwrap();
        assert!((d.pmf()[1] - 0.5).abs() < 1e-12);
        assert!((d.pmf()[3] - 0.5).abs() < 1e-12);

        assert!(matches!(
            smooth_bimodal(r(2), r(3), 1.0, 0.5),
            Err(Error::AdjacentModes {
                center: 2,
                second: 3
            })
        ));
        assert!(matches!(
            smooth_bimodal(r(2), r(2), 1.0, 0.5),
            Err(Error::AdjacentModes { .. })
        ));
        assert!(smooth_bimodal(r(3), r(5), 0.5, 0.0).is_err());
        assert!(smooth_bimodal(r(3), r(5), 0.5, 1.0).is_err());

        // componentwise mixture
        let a = smooth_unimodal(r(3), 0.5).unwrap();
        let b = smooth_unimodal(r(5), 0.5).unwrap();
        let mix = smooth_bimodal(r(3), r(5), 0.5, 0.7).unwrap();
        for i in 0..5 {
            let want = 0.7 * a.pmf()[i] + 0.3 * b.pmf()[i];
            assert!((mix.pmf()[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn non_adjacent_choices_match_gap_rule() {
        let choices: Vec<u8> = non_adjacent_ratings(r(2))
            .iter()
            .map(|x| x.value())
            .collect();
        assert_eq!(choices, vec![4, 5]);
        let choices: Vec<u8> = non_adjacent_ratings(r(3))
            .iter()
            .map(|x| x.value())
            .collect();
        assert_eq!(choices, vec![1, 5]);
    }

    fn arb_pmf() -> impl Strategy<Value = RatingDistribution> {
        proptest::collection::vec(0.0f64..1.0, 5).prop_map(|raw| {
            let sum: f64 = raw.iter().sum();
            let mut pmf = [0.2; 5];
            if sum > 0.0 {
                for (slot, v) in pmf.iter_mut().zip(raw.iter()) {
                    *slot = v / sum;
                }
            }
            RatingDistribution::from_pmf(pmf).unwrap()
        })
    }

    proptest! {
        #[test]
        fn wasserstein_is_a_metric(p in arb_pmf(), q in arb_pmf(), s in arb_pmf()) {
            let dpq = wasserstein1(&p, &q);
            let dqp = wasserstein1(&q, &p);
            prop_assert!(dpq >= 0.0);
            prop_assert!((dpq - dqp).abs() < 1e-12);
            prop_assert!(wasserstein1(&p, &p) == 0.0);
            let dps = wasserstein1(&p, &s);
            let dsq = wasserstein1(&s, &q);
            prop_assert!(dpq <= dps + dsq + 1e-12);
        }

        #[test]
        fn smoothing_always_yields_valid_pmfs(center in 1u8..=5, sigma in 1e-3f64..3.0) {
            let d = smooth_unimodal(r(center), sigma).unwrap();
            let sum: f64 = d.pmf().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(d.pmf().iter().all(|&p| p >= 0.0));
            if center == 3 {
                prop_assert!((d.pmf()[0] - d.pmf()[4]).abs() < 1e-15);
                prop_assert!((d.pmf()[1] - d.pmf()[3]).abs() < 1e-15);
            }
        }

        #[test]
        fn empirical_mean_matches_multiset_mean(values in proptest::collection::vec(1u8..=5, 1..40)) {
            let m = multiset(&values);
            let d = empirical_distribution(&m).unwrap();
            prop_assert!((d.mean() - m.mean()).abs() <= 1e-14);
        }
    }
}
