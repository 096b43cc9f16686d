//! Second-order analyses: subjectivity rankings per dimension, per-group
//! variance tables, one-tailed significance tests for profile ablations,
//! and metric correlations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{AppraisalRecord, DimensionId};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::persona::reduce_tipi;

mod special {
    //! Log-gamma and the regularized incomplete beta function, enough for
    //! the Student-t CDF.

    /// Lanczos approximation, g = 7, 9 coefficients.
    pub fn ln_gamma(x: f64) -> f64 {
        const COEFFS: [f64; 9] = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        if x < 0.5 {
            // reflection
            let pi = std::f64::consts::PI;
            return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
        }
        let x = x - 1.0;
        let mut acc = COEFFS[0];
        for (i, &c) in COEFFS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }

    /// Continued fraction for the incomplete beta (Lentz's algorithm).
    fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
        const MAX_ITER: usize = 300;
        const EPS: f64 = 3e-16;
        const TINY: f64 = 1e-300;

        let qab = a + b;
        let qap = a + 1.0;
        let qam = a - 1.0;
        let mut c = 1.0;
        let mut d = 1.0 - qab * x / qap;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        let mut h = d;
        for m in 1..=MAX_ITER {
            let m_f = m as f64;
            let m2 = 2.0 * m_f;

            let aa = m_f * (b - m_f) * x / ((qam + m2) * (a + m2));
            d = 1.0 + aa * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + aa / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            h *= d * c;

            let aa = -(a + m_f) * (qab + m_f) * x / ((a + m2) * (qap + m2));
            d = 1.0 + aa * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + aa / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        h
    }

    /// Regularized incomplete beta I_x(a, b).
    pub fn incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let front =
            (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
        if x < (a + 1.0) / (a + b + 2.0) {
            front * beta_cf(x, a, b) / a
        } else {
            1.0 - front * beta_cf(1.0 - x, b, a) / b
        }
    }

    /// CDF of Student's t with `df` degrees of freedom.
    pub fn student_t_cdf(t: f64, df: f64) -> f64 {
        let x = df / (df + t * t);
        let tail = 0.5 * incomplete_beta(x, 0.5 * df, 0.5);
        if t >= 0.0 {
            1.0 - tail
        } else {
            tail
        }
    }
}

pub use special::{incomplete_beta, ln_gamma, student_t_cdf};

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// One-tailed Welch two-sample t-test.
///
/// Tests the alternative "mean(b) < mean(a)" with the Welch-Satterthwaite
/// degrees of freedom; identical samples give p = 0.5. With `a` the scores
/// without a profile and `b` the scores with one, a small p-value means the
/// profile helped.
pub fn welch_one_tailed(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientRepeats {
            needed: 2,
            got: a.len().min(b.len()),
        });
    }
    let (mean_a, var_a) = mean_and_var(a);
    let (mean_b, var_b) = mean_and_var(b);
    let se_a = var_a / a.len() as f64;
    let se_b = var_b / b.len() as f64;
    let se = se_a + se_b;
    if se <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let t = (mean_a - mean_b) / se.sqrt();
    let df =
        se * se / (se_a * se_a / (a.len() as f64 - 1.0) + se_b * se_b / (b.len() as f64 - 1.0));
    Ok(1.0 - student_t_cdf(t, df))
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientRepeats {
            needed: 2,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (xi, yi) in x.iter().zip(y.iter()) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((cov / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0))
}

/// Best- and worst-modeled dimensions by Wasserstein distance.
///
/// Both lists are ordered by rank: `top` ascending from the lowest
/// distance, `bottom` descending from the highest. Ties break
/// alphabetically.
pub fn rank_dimensions(
    report: &EvalReport,
    k: usize,
) -> Result<(Vec<DimensionId>, Vec<DimensionId>)> {
    let have = report.per_dimension.len();
    if k > have {
        return Err(Error::KExceedsDimensions { k, have });
    }
    let mut scored: Vec<(DimensionId, f64)> = report
        .per_dimension
        .iter()
        .map(|(&dim, t)| (dim, t.wasserstein))
        .collect();

    let mut ascending = scored.clone();
    ascending.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap()
            .then(a.0.name().cmp(b.0.name()))
    });
    let top: Vec<DimensionId> = ascending.iter().take(k).map(|(d, _)| *d).collect();

    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then(a.0.name().cmp(b.0.name()))
    });
    let bottom: Vec<DimensionId> = scored.iter().take(k).map(|(d, _)| *d).collect();

    Ok((top, bottom))
}

/// How annotators are grouped for the variance table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupBy {
    Gender,
    Ethnicity,
    Education,
    /// One group per reduced trait descriptor; an annotator lands in every
    /// group their profile supports.
    Trait,
}

impl GroupBy {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gender" => Ok(GroupBy::Gender),
            "ethnicity" | "origin" => Ok(GroupBy::Ethnicity),
            "education" => Ok(GroupBy::Education),
            "trait" | "traits" => Ok(GroupBy::Trait),
            other => Err(Error::UnknownGroupField(other.to_string())),
        }
    }
}

/// Mean within-group rating variance per (group, dimension).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupVarianceTable {
    pub cells: BTreeMap<String, BTreeMap<DimensionId, f64>>,
    /// (group, dimension, situation) triples skipped for having fewer than
    /// two ratings.
    pub skipped: usize,
}

impl GroupVarianceTable {
    pub fn groups(&self) -> Vec<&str> {
        self.cells.keys().map(String::as_str).collect()
    }

    pub fn get(&self, group: &str, dimension: DimensionId) -> Option<f64> {
        self.cells
            .get(group)
            .and_then(|row| row.get(&dimension))
            .copied()
    }

    /// Long-format CSV: group, dimension, variance. One row per cell,
    /// ready for heatmap plotting.
    pub fn to_long_csv(&self) -> String {
        let mut out = String::from("group,dimension,variance\n");
        for (group, row) in &self.cells {
            for (dim, var) in row {
                out.push_str(&format!("{group},{},{var:.6}\n", dim.abbrev()));
            }
        }
        out
    }
}

/// Compute per-group appraisal variance across situations.
///
/// `cell(g, d)` is the mean over situations of the sample variance of
/// ratings given by group-`g` annotators on dimension `d`. Situations with
/// fewer than two group ratings are skipped and counted.
pub fn group_variance(
    records: &[AppraisalRecord],
    group_by: &GroupBy,
) -> Result<GroupVarianceTable> {
    // (group, dimension, situation) -> ratings
    let mut buckets: BTreeMap<(String, DimensionId, &str), Vec<f64>> = BTreeMap::new();
    for record in records {
        for ann in &record.annotations {
            let Some(profile) = record.profiles.get(&ann.annotator_id) else {
                continue;
            };
            let groups: Vec<String> = match group_by {
                GroupBy::Gender => profile.gender.iter().cloned().collect(),
                GroupBy::Ethnicity => profile.ethnicity.iter().cloned().collect(),
                GroupBy::Education => profile.education.iter().cloned().collect(),
                GroupBy::Trait => reduce_tipi(&profile.tipi)
                    .into_iter()
                    .map(str::to_string)
                    .collect(),
            };
            for group in groups {
                buckets
                    .entry((group, ann.dimension, record.situation_id.as_str()))
                    .or_default()
                    .push(f64::from(ann.rating.value()));
            }
        }
    }

    let mut sums: BTreeMap<(String, DimensionId), (f64, usize)> = BTreeMap::new();
    let mut skipped = 0;
    for ((group, dim, _), ratings) in buckets {
        if ratings.len() < 2 {
            skipped += 1;
            continue;
        }
        let (_, var) = mean_and_var(&ratings);
        let entry = sums.entry((group, dim)).or_insert((0.0, 0));
        entry.0 += var;
        entry.1 += 1;
    }

    let mut cells: BTreeMap<String, BTreeMap<DimensionId, f64>> = BTreeMap::new();
    for ((group, dim), (total, count)) in sums {
        cells
            .entry(group)
            .or_default()
            .insert(dim, total / count as f64);
    }
    Ok(GroupVarianceTable { cells, skipped })
}

/// One-tailed p-values per dimension and ablation condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignificanceTable {
    /// dimension -> condition -> p-value.
    pub rows: BTreeMap<DimensionId, BTreeMap<String, f64>>,
}

impl SignificanceTable {
    /// Compare per-dimension score samples of a baseline run against one or
    /// more ablation conditions. `a` is the baseline (e.g. without
    /// profile), each condition's samples are `b`; small p means the
    /// condition improved on the baseline.
    pub fn build(
        baseline: &BTreeMap<DimensionId, Vec<f64>>,
        conditions: &BTreeMap<String, BTreeMap<DimensionId, Vec<f64>>>,
    ) -> Result<Self> {
        let mut rows: BTreeMap<DimensionId, BTreeMap<String, f64>> = BTreeMap::new();
        for (condition, per_dim) in conditions {
            for (dim, b) in per_dim {
                let Some(a) = baseline.get(dim) else {
                    continue;
                };
                let p = welch_one_tailed(a, b)?;
                rows.entry(*dim).or_default().insert(condition.clone(), p);
            }
        }
        Ok(SignificanceTable { rows })
    }

    /// CSV with p-values to three decimals, matching the report layout.
    pub fn to_csv(&self) -> String {
        let mut conditions: Vec<&String> = self
            .rows
            .values()
            .flat_map(|row| row.keys())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        conditions.sort();
        let mut out = String::from("dimension");
        for c in &conditions {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (dim, row) in &self.rows {
            out.push_str(dim.name());
            for c in &conditions {
                out.push(',');
                if let Some(p) = row.get(*c) {
                    out.push_str(&format!("{p:.3}"));
                }
            }
            out.push('\n');
        }
        out
    }
}
