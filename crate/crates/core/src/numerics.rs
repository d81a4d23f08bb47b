//! Entropy, rank-based (quantile) normalization and exponential-kernel
//! density estimation.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sparse::SparseVector;

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("negative probability {0}")]
    NegativeProbability(f64),
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("quantile normalization needs at least two vectors, got {0}")]
    TooFewVectors(usize),
    #[error("score vectors cover different id sets")]
    MismatchedIds,
    #[error("score for {0} is NaN or +inf")]
    InvalidScore(String),
    #[error("bandwidth must be positive, got {0}")]
    Bandwidth(f64),
    #[error("kernel density estimate over empty data")]
    EmptyData,
}

/// A discrete probability distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probabilities: Vec<f64>,
}

impl Distribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self, NumericsError> {
        if probabilities.is_empty() {
            return Err(NumericsError::EmptyDistribution);
        }
        if let Some(&p) = probabilities.iter().find(|&&p| p < 0.0 || p.is_nan()) {
            return Err(NumericsError::NegativeProbability(p));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(NumericsError::NotNormalized(sum));
        }
        Ok(Distribution { probabilities })
    }

    /// Normalizes non-negative counts into a distribution.
    pub fn from_counts(counts: &[f64]) -> Result<Self, NumericsError> {
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return Err(NumericsError::EmptyDistribution);
        }
        Self::new(counts.iter().map(|c| c / total).collect())
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probabilities
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(probabilities: &[f64]) -> Result<f64, NumericsError> {
    Ok(Distribution::new(probabilities.to_vec())?.entropy())
}

/// Per-example scores. `-inf` marks an example excluded from selection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreVector {
    scores: BTreeMap<String, f64>,
}

impl ScoreVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, score: f64) {
        self.scores.insert(id.into(), score);
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.scores.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Entries in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.scores.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.scores.keys().map(String::as_str)
    }

    pub fn same_ids(&self, other: &ScoreVector) -> bool {
        self.scores.len() == other.scores.len() && self.scores.keys().eq(other.scores.keys())
    }

    pub fn finite_count(&self) -> usize {
        self.scores.values().filter(|v| v.is_finite()).count()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScoreVector {
        ScoreVector {
            scores: self.scores.iter().map(|(k, &v)| (k.clone(), f(v))).collect(),
        }
    }
}

impl<K: Into<String>> FromIterator<(K, f64)> for ScoreVector {
    fn from_iter<T: IntoIterator<Item = (K, f64)>>(iter: T) -> Self {
        ScoreVector {
            scores: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

/// Quantile-normalizes score vectors over a shared id set.
///
/// The reference distribution is the element-wise mean of the sorted
/// vectors; each value is replaced by the reference value at its rank, and
/// tied values share the mean of the reference values over their ranks.
/// Ids holding `-inf` in any vector take no part in the ranking; their
/// entries are returned unchanged.
pub fn quantile_normalize(vectors: &[ScoreVector]) -> Result<Vec<ScoreVector>, NumericsError> {
    if vectors.len() < 2 {
        return Err(NumericsError::TooFewVectors(vectors.len()));
    }
    let first = &vectors[0];
    if vectors.iter().any(|v| !v.same_ids(first)) {
        return Err(NumericsError::MismatchedIds);
    }
    for v in vectors {
        if let Some((id, _)) = v.iter().find(|(_, s)| s.is_nan() || *s == f64::INFINITY) {
            return Err(NumericsError::InvalidScore(id.to_string()));
        }
    }

    let joint: Vec<&str> = first
        .ids()
        .filter(|id| vectors.iter().all(|v| v.scores[*id].is_finite()))
        .collect();
    let m = joint.len();

    let sorted: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| {
            let mut vals: Vec<f64> = joint.iter().map(|id| v.scores[*id]).collect();
            vals.sort_by(f64::total_cmp);
            vals
        })
        .collect();
    let reference: Vec<f64> = (0..m)
        .map(|r| sorted.iter().map(|s| s[r]).sum::<f64>() / vectors.len() as f64)
        .collect();

    Ok(vectors
        .iter()
        .map(|v| {
            let mut out = v.clone();
            let mut order: Vec<(&str, f64)> = joint.iter().map(|id| (*id, v.scores[*id])).collect();
            order.sort_by(|a, b| a.1.total_cmp(&b.1));
            let mut start = 0;
            while start < m {
                let mut end = start;
                while end + 1 < m && order[end + 1].1 == order[start].1 {
                    end += 1;
                }
                let value =
                    reference[start..=end].iter().sum::<f64>() / (end - start + 1) as f64;
                for &(id, _) in &order[start..=end] {
                    out.insert(id, value);
                }
                start = end + 1;
            }
            out
        })
        .collect())
}

/// `ln[(1/N) Σ_i exp(-‖query - x_i‖ / h)]`, the log of an unnormalized
/// exponential-kernel density. Comparable across queries that share the
/// same data and bandwidth.
pub fn kde_log_density(
    data: &[SparseVector],
    query: &SparseVector,
    bandwidth: f64,
) -> Result<f64, NumericsError> {
    if !(bandwidth > 0.0) {
        return Err(NumericsError::Bandwidth(bandwidth));
    }
    if data.is_empty() {
        return Err(NumericsError::EmptyData);
    }
    let exponents: Vec<f64> = data.iter().map(|x| -query.distance(x) / bandwidth).collect();
    Ok(log_sum_exp(&exponents) - (data.len() as f64).ln())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Median pairwise Euclidean distance over a seeded subsample of at most
/// `max_points` points. Falls back to 1.0 when every distance is zero.
pub fn median_pairwise_bandwidth(data: &[SparseVector], max_points: usize, seed: u64) -> f64 {
    let sample: Vec<&SparseVector> = if data.len() > max_points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, data.len(), max_points).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &data[i]).collect()
    } else {
        data.iter().collect()
    };
    let mut dists = Vec::new();
    for i in 0..sample.len() {
        for j in i + 1..sample.len() {
            dists.push(sample[i].distance(sample[j]));
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    let median = if n % 2 == 1 {
        dists[n / 2]
    } else {
        (dists[n / 2 - 1] + dists[n / 2]) / 2.0
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(ids: &[&str], vals: &[f64]) -> ScoreVector {
        ids.iter().copied().zip(vals.iter().copied()).collect()
    }

    #[test]
    fn entropy_cases() {
        assert!((entropy(&[0.25; 4]).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&[1.0]).unwrap(), 0.0);
        assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((entropy(&[0.5, 0.5, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_invalid() {
        assert!(matches!(entropy(&[1.5, -0.5]), Err(NumericsError::NegativeProbability(_))));
        assert!(matches!(entropy(&[0.5, 0.4]), Err(NumericsError::NotNormalized(_))));
        assert_eq!(entropy(&[]), Err(NumericsError::EmptyDistribution));
    }

    #[test]
    fn quantile_three_point_example() {
        let ids = ["x", "y", "z"];
        let a = sv(&ids, &[1.0, 5.0, 3.0]);
        let b = sv(&ids, &[100.0, 200.0, 300.0]);
        let out = quantile_normalize(&[a, b]).unwrap();
        // Reference: mean of sorted columns, ((1+100)/2, (3+200)/2, (5+300)/2).
        assert_eq!(out[0], sv(&ids, &[50.5, 152.5, 101.5]));
        assert_eq!(out[1], sv(&ids, &[50.5, 101.5, 152.5]));
    }

    #[test]
    fn quantile_ties_take_mean_reference() {
        let ids = ["a", "b", "c"];
        let x = sv(&ids, &[1.0, 1.0, 2.0]);
        let y = sv(&ids, &[10.0, 20.0, 30.0]);
        let out = quantile_normalize(&[x, y]).unwrap();
        // reference = [5.5, 10.5, 16]; a and b tie over ranks 0..=1.
        assert_eq!(out[0], sv(&ids, &[8.0, 8.0, 16.0]));
    }

    #[test]
    fn quantile_passes_neg_inf_through() {
        let ids = ["u", "v", "w"];
        let x = sv(&ids, &[1.0, 2.0, f64::NEG_INFINITY]);
        let y = sv(&ids, &[3.0, 1.0, 7.0]);
        let out = quantile_normalize(&[x, y]).unwrap();
        assert_eq!(out[0].get("w"), Some(f64::NEG_INFINITY));
        assert_eq!(out[1].get("w"), Some(7.0));
        assert_eq!(out[0].get("u"), Some(1.0));
        assert_eq!(out[0].get("v"), Some(2.5));
    }

    #[test]
    fn quantile_errors() {
        let a = sv(&["a"], &[1.0]);
        let b = sv(&["b"], &[1.0]);
        assert_eq!(quantile_normalize(&[a.clone()]), Err(NumericsError::TooFewVectors(1)));
        assert_eq!(quantile_normalize(&[a.clone(), b]), Err(NumericsError::MismatchedIds));
        let nan = sv(&["a"], &[f64::NAN]);
        assert!(matches!(quantile_normalize(&[a, nan]), Err(NumericsError::InvalidScore(_))));
    }

    #[test]
    fn kde_cases() {
        let q = SparseVector::from_dense(&[0.3, -1.0]);
        assert_eq!(kde_log_density(&[q.clone()], &q, 0.7).unwrap(), 0.0);

        let data = [SparseVector::from_dense(&[0.0]), SparseVector::from_dense(&[2.0])];
        let v = kde_log_density(&data, &SparseVector::from_dense(&[1.0]), 1.0).unwrap();
        assert!((v + 1.0).abs() < 1e-12);

        assert_eq!(kde_log_density(&data, &q, 0.0), Err(NumericsError::Bandwidth(0.0)));
        assert_eq!(kde_log_density(&[], &q, 1.0), Err(NumericsError::EmptyData));
    }

    #[test]
    fn kde_dense_point_beats_outlier() {
        // Nine points packed near the origin and one far away.
        let mut data: Vec<SparseVector> = (0..9)
            .map(|i| SparseVector::from_dense(&[0.1 * i as f64, 0.05 * (i % 3) as f64]))
            .collect();
        data.push(SparseVector::from_dense(&[25.0, 25.0]));
        let h = 1.0;
        // Brute force: average kernel value, then log.
        let brute = |q: &SparseVector| {
            let s: f64 = data.iter().map(|x| (-(q.distance(x)) / h).exp()).sum();
            (s / data.len() as f64).ln()
        };
        let inside = kde_log_density(&data, &data[4], h).unwrap();
        let outlier = kde_log_density(&data, &data[9], h).unwrap();
        assert!((inside - brute(&data[4])).abs() < 1e-12);
        assert!((outlier - brute(&data[9])).abs() < 1e-12);
        assert!(inside > outlier);
    }

    #[test]
    fn bandwidth_median() {
        let data: Vec<_> = [0.0, 1.0, 3.0].iter().map(|&x| SparseVector::from_dense(&[x])).collect();
        // distances 1, 3, 2
        assert_eq!(median_pairwise_bandwidth(&data, 256, 0), 2.0);
        let same = vec![SparseVector::new(); 3];
        assert_eq!(median_pairwise_bandwidth(&same, 256, 0), 1.0);
    }

    proptest! {
        #[test]
        fn entropy_bounded(weights in prop::collection::vec(0.0f64..10.0, 1..12)) {
            prop_assume!(weights.iter().sum::<f64>() > 1e-6);
            let d = Distribution::from_counts(&weights).unwrap();
            let h = d.entropy();
            prop_assert!(h >= -1e-12);
            prop_assert!(h <= (weights.len() as f64).ln() + 1e-9);
        }

        #[test]
        fn quantile_preserves_order_and_equalizes(
            a in prop::collection::vec(-100.0f64..100.0, 2..20),
            seed in any::<u64>(),
        ) {
            let n = a.len();
            let ids: Vec<String> = (0..n).map(|i| format!("e{i:02}")).collect();
            let b: Vec<f64> = (0..n).map(|i| ((seed.wrapping_mul(i as u64 + 7)) % 997) as f64 + i as f64 * 1e-3).collect();
            let va: ScoreVector = ids.iter().cloned().zip(a.iter().copied()).collect();
            let vb: ScoreVector = ids.iter().cloned().zip(b.iter().copied()).collect();
            let out = quantile_normalize(&[va.clone(), vb.clone()]).unwrap();
            for (input, output) in [(&va, &out[0]), (&vb, &out[1])] {
                for i in input.ids() {
                    for j in input.ids() {
                        if input.get(i) < input.get(j) {
                            prop_assert!(output.get(i) <= output.get(j));
                        }
                    }
                }
            }
            let distinct = |v: &[f64]| {
                let mut s = v.to_vec();
                s.sort_by(f64::total_cmp);
                s.windows(2).all(|w| w[0] != w[1])
            };
            if distinct(&a) && distinct(&b) {
                let mut x: Vec<f64> = out[0].iter().map(|(_, v)| v).collect();
                let mut y: Vec<f64> = out[1].iter().map(|(_, v)| v).collect();
                x.sort_by(f64::total_cmp);
                y.sort_by(f64::total_cmp);
                for (p, q) in x.iter().zip(&y) {
                    prop_assert!((p - q).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn kde_translation_invariant(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..8),
            q in prop::collection::vec(-5.0f64..5.0, 3),
            shift in prop::collection::vec(-50.0f64..50.0, 3),
            h in 0.1f64..5.0,
        ) {
            let data: Vec<_> = pts.iter().map(|p| SparseVector::from_dense(p)).collect();
            let moved: Vec<_> = pts.iter().map(|p| {
                let v: Vec<f64> = p.iter().zip(&shift).map(|(a, b)| a + b).collect();
                SparseVector::from_dense(&v)
            }).collect();
            let qs: Vec<f64> = q.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let before = kde_log_density(&data, &SparseVector::from_dense(&q), h).unwrap();
            let after = kde_log_density(&moved, &SparseVector::from_dense(&qs), h).unwrap();
            prop_assert!((before - after).abs() < 1e-9);
        }
    }
}
