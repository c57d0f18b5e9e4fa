//! Ranking and mask metrics. Positives (label 1) are failure pixels.

use crate::error::{Error, Result};
use crate::errormaps::BinaryMask;

/// Default bin count of [`auroc_histogram`].
pub const HISTOGRAM_BINS: usize = 1 << 16;

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::InvalidArgument(format!("score {i} is NaN")));
    }
    let mut pos = 0u64;
    for &l in labels {
        match l {
            0 => {}
            1 => pos += 1,
            other => return Err(Error::InvalidArgument(format!("label {other} is not 0 or 1"))),
        }
    }
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("both classes must be present".into()));
    }
    Ok((pos, neg))
}

/// Mann-Whitney pair count: `2 * (#{pos > neg} + 0.5 * #{pos == neg})`, with class sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCount {
    pub twice_wins: u128,
    pub positives: u64,
    pub negatives: u64,
}

impl PairCount {
    pub fn auroc(self) -> f64 {
        self.twice_wins as f64 / (2 * u128::from(self.positives) * u128::from(self.negatives)) as f64
    }
}

/// Exact pair count by sorting with tie groups.
pub fn auroc_pairs(scores: &[f64], labels: &[u8]) -> Result<PairCount> {
    let (positives, negatives) = class_counts(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut twice_wins = 0u128;
    let mut neg_below = 0u128;
    let mut i = 0;
    while i < idx.len() {
        let v = scores[idx[i]];
        let (mut gp, mut gn) = (0u128, 0u128);
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == v {
            if labels[idx[j]] == 1 {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        twice_wins += gp * (2 * neg_below + gn);
        neg_below += gn;
        i = j;
    }
    Ok(PairCount {
        twice_wins,
        positives,
        negatives,
    })
}

/// `P(score_pos > score_neg) + 0.5 * P(tie)`.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(auroc_pairs(scores, labels)?.auroc())
}

/// AUROC with scores quantized into `bins` equal-width bins over their range;
/// pairs sharing a bin count as ties. Linear in the input size.
pub fn auroc_histogram(scores: &[f64], labels: &[u8], bins: usize) -> Result<f64> {
    let (positives, negatives) = class_counts(scores, labels)?;
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if scores.iter().any(|s| s.is_infinite()) {
        return Err(Error::InvalidArgument("histogram AUROC needs finite scores".into()));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(0.5);
    }
    let scale = bins as f64 / (hi - lo);
    let mut pos = vec![0u64; bins];
    let mut neg = vec![0u64; bins];
    for (&s, &l) in scores.iter().zip(labels) {
        let b = (((s - lo) * scale) as usize).min(bins - 1);
        if l == 1 {
            pos[b] += 1;
        } else {
            neg[b] += 1;
        }
    }
    let mut twice_wins = 0u128;
    let mut neg_below = 0u128;
    for (&p, &n) in pos.iter().zip(&neg) {
        twice_wins += u128::from(p) * (2 * neg_below + u128::from(n));
        neg_below += u128::from(n);
    }
    Ok(PairCount {
        twice_wins,
        positives,
        negatives,
    }
    .auroc())
}

/// FPR at the largest threshold `t` whose mask `score >= t` reaches TPR >= 0.95.
pub fn fpr95(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (positives, negatives) = class_counts(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < idx.len() {
        let v = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == v {
            if labels[idx[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // TPR >= 0.95 in integers
        if tp * 100 >= positives * 95 {
            return Ok(fp as f64 / negatives as f64);
        }
    }
    unreachable!("the lowest threshold accepts every positive")
}

/// Percentage of flagged pixels.
pub fn mask_size(mask: &BinaryMask) -> f64 {
    100.0 * mask.count_ones() as f64 / mask.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_pairs(scores: &[f64], labels: &[u8]) -> u128 {
        let mut twice = 0u128;
        for (i, &sp) in scores.iter().enumerate() {
            if labels[i] != 1 {
                continue;
            }
            for (j, &sn) in scores.iter().enumerate() {
                if labels[j] != 0 {
                    continue;
                }
                twice += if sp > sn {
                    2
                } else if sp == sn {
                    1
                } else {
                    0
                };
            }
        }
        twice
    }

    fn brute_fpr95(scores: &[f64], labels: &[u8]) -> f64 {
        let p = labels.iter().filter(|&&l| l == 1).count();
        let n = labels.len() - p;
        let mut cands: Vec<f64> = scores.to_vec();
        cands.sort_by(|a, b| b.total_cmp(a));
        cands.dedup();
        for t in cands {
            let tp = scores.iter().zip(labels).filter(|(&s, &l)| l == 1 && s >= t).count();
            let fp = scores.iter().zip(labels).filter(|(&s, &l)| l == 0 && s >= t).count();
            if tp as f64 / p as f64 >= 0.95 {
                return fp as f64 / n as f64;
            }
        }
        unreachable!()
    }

    #[test]
    fn auroc_hand_counted() {
        let v = auroc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
        assert_eq!(v, 0.75);
    }

    #[test]
    fn auroc_separated_and_constant() {
        assert_eq!(auroc(&[0.0, 0.1, 0.9, 1.0], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auroc(&[3.0; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(auroc(&[0.1, 0.2], &[1, 1]), Err(Error::Undefined(_))));
        assert!(matches!(fpr95(&[0.1, 0.2], &[0, 0]), Err(Error::Undefined(_))));
    }

    #[test]
    fn fpr95_edge_cases() {
        assert_eq!(fpr95(&[0.0, 0.1, 0.9, 1.0], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(fpr95(&[0.5; 5], &[0, 1, 0, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn fpr95_interleaved() {
        // positives at 1..=20, negatives at 0.5..=19.5
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for k in 1..=20 {
            scores.push(k as f64);
            labels.push(1);
            scores.push(k as f64 - 0.5);
            labels.push(0);
        }
        // TPR >= 0.95 needs 19 positives: t = 2 keeps negatives 2.5..=19.5, i.e. 18 of 20
        let v = fpr95(&scores, &labels).unwrap();
        assert_eq!(v, 0.9);
        assert_eq!(v, brute_fpr95(&scores, &labels));
    }

    #[test]
    fn mask_size_fractions() {
        assert_eq!(mask_size(&BinaryMask::zeros(3, 4)), 0.0);
        assert_eq!(mask_size(&BinaryMask::new(3, 4, vec![1; 12]).unwrap()), 100.0);
        let m = BinaryMask::new(3, 4, vec![1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!(mask_size(&m), 25.0);
    }

    #[test]
    fn histogram_close_to_exact() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(9);
        let n = 20_000;
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.3))).collect();
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| rng.gen::<f64>() + 0.3 * f64::from(l))
            .collect();
        let exact = auroc(&scores, &labels).unwrap();
        let fast = auroc_histogram(&scores, &labels, HISTOGRAM_BINS).unwrap();
        assert!((exact - fast).abs() < 1e-3, "{exact} vs {fast}");
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec((0u8..8).prop_map(|v| f64::from(v) / 4.0), n),
                prop::collection::vec(0u8..2, n),
            )
        })
    }

    proptest! {
        #[test]
        fn auroc_matches_pair_enumeration((scores, mut labels) in instance()) {
            labels[0] = 0;
            labels[1] = 1;
            let pc = auroc_pairs(&scores, &labels).unwrap();
            prop_assert_eq!(pc.twice_wins, brute_pairs(&scores, &labels));
        }

        #[test]
        fn fpr95_matches_threshold_sweep((scores, mut labels) in instance()) {
            labels[0] = 0;
            labels[1] = 1;
            prop_assert_eq!(fpr95(&scores, &labels).unwrap(), brute_fpr95(&scores, &labels));
        }

        #[test]
        fn auroc_invariant_under_exp((scores, mut labels) in instance()) {
            labels[0] = 0;
            labels[1] = 1;
            let warped: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
            prop_assert_eq!(auroc(&scores, &labels).unwrap(), auroc(&warped, &labels).unwrap());
        }
    }
}
