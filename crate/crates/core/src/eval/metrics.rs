use serde::Serialize;

use crate::data::Label;
use crate::error::{Error, Result};

/// ROC curve with unknown as the positive class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// Trapezoidal area under `points`.
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }
}

/// ROC curve of unknownness scores. Tied scores form a single step, so the
/// area equals the Mann-Whitney statistic with ties counted as one half.
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<RocCurve> {
    if let Some((s, _)) = scores.iter().find(|(s, _)| s.is_nan()) {
        return Err(Error::usage(format!("score {s} is not a number")));
    }
    let positives = scores.iter().filter(|(_, u)| *u).count() as u64;
    let negatives = scores.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::usage("ROC needs both unknown and known samples"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the area in units of one (positive, negative) pair.
    let mut twice_area: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let (mut dtp, mut dfp) = (0u64, 0u64);
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 {
                dtp += 1;
            } else {
                dfp += 1;
            }
            i += 1;
        }
        twice_area += u128::from(dfp) * u128::from(2 * tp + dtp);
        tp += dtp;
        fp += dfp;
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    let auc = twice_area as f64 / (2 * u128::from(positives) * u128::from(negatives)) as f64;
    Ok(RocCurve { points, auc })
}

/// Confusion counts with unknown as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_decisions(decisions: &[(Label, Label)]) -> Self {
        let mut c = Confusion::default();
        for (pred, truth) in decisions {
            match (pred, truth) {
                (Label::Unknown, Label::Unknown) => c.tp += 1,
                (Label::Unknown, Label::Known) => c.fp += 1,
                (Label::Known, Label::Unknown) => c.fn_ += 1,
                (Label::Known, Label::Known) => c.tn += 1,
            }
        }
        c
    }

    pub fn f_measure(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if self.tp == 0 || denom == 0 {
            return 0.0;
        }
        // 2PR/(P+R) simplifies to 2TP/(2TP+FP+FN).
        2.0 * self.tp as f64 / denom as f64
    }
}

/// Harmonic mean of precision and recall for detecting unknowns, given
/// `(predicted, true)` pairs. Zero when undefined.
pub fn f_measure(decisions: &[(Label, Label)]) -> f64 {
    Confusion::from_decisions(decisions).f_measure()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Known as K, Unknown as U};

    /// Pairwise concordance count: unknown above known scores 2, ties 1.
    fn brute_auc(scores: &[(f64, bool)]) -> f64 {
        let mut twice = 0u128;
        let (mut p, mut n) = (0u128, 0u128);
        for (su, u) in scores {
            if !*u {
                n += 1;
                continue;
            }
            p += 1;
            for (sk, k) in scores {
                if *k {
                    continue;
                }
                twice += if su > sk { 2 } else if su == sk { 1 } else { 0 };
            }
        }
        twice as f64 / (2 * p * n) as f64
    }

    #[test]
    fn auc_examples() {
        let perfect = [(0.9, true), (0.8, true), (0.2, false), (0.1, false)];
        assert_eq!(roc_auc(&perfect).unwrap().auc, 1.0);
        let ties = [(0.5, true), (0.5, false), (0.5, true), (0.5, false)];
        assert_eq!(roc_auc(&ties).unwrap().auc, 0.5);
        let hand = [(0.9, true), (0.8, false), (0.7, true), (0.1, false)];
        let roc = roc_auc(&hand).unwrap();
        assert_eq!(roc.auc, 0.75);
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn auc_requires_both_labels() {
        assert!(roc_auc(&[(0.1, true), (0.2, true)]).is_err());
        assert!(roc_auc(&[]).is_err());
        assert!(roc_auc(&[(f64::NAN, true), (0.2, false)]).is_err());
    }

    #[test]
    fn f_measure_examples() {
        assert_eq!(f_measure(&[(U, U), (K, K), (U, U)]), 1.0);
        assert_eq!(f_measure(&[(K, U), (K, K)]), 0.0);
        let d = [(U, U), (U, U), (U, U), (U, K), (K, U), (K, K)];
        assert!((f_measure(&d) - 0.75).abs() < 1e-15);
        assert_eq!(f_measure(&[(K, K)]), 0.0);
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count(
            raw in prop::collection::vec((0u8..12, any::<bool>()), 2..200),
        ) {
            let scores: Vec<(f64, bool)> = raw.iter().map(|(s, u)| (f64::from(*s) / 4.0, *u)).collect();
            prop_assume!(scores.iter().any(|s| s.1) && scores.iter().any(|s| !s.1));
            let roc = roc_auc(&scores).unwrap();
            prop_assert_eq!(roc.auc, brute_auc(&scores));
            prop_assert!((roc.trapezoid_area() - roc.auc).abs() < 1e-12);
            for w in roc.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
        }
    }
}
