//! Classification metrics: ROC AUC and thresholded precision/recall/F1.
//!
//! For a binary task the one-vs-rest AUC of either class is the same number,
//! so the support-weighted AUC equals the plain binary AUC reported here.

use crate::error::{Error, Result};

/// Area under the ROC curve via the Mann-Whitney rank statistic.
///
/// Ties receive their average (mid) rank, which counts a tied
/// positive/negative pair as one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("AUC needs both classes"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count();
        pos_rank_sum += mid * pos_in_group as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Thresholded metrics; predictions are `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    pub precision_harmful: f64,
    pub recall_harmful: f64,
    pub f1_harmful: f64,
    pub threshold: f64,
}

impl Prf {
    pub fn from_confusion(c: Confusion, threshold: f64) -> Self {
        let support_pos = c.tp + c.fn_;
        let support_neg = c.tn + c.fp;
        let total = c.total();
        let (p1, r1) = (ratio(c.tp, c.tp + c.fp), ratio(c.tp, support_pos));
        let (p0, r0) = (ratio(c.tn, c.tn + c.fn_), ratio(c.tn, support_neg));
        let (f1_pos, f1_neg) = (f1(p1, r1), f1(p0, r0));
        let w1 = ratio(support_pos, total);
        let w0 = ratio(support_neg, total);
        Self {
            confusion: c,
            accuracy: ratio(c.tp + c.tn, total),
            precision_weighted: w1 * p1 + w0 * p0,
            recall_weighted: w1 * r1 + w0 * r0,
            f1_weighted: w1 * f1_pos + w0 * f1_neg,
            precision_harmful: p1,
            recall_harmful: r1,
            f1_harmful: f1_pos,
            threshold,
        }
    }
}

pub fn confusion(scores: &[f64], labels: &[bool], threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// Per-class precision/recall/F1 (0/0 counts as 0) and support-weighted averages.
pub fn confusion_and_prf(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Prf> {
    if scores.is_empty() {
        return Err(Error::Undefined("metrics of an empty set"));
    }
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param("threshold", "must lie in (0, 1)"));
    }
    Ok(Prf::from_confusion(confusion(scores, labels, threshold), threshold))
}

/// Test-set evaluation of one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    pub prf: Prf,
    pub n_examples: usize,
}

impl EvalReport {
    /// `logits` rank examples for the AUC; `probabilities` feed the thresholded metrics.
    pub fn compute(logits: &[f64], probabilities: &[f64], labels: &[bool], threshold: f64) -> Result<Self> {
        Ok(Self {
            auc: roc_auc(logits, labels)?,
            prf: confusion_and_prf(probabilities, labels, threshold)?,
            n_examples: labels.len(),
        })
    }

    /// Metric names and values in a stable order.
    pub fn named_values(&self) -> [(&'static str, f64); 8] {
        [
            ("auc", self.auc),
            ("accuracy", self.prf.accuracy),
            ("precision_weighted", self.prf.precision_weighted),
            ("recall_weighted", self.prf.recall_weighted),
            ("f1_weighted", self.prf.f1_weighted),
            ("precision_harmful", self.prf.precision_harmful),
            ("recall_harmful", self.prf.recall_harmful),
            ("f1_harmful", self.prf.f1_harmful),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn auc_examples() {
        assert_eq!(
            roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(),
            1.0
        );
        assert_eq!(
            roc_auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(),
            0.5
        );
        // pairs (pos, neg): (0.35,0.1)+ (0.35,0.4)- (0.8,0.1)+ (0.8,0.4)+ -> 3/4
        assert_eq!(
            roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(),
            0.75
        );
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn prf_examples() {
        let labels = [true, true, false, false];
        let p = confusion_and_prf(&[0.9, 0.8, 0.1, 0.2], &labels, 0.5).unwrap();
        assert_eq!(p.accuracy, 1.0);
        assert_eq!(p.f1_weighted, 1.0);
        assert_eq!(p.f1_harmful, 1.0);

        let mut labels = vec![false; 92];
        labels.extend([true; 8]);
        let p = confusion_and_prf(&[0.1; 100], &labels, 0.5).unwrap();
        assert!((p.accuracy - 0.92).abs() < 1e-12);
        assert_eq!(p.recall_harmful, 0.0);
        assert_eq!(p.precision_harmful, 0.0);
        assert!(confusion_and_prf(&[], &[], 0.5).is_err());
        assert!(confusion_and_prf(&[0.2], &[true], 1.0).is_err());
    }

    #[test]
    fn prf_hand_case() {
        // 4 harmful, 6 normal; 2 false positives, 1 false negative.
        let scores = [0.9, 0.8, 0.7, 0.3, 0.6, 0.55, 0.2, 0.1, 0.4, 0.45];
        let labels = [true, true, true, true, false, false, false, false, false, false];
        let p = confusion_and_prf(&scores, &labels, 0.5).unwrap();
        assert_eq!(
            p.confusion,
            Confusion {
                tp: 3,
                fp: 2,
                tn: 4,
                fn_: 1
            }
        );
        assert!((p.precision_harmful - 0.6).abs() < 1e-12);
        assert!((p.recall_harmful - 0.75).abs() < 1e-12);
        assert!((p.f1_harmful - 2.0 / 3.0).abs() < 1e-12);
        // normal: precision 4/5, recall 4/6
        let f1_neg = 2.0 * 0.8 * (4.0 / 6.0) / (0.8 + 4.0 / 6.0);
        assert!((p.precision_weighted - (0.4 * 0.6 + 0.6 * 0.8)).abs() < 1e-12);
        assert!((p.f1_weighted - (0.4 * (2.0 / 3.0) + 0.6 * f1_neg)).abs() < 1e-12);
        assert!((p.accuracy - 0.7).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_maps(
            scores in prop::collection::vec(-5.0f64..5.0, 2..40),
            flips in prop::collection::vec(any::<bool>(), 40),
        ) {
            let mut labels: Vec<bool> = flips[..scores.len()].to_vec();
            labels[0] = true;
            labels[1] = false;
            let base = roc_auc(&scores, &labels).unwrap();
            let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
            let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s - 7.0).collect();
            prop_assert!((roc_auc(&exp, &labels).unwrap() - base).abs() < 1e-12);
            prop_assert!((roc_auc(&affine, &labels).unwrap() - base).abs() < 1e-12);
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            prop_assert!((roc_auc(&scores, &flipped).unwrap() + base - 1.0).abs() < 1e-12);
        }

        #[test]
        fn weighted_recall_is_accuracy(
            scores in prop::collection::vec(0.0f64..1.0, 1..50),
            flips in prop::collection::vec(any::<bool>(), 50),
        ) {
            let labels = &flips[..scores.len()];
            let p = confusion_and_prf(&scores, labels, 0.5).unwrap();
            prop_assert!((p.recall_weighted - p.accuracy).abs() < 1e-12);
        }
    }
}
