//! Ranking metrics for binary classifiers.
//!
//! Both metrics group tied scores: all items sharing a score are admitted
//! at the same threshold. ROC AUC is the Mann–Whitney statistic (ties count
//! one half); average precision is the step sum `Σ (R_n - R_{n-1})·P_n`
//! over distinct score thresholds taken in descending order.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch { scores: scores.len(), labels: labels.len() });
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::NonFiniteInput(*bad));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l).count();
        (pos, self.labels.len() - pos)
    }

    /// `(positives, negatives)` per tied score, scores descending.
    fn tie_groups(&self) -> Vec<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut last: Option<f64> = None;
        for i in order {
            let s = self.scores[i];
            if last != Some(s) {
                groups.push((0, 0));
                last = Some(s);
            }
            let g = groups.last_mut().expect("group pushed above");
            if self.labels[i] {
                g.0 += 1;
            } else {
                g.1 += 1;
            }
        }
        groups
    }

    pub fn roc_auc(&self) -> Result<f64> {
        let (pos, neg) = self.class_counts();
        if pos == 0 || neg == 0 {
            return Err(Error::AucUndefined);
        }
        // Walk from the lowest score up, counting negatives strictly below.
        let mut twice_concordant: u64 = 0;
        let mut neg_below: u64 = 0;
        for (p, n) in self.tie_groups().into_iter().rev() {
            twice_concordant += 2 * p as u64 * neg_below + p as u64 * n as u64;
            neg_below += n as u64;
        }
        Ok(twice_concordant as f64 / (2.0 * pos as f64 * neg as f64))
    }

    pub fn average_precision(&self) -> Result<f64> {
        let (pos, _) = self.class_counts();
        if pos == 0 {
            return Err(Error::ApUndefined);
        }
        let total = pos as f64;
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut prev_recall = 0.0;
        let mut ap = 0.0;
        for (p, n) in self.tie_groups() {
            tp += p;
            fp += n;
            let recall = tp as f64 / total;
            let precision = tp as f64 / (tp + fp) as f64;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        Ok(ap)
    }
}

pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    ScoredLabels::new(scores.to_vec(), labels.to_vec())?.roc_auc()
}

pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    ScoredLabels::new(scores.to_vec(), labels.to_vec())?.average_precision()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.8, 0.6, 0.4], &[true, false, true]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::AucUndefined)));
        assert!(roc_auc(&[0.1, 0.2], &[false, false]).unwrap_err().to_string().contains("AUC undefined"));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.9, 0.1], &[false, true]).unwrap(), 0.5);
        // tied pair enters together: recall 1 at precision 1/2
        assert_eq!(average_precision(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        assert!(average_precision(&[0.3], &[false]).unwrap_err().to_string().contains("AP undefined"));
    }

    #[test]
    fn input_validation() {
        assert!(matches!(ScoredLabels::new(vec![0.1], vec![]), Err(Error::LengthMismatch { .. })));
        assert!(ScoredLabels::new(vec![f64::NAN], vec![true]).is_err());
    }

    fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..40).prop_flat_map(|n| {
            (proptest::collection::vec(-5.0..5.0f64, n), proptest::collection::vec(any::<bool>(), n))
        })
    }

    proptest! {
        #[test]
        fn monotone_transform_invariance((scores, labels) in scored()) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let mapped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect();
            prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), roc_auc(&mapped, &labels).unwrap());
            prop_assert_eq!(average_precision(&scores, &labels).unwrap(), average_precision(&mapped, &labels).unwrap());
        }

        #[test]
        fn flipped_labels_complement_auc((scores, labels) in scored()) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            let sum = roc_auc(&scores, &labels).unwrap() + roc_auc(&scores, &flipped).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
