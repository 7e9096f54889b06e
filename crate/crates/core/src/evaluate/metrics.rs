use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::linalg::average_ranks;

/// Counts with Lawful as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fn_: usize, fp: usize, tn: usize) -> Self {
        ConfusionMatrix { tp, fn_, fp, tn }
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.fp + self.tn
    }

    pub fn total(&self) -> usize {
        self.positives() + self.negatives()
    }
}

pub fn confusion_matrix(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (Label::Lawful, Label::Lawful) => cm.tp += 1,
            (Label::Lawful, Label::Unlawful) => cm.fn_ += 1,
            (Label::Unlawful, Label::Lawful) => cm.fp += 1,
            (Label::Unlawful, Label::Unlawful) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Rates as fractions. `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fnr: Option<f64>,
    pub acc: Option<f64>,
    pub pre: Option<f64>,
    pub auc: Option<f64>,
    pub aucpr: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    MetricsReport {
        tpr: ratio(cm.tp, cm.positives()),
        fpr: ratio(cm.fp, cm.negatives()),
        tnr: ratio(cm.tn, cm.negatives()),
        fnr: ratio(cm.fn_, cm.positives()),
        acc: ratio(cm.tp + cm.tn, cm.total()),
        pre: ratio(cm.tp, cm.tp + cm.fp),
        auc: None,
        aucpr: None,
    }
}

impl MetricsReport {
    pub const NAMES: [&'static str; 8] = ["acc", "tpr", "fpr", "tnr", "fnr", "pre", "auc", "aucpr"];

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "acc" => self.acc,
            "tpr" => self.tpr,
            "fpr" => self.fpr,
            "tnr" => self.tnr,
            "fnr" => self.fnr,
            "pre" => self.pre,
            "auc" => self.auc,
            "aucpr" => self.aucpr,
            _ => None,
        }
    }
}

fn check_scores(y_true: &[Label], scores: &[f64]) -> Result<()> {
    if y_true.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: scores.len(),
        });
    }
    if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteInput { row, col: 0 });
    }
    Ok(())
}

/// Probability that a random Unlawful row scores above a random Lawful row,
/// ties counting one half (Mann-Whitney U over average ranks).
pub fn roc_auc(y_true: &[Label], scores: &[f64]) -> Result<f64> {
    check_scores(y_true, scores)?;
    let n_u = y_true.iter().filter(|&&l| l == Label::Unlawful).count();
    let n_l = y_true.len() - n_u;
    if n_u == 0 || n_l == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(y_true)
        .filter(|(_, &l)| l == Label::Unlawful)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_u * (n_u + 1)) as f64 / 2.0;
    Ok(u / (n_u as f64 * n_l as f64))
}

/// Step-wise area under the precision-recall curve with Unlawful as the
/// detected class: `sum_k (R_k - R_{k-1}) * P_k` over distinct score
/// thresholds, highest first.
pub fn pr_auc(y_true: &[Label], scores: &[f64]) -> Result<f64> {
    check_scores(y_true, scores)?;
    let n_u = y_true.iter().filter(|&&l| l == Label::Unlawful).count();
    if n_u == 0 {
        return Err(Error::NoPositiveClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut area, mut prev_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += usize::from(y_true[order[i]] == Label::Unlawful);
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / n_u as f64;
        area += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
    }
    Ok(area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Lawful as L, Unlawful as U};

    fn brute_auc(y: &[Label], s: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for i in (0..y.len()).filter(|&i| y[i] == U) {
            for j in (0..y.len()).filter(|&j| y[j] == L) {
                pairs += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
        num / pairs
    }

    /// Precision/recall at every candidate threshold `score >= t`, integrated
    /// as a right-continuous step function.
    fn brute_pr_auc(y: &[Label], s: &[f64]) -> f64 {
        let mut ts: Vec<f64> = s.to_vec();
        ts.sort_by(|a, b| b.total_cmp(a));
        ts.dedup();
        let pos = y.iter().filter(|&&l| l == U).count() as f64;
        let mut area = 0.0;
        let mut last_r = 0.0;
        for t in ts {
            let sel: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= t).collect();
            let tp = sel.iter().filter(|&&i| y[i] == U).count() as f64;
            let r = tp / pos;
            area += (r - last_r) * tp / sel.len() as f64;
            last_r = r;
        }
        area
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion_matrix(&[L, L, U, U], &[L, U, U, U]).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(1, 1, 0, 2));
        let cm = confusion_matrix(&[L, L, L], &[U, U, U]).unwrap();
        assert_eq!((cm.tp, cm.fn_), (0, 3));
        assert!(matches!(confusion_matrix(&[L], &[]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(confusion_matrix(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn metrics_example() {
        let m = metrics(&ConfusionMatrix::new(1, 1, 0, 2));
        assert_eq!(m.tpr, Some(0.5));
        assert_eq!(m.fpr, Some(0.0));
        assert_eq!(m.tnr, Some(1.0));
        assert_eq!(m.fnr, Some(0.5));
        assert_eq!(m.acc, Some(0.75));
        assert_eq!(m.pre, Some(1.0));
        assert_eq!(metrics(&ConfusionMatrix::new(0, 3, 0, 2)).pre, None);
    }

    #[test]
    fn auc_examples() {
        let y = [U, U, L, L];
        assert_eq!(roc_auc(&y, &[0.9, 0.4, 0.6, 0.1]).unwrap(), 0.75);
        assert_eq!(roc_auc(&y, &[0.9, 0.8, 0.2, 0.1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&y, &[0.5; 4]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[U, U], &[0.1, 0.2]), Err(Error::SingleClass)));
    }

    #[test]
    fn pr_auc_examples() {
        let y = [U, U, L, L];
        let s = [0.9, 0.4, 0.6, 0.1];
        // thresholds 0.9: P=1 R=1/2; 0.6: P=1/2 R=1/2; 0.4: P=2/3 R=1
        assert!((pr_auc(&y, &s).unwrap() - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(pr_auc(&y, &[0.9, 0.8, 0.2, 0.1]).unwrap(), 1.0);
        assert_eq!(pr_auc(&[U, L, L, L], &[0.3; 4]).unwrap(), 0.25);
        assert!(matches!(pr_auc(&[L], &[0.3]), Err(Error::NoPositiveClass)));
    }

    fn labeled_scores() -> impl Strategy<Value = (Vec<Label>, Vec<f64>)> {
        (2usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { U } else { L }), n),
                prop::collection::vec((0u8..8).prop_map(|k| f64::from(k) / 8.0), n),
            )
        })
    }

    proptest! {
        #[test]
        fn identities_hold(tp in 0usize..500, fn_ in 0usize..500, fp in 0usize..500, tn in 0usize..500) {
            let cm = ConfusionMatrix::new(tp, fn_, fp, tn);
            let m = metrics(&cm);
            if let (Some(a), Some(b)) = (m.tpr, m.fnr) { prop_assert!((a + b - 1.0).abs() <= 1e-12); }
            if let (Some(a), Some(b)) = (m.fpr, m.tnr) { prop_assert!((a + b - 1.0).abs() <= 1e-12); }
            if let Some(p) = m.pre { prop_assert!((p * (tp + fp) as f64 - tp as f64).abs() <= 1e-9); }
        }

        #[test]
        fn auc_matches_pair_count((y, s) in labeled_scores()) {
            prop_assume!(y.contains(&U) && y.contains(&L));
            prop_assert_eq!(roc_auc(&y, &s).unwrap(), brute_auc(&y, &s));
        }

        #[test]
        fn pr_auc_matches_threshold_sweep((y, s) in labeled_scores()) {
            prop_assume!(y.contains(&U));
            prop_assert!((pr_auc(&y, &s).unwrap() - brute_pr_auc(&y, &s)).abs() < 1e-12);
        }
    }
}
