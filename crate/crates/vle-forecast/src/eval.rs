//! Classification metrics: confusion matrix, per-class precision/recall/F1
//! with macro and support-weighted averages, and one-vs-rest ROC/AUC.
//!
//! Conventions: every 0/0 ratio is reported as 0; argmax ties resolve to the
//! lowest class index; a class absent from the evaluated labels (or
//! predicted-only) yields a degenerate ROC curve whose AUC is undefined
//! rather than 0, and macro AUC averages the defined classes only.

use thiserror::Error;

use crate::ingest::{Outcome, N_CLASSES};
use crate::tensor::Tensor;

pub type EvalResult<T> = Result<T, EvalError>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("labels and predictions differ in length ({labels} vs {predictions})")]
    LengthMismatch { labels: usize, predictions: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    BadLabel { label: u8, n_classes: usize },
    #[error("empty evaluation set")]
    Empty,
    #[error("no class has both positive and negative examples; AUC is undefined")]
    AllDegenerate,
    #[error(transparent)]
    Shape(#[from] crate::tensor::ShapeError),
}

/// Argmax per probability row; ties go to the lowest class index.
pub fn predict_classes(probs: &Tensor) -> EvalResult<Vec<u8>> {
    let (batch, k) = probs.dims2()?;
    let mut out = Vec::with_capacity(batch);
    for r in 0..batch {
        let row = &probs.data()[r * k..(r + 1) * k];
        let mut best = 0usize;
        for (i, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = i;
            }
        }
        out.push(best as u8);
    }
    Ok(out)
}

// ============================================================================
// Confusion matrix and derived metrics
// ============================================================================

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[usize; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_labels(truth: &[u8], predictions: &[u8]) -> EvalResult<Self> {
        if truth.len() != predictions.len() {
            return Err(EvalError::LengthMismatch {
                labels: truth.len(),
                predictions: predictions.len(),
            });
        }
        if truth.is_empty() {
            return Err(EvalError::Empty);
        }
        let mut counts = [[0usize; N_CLASSES]; N_CLASSES];
        for (&t, &p) in truth.iter().zip(predictions) {
            for &l in [t, p].iter() {
                if l as usize >= N_CLASSES {
                    return Err(EvalError::BadLabel {
                        label: l,
                        n_classes: N_CLASSES,
                    });
                }
            }
            counts[t as usize][p as usize] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: usize = (0..N_CLASSES).map(|c| self.counts[c][c]).sum();
        correct as f64 / self.total() as f64
    }

    /// True-class count (support) of a class.
    pub fn row_sum(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    /// Predicted count of a class.
    pub fn col_sum(&self, class: usize) -> usize {
        (0..N_CLASSES).map(|r| self.counts[r][class]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub per_class: [ClassMetrics; N_CLASSES],
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Derives every aggregate metric from a confusion matrix.
///
/// Macro averages weight all classes equally (absent classes contribute 0);
/// weighted averages weight by support, which makes the weighted recall
/// coincide with the accuracy.
pub fn metrics_report(confusion: &ConfusionMatrix) -> MetricsReport {
    let mut per_class = [ClassMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        support: 0,
    }; N_CLASSES];
    for (c, slot) in per_class.iter_mut().enumerate() {
        let tp = confusion.counts[c][c];
        let precision = ratio(tp, confusion.col_sum(c));
        let recall = ratio(tp, confusion.row_sum(c));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        *slot = ClassMetrics {
            precision,
            recall,
            f1,
            support: confusion.row_sum(c),
        };
    }
    let total = confusion.total() as f64;
    let k = N_CLASSES as f64;
    let weighted = |f: &dyn Fn(&ClassMetrics) -> f64| -> f64 {
        per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total
    };
    MetricsReport {
        confusion: confusion.clone(),
        accuracy: confusion.accuracy(),
        macro_precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        macro_recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        macro_f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
        weighted_precision: weighted(&|m| m.precision),
        weighted_recall: weighted(&|m| m.recall),
        weighted_f1: weighted(&|m| m.f1),
        per_class,
    }
}

// ============================================================================
// ROC / AUC
// ============================================================================

/// One-vs-rest ROC curve for a single class.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub class: u8,
    /// (false positive rate, true positive rate), starting at (0, 0) and
    /// ending at (1, 1). Tied scores collapse into a single point.
    pub points: Vec<(f64, f64)>,
    /// True when the class lacks positives or negatives; the curve is then
    /// the diagonal placeholder and its AUC is undefined.
    pub degenerate: bool,
}

/// Builds a ROC curve by sweeping the decision threshold over the distinct
/// scores in descending order.
pub fn roc_curve(class: u8, scores: &[f64], positive: &[bool]) -> EvalResult<RocCurve> {
    if scores.len() != positive.len() {
        return Err(EvalError::LengthMismatch {
            labels: positive.len(),
            predictions: scores.len(),
        });
    }
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return Ok(RocCurve {
            class,
            points: vec![(0.0, 0.0), (1.0, 1.0)],
            degenerate: true,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));

    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        // Consume the whole tie group before emitting a point.
        while i < order.len() && scores[order[i]] == threshold {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    if *points.last().unwrap() != (1.0, 1.0) {
        points.push((1.0, 1.0));
    }
    Ok(RocCurve {
        class,
        points,
        degenerate: false,
    })
}

/// Trapezoid area under the curve; undefined for degenerate curves.
pub fn auc(curve: &RocCurve) -> Option<f64> {
    if curve.degenerate {
        return None;
    }
    let mut area = 0.0;
    for w in curve.points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        area += (x1 - x0) * (y0 + y1) / 2.0;
    }
    Some(area)
}

/// One-vs-rest curves for every class from a probability matrix.
pub fn one_vs_rest_roc(probs: &Tensor, labels: &[u8]) -> EvalResult<Vec<RocCurve>> {
    let (batch, k) = probs.dims2()?;
    if batch != labels.len() {
        return Err(EvalError::LengthMismatch {
            labels: labels.len(),
            predictions: batch,
        });
    }
    if batch == 0 {
        return Err(EvalError::Empty);
    }
    for &l in labels {
        if l as usize >= k {
            return Err(EvalError::BadLabel {
                label: l,
                n_classes: k,
            });
        }
    }
    let mut curves = Vec::with_capacity(k);
    for c in 0..k {
        let scores: Vec<f64> = (0..batch).map(|r| probs.data()[r * k + c]).collect();
        let positive: Vec<bool> = labels.iter().map(|&l| l as usize == c).collect();
        curves.push(roc_curve(c as u8, &scores, &positive)?);
    }
    Ok(curves)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AucSummary {
    /// Per-class one-vs-rest AUC; `None` when the class is degenerate.
    pub per_class: [Option<f64>; N_CLASSES],
    /// AUC over the pooled (sample, class) decisions.
    pub micro: f64,
    /// Mean of the defined per-class AUCs.
    pub macro_avg: f64,
}

/// Per-class, micro- and macro-averaged one-vs-rest AUC.
pub fn auc_summary(probs: &Tensor, labels: &[u8]) -> EvalResult<AucSummary> {
    let curves = one_vs_rest_roc(probs, labels)?;
    let mut per_class = [None; N_CLASSES];
    for curve in &curves {
        per_class[curve.class as usize] = auc(curve);
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(EvalError::AllDegenerate);
    }
    let macro_avg = defined.iter().sum::<f64>() / defined.len() as f64;

    let (batch, k) = probs.dims2()?;
    let mut scores = Vec::with_capacity(batch * k);
    let mut positive = Vec::with_capacity(batch * k);
    for (r, &label) in labels.iter().enumerate() {
        for c in 0..k {
            scores.push(probs.data()[r * k + c]);
            positive.push(label as usize == c);
        }
    }
    let micro_curve = roc_curve(0, &scores, &positive)?;
    let micro = auc(&micro_curve).expect("pooled decisions always have both outcomes");
    Ok(AucSummary {
        per_class,
        micro,
        macro_avg,
    })
}

/// Human-readable class name for reports.
pub fn class_name(label: u8) -> &'static str {
    Outcome::ALL[label as usize].as_str()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn probs(rows: Vec<[f64; 4]>) -> Tensor {
        let n = rows.len();
        Tensor::from_vec(&[n, 4], rows.into_iter().flatten().collect()).unwrap()
    }

    /// Pairwise comparison AUC: P(score_pos > score_neg) + 0.5 P(tie).
    fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &pi) in positive.iter().enumerate() {
            if !pi {
                continue;
            }
            for (j, &pj) in positive.iter().enumerate() {
                if pj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn argmax_ties_resolve_to_lowest_index() {
        let p = probs(vec![[0.25, 0.25, 0.25, 0.25], [0.1, 0.4, 0.4, 0.1]]);
        assert_eq!(predict_classes(&p).unwrap(), vec![0, 1]);
    }

    #[test]
    fn known_binary_example_metrics() {
        let truth = [0u8, 0, 1, 1];
        let pred = [0u8, 1, 1, 1];
        let cm = ConfusionMatrix::from_labels(&truth, &pred).unwrap();
        let report = metrics_report(&cm);
        assert!((report.accuracy - 0.75).abs() < 1e-12);
        assert!((report.per_class[0].precision - 1.0).abs() < 1e-12);
        assert!((report.per_class[0].recall - 0.5).abs() < 1e-12);
        assert!((report.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.per_class[1].precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.per_class[1].recall - 1.0).abs() < 1e-12);
        assert!((report.per_class[1].f1 - 0.8).abs() < 1e-12);
        // Classes 2 and 3 are absent: all-zero metrics, zero support.
        for c in 2..4 {
            assert_eq!(report.per_class[c].support, 0);
            assert_eq!(report.per_class[c].f1, 0.0);
        }
        assert!((report.macro_f1 - (2.0 / 3.0 + 0.8) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_recall_equals_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth: Vec<u8> = (0..500).map(|_| rng.gen_range(0..4)).collect();
        let pred: Vec<u8> = (0..500).map(|_| rng.gen_range(0..4)).collect();
        let report = metrics_report(&ConfusionMatrix::from_labels(&truth, &pred).unwrap());
        assert!((report.weighted_recall - report.accuracy).abs() < 1e-12);
    }

    #[test]
    fn confusion_rejects_bad_input() {
        assert!(matches!(
            ConfusionMatrix::from_labels(&[0], &[0, 1]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            ConfusionMatrix::from_labels(&[], &[]),
            Err(EvalError::Empty)
        ));
        assert!(matches!(
            ConfusionMatrix::from_labels(&[9], &[0]),
            Err(EvalError::BadLabel { label: 9, .. })
        ));
    }

    #[test]
    fn perfect_separation_gives_unit_auc() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let positive = [true, true, false, false];
        let curve = roc_curve(0, &scores, &positive).unwrap();
        assert_eq!(auc(&curve), Some(1.0));
        assert_eq!(curve.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(curve.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn reversed_separation_gives_zero_auc() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        let positive = [true, true, false, false];
        let curve = roc_curve(0, &scores, &positive).unwrap();
        assert_eq!(auc(&curve), Some(0.0));
    }

    #[test]
    fn all_tied_scores_give_half_auc() {
        let scores = [0.5; 6];
        let positive = [true, false, true, false, true, false];
        let curve = roc_curve(0, &scores, &positive).unwrap();
        assert_eq!(curve.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc(&curve), Some(0.5));
    }

    #[test]
    fn trapezoid_auc_matches_pairwise_comparison() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let n = 60 + trial;
            // Quantized scores force plenty of ties.
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..12) as f64) / 12.0).collect();
            let positive: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            if positive.iter().all(|&p| p) || !positive.iter().any(|&p| p) {
                continue;
            }
            let curve = roc_curve(0, &scores, &positive).unwrap();
            let trapezoid = auc(&curve).unwrap();
            let pairwise = pairwise_auc(&scores, &positive);
            assert!(
                (trapezoid - pairwise).abs() < 1e-12,
                "trial {trial}: trapezoid {trapezoid} vs pairwise {pairwise}"
            );
        }
    }

    #[test]
    fn uniform_scores_auc_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 10_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let positive: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let curve = roc_curve(0, &scores, &positive).unwrap();
        let a = auc(&curve).unwrap();
        assert!((a - 0.5).abs() < 0.02, "auc {a}");
    }

    #[test]
    fn absent_class_is_degenerate_not_zero() {
        let p = probs(vec![
            [0.7, 0.1, 0.1, 0.1],
            [0.1, 0.7, 0.1, 0.1],
            [0.1, 0.1, 0.7, 0.1],
        ]);
        let labels = [0u8, 1, 2]; // class 3 never appears
        let summary = auc_summary(&p, &labels).unwrap();
        assert!(summary.per_class[3].is_none());
        assert!(summary.per_class[0].is_some());
        let defined: Vec<f64> = summary.per_class.iter().flatten().copied().collect();
        let expect = defined.iter().sum::<f64>() / defined.len() as f64;
        assert!((summary.macro_avg - expect).abs() < 1e-12);
    }

    #[test]
    fn micro_auc_pools_all_decisions() {
        let p = probs(vec![[0.6, 0.2, 0.1, 0.1], [0.2, 0.5, 0.2, 0.1]]);
        let labels = [0u8, 1];
        let summary = auc_summary(&p, &labels).unwrap();
        let mut scores = Vec::new();
        let mut positive = Vec::new();
        for (r, &label) in labels.iter().enumerate() {
            for c in 0..4 {
                scores.push(p.data()[r * 4 + c]);
                positive.push(label as usize == c);
            }
        }
        assert!((summary.micro - pairwise_auc(&scores, &positive)).abs() < 1e-12);
    }

    #[test]
    fn single_class_labels_are_all_degenerate() {
        let p = probs(vec![[0.7, 0.1, 0.1, 0.1], [0.6, 0.2, 0.1, 0.1]]);
        let labels = [0u8, 0];
        // Class 0 has no negatives, classes 1..3 no positives.
        assert!(matches!(
            auc_summary(&p, &labels),
            Err(EvalError::AllDegenerate)
        ));
    }

    proptest! {
        #[test]
        fn metrics_invariant_under_sample_permutation(
            pairs in proptest::collection::vec((0u8..4, 0u8..4), 2..80),
            seed in 0u64..1000,
        ) {
            let truth: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let pred: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            let mut order: Vec<usize> = (0..pairs.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            let truth_p: Vec<u8> = order.iter().map(|&i| truth[i]).collect();
            let pred_p: Vec<u8> = order.iter().map(|&i| pred[i]).collect();
            let a = metrics_report(&ConfusionMatrix::from_labels(&truth, &pred).unwrap());
            let b = metrics_report(&ConfusionMatrix::from_labels(&truth_p, &pred_p).unwrap());
            prop_assert_eq!(a, b);
        }

        #[test]
        fn auc_bounded_and_complement_symmetric(
            raw in proptest::collection::vec((0u8..10, proptest::bool::ANY), 4..60),
        ) {
            let scores: Vec<f64> = raw.iter().map(|r| r.0 as f64 / 10.0).collect();
            let positive: Vec<bool> = raw.iter().map(|r| r.1).collect();
            prop_assume!(positive.iter().any(|&p| p) && !positive.iter().all(|&p| p));
            let curve = roc_curve(0, &scores, &positive).unwrap();
            let a = auc(&curve).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            // Negating scores flips the ranking: AUC becomes 1 - AUC.
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let flipped = auc(&roc_curve(0, &neg, &positive).unwrap()).unwrap();
            prop_assert!((a + flipped - 1.0).abs() < 1e-12);
        }
    }
}
