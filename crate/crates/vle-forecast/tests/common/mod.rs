//! Independent oracles and finite-difference helpers for the integration
//! suites.
//!
//! Everything here re-derives expected values from first principles —
//! pairwise AUC counting, brute-force metric recounts, central-difference
//! gradients — so the library is checked against math, not against itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vle_forecast::nn::LayerKind;
use vle_forecast::tensor::Tensor;

/// Symmetric relative error with an absolute floor for near-zero pairs.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

// ============================================================================
// Metric oracles
// ============================================================================

/// O(n²) Mann-Whitney AUC: the fraction of (positive, negative) pairs the
/// score orders correctly, counting ties as half. `None` when either side is
/// empty, matching the degenerate-curve convention.
pub fn pairwise_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut wins = 0.0_f64;
    let mut pairs = 0.0_f64;
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
    if pairs == 0.0 {
        None
    } else {
        Some(wins / pairs)
    }
}

/// Per-class precision/recall/F1 plus the aggregate rows, recounted from the
/// raw label pairs with plain loops. Field order matches the label encoding.
pub struct BruteForceMetrics {
    pub accuracy: f64,
    pub precision: [f64; 4],
    pub recall: [f64; 4],
    pub f1: [f64; 4],
    pub support: [usize; 4],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn brute_force_metrics(truth: &[u8], pred: &[u8]) -> BruteForceMetrics {
    let n = truth.len();
    let mut correct = 0usize;
    for i in 0..n {
        if truth[i] == pred[i] {
            correct += 1;
        }
    }
    let mut precision = [0.0; 4];
    let mut recall = [0.0; 4];
    let mut f1 = [0.0; 4];
    let mut support = [0usize; 4];
    for c in 0..4u8 {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for i in 0..n {
            match (truth[i] == c, pred[i] == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        support[c as usize] = tp + fn_;
        precision[c as usize] = ratio(tp as f64, (tp + fp) as f64);
        recall[c as usize] = ratio(tp as f64, (tp + fn_) as f64);
        f1[c as usize] = ratio(
            2.0 * precision[c as usize] * recall[c as usize],
            precision[c as usize] + recall[c as usize],
        );
    }
    let mean = |v: &[f64; 4]| (v[0] + v[1] + v[2] + v[3]) / 4.0;
    let weighted = |v: &[f64; 4]| {
        let mut acc = 0.0;
        for c in 0..4 {
            acc += v[c] * support[c] as f64;
        }
        acc / n as f64
    };
    BruteForceMetrics {
        accuracy: correct as f64 / n as f64,
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1),
        weighted_precision: weighted(&precision),
        weighted_recall: weighted(&recall),
        weighted_f1: weighted(&f1),
        precision,
        recall,
        f1,
        support,
    }
}

// ============================================================================
// Finite differences
// ============================================================================

pub const FD_H: f64 = 1e-5;

/// Probe loss: a fixed random linear functional of the layer output, which
/// turns the vector-valued layer into a scalar function without hiding any
/// output element.
pub fn probe_for(shape: &[usize], seed: u64) -> Tensor {
    let len: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ab_3f00);
    Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central-difference check of one layer instance: analytic parameter and
/// input gradients against `(f(x+h) - f(x-h)) / 2h` on a probe loss.
/// Returns the worst relative error across every parameter element and
/// every input element.
pub fn fd_layer_worst_error(layer: &LayerKind, x: &Tensor, probe_seed: u64) -> f64 {
    let mut reference = layer.clone();
    let y = reference.forward_train(x).expect("forward");
    let probe = probe_for(y.shape(), probe_seed);

    for p in reference.params_mut() {
        p.zero_grad();
    }
    let dx = reference.backward(&probe).expect("backward");

    let loss_with = |l: &LayerKind, input: &Tensor| -> f64 {
        let mut run = l.clone();
        let out = run.forward_train(input).expect("fd forward");
        dot(out.data(), probe.data())
    };

    let mut worst = 0.0_f64;
    let n_tensors = reference.params().len();
    for t in 0..n_tensors {
        for e in 0..reference.params()[t].value.len() {
            let analytic = reference.params()[t].grad.data()[e];
            let original = reference.params()[t].value.data()[e];
            let mut probe_layer = reference.clone();
            probe_layer.params_mut()[t].value.data_mut()[e] = original + FD_H;
            let up = loss_with(&probe_layer, x);
            probe_layer.params_mut()[t].value.data_mut()[e] = original - FD_H;
            let down = loss_with(&probe_layer, x);
            let numeric = (up - down) / (2.0 * FD_H);
            worst = worst.max(rel_err(analytic, numeric));
        }
    }
    for e in 0..x.len() {
        let analytic = dx.data()[e];
        let mut xp = x.clone();
        xp.data_mut()[e] += FD_H;
        let up = loss_with(&reference, &xp);
        xp.data_mut()[e] = x.data()[e] - FD_H;
        let down = loss_with(&reference, &xp);
        let numeric = (up - down) / (2.0 * FD_H);
        worst = worst.max(rel_err(analytic, numeric));
    }
    worst
}

/// Uniform random tensor in [-range, range].
pub fn random_tensor(shape: &[usize], range: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let len: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(-range..range)).collect()).unwrap()
}
