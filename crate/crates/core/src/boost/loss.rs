//! Softmax probabilities, the multi-class negative log-likelihood and its
//! first two derivatives, with and without the sum-to-zero constraint.

use log::warn;

/// Softmax of one row of scores, written into `out`.
///
/// The maximum score is subtracted before exponentiating, so arbitrarily large
/// scores are fine.
pub fn softmax_into(scores: &[f64], out: &mut [f64]) {
    debug_assert_eq!(scores.len(), out.len());
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; scores.len()];
    softmax_into(scores, &mut out);
    out
}

/// Apply [`softmax_into`] to every row of a row-major `n x k` matrix.
pub fn softmax_rows(scores: &[f64], k: usize, out: &mut [f64]) {
    for (s, o) in scores.chunks_exact(k).zip(out.chunks_exact_mut(k)) {
        softmax_into(s, o);
    }
}

/// `-sum_i log p[i, y_i]` over a row-major `n x k` probability matrix.
///
/// A zero probability on the true class is clamped to the smallest positive
/// normal double (with a warning) instead of producing infinity.
pub fn nll_loss(labels: &[usize], probs: &[f64], k: usize) -> f64 {
    debug_assert_eq!(labels.len() * k, probs.len());
    let mut clamped = 0usize;
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let mut p = probs[i * k + y];
        if p <= 0.0 {
            clamped += 1;
            p = f64::MIN_POSITIVE;
        }
        loss -= p.ln();
    }
    if clamped > 0 {
        warn!("{clamped} samples have zero probability on their true class; clamped in the loss");
    }
    loss
}

/// Derivatives of one sample's loss in its own class score, treating the K
/// scores as free: `(-(r - p), p (1 - p))`.
pub fn plain_derivatives(r: f64, p: f64) -> (f64, f64) {
    (-(r - p), p * (1.0 - p))
}

/// Derivatives in `F_k` when the base class `b` absorbs the sum-to-zero
/// constraint (`F_b = -sum_{j != b} F_j`).
pub fn abc_derivatives(r_b: f64, p_b: f64, r_k: f64, p_k: f64) -> (f64, f64) {
    (
        (r_b - p_b) - (r_k - p_k),
        p_b * (1.0 - p_b) + p_k * (1.0 - p_k) + 2.0 * p_b * p_k,
    )
}

/// Index of the largest score; ties go to the smallest class id.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

/// Number of rows whose argmax differs from the label.
pub fn count_errors(scores: &[f64], labels: &[usize], k: usize) -> usize {
    scores
        .chunks_exact(k)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) != y)
        .count()
}
