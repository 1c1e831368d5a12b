//! Multiclass softmax objective.

/// Softmax with max-shift; `out` receives the probabilities.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    debug_assert_eq!(logits.len(), out.len());
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

/// `-ln softmax(logits)[label]`, computed through log-sum-exp.
pub fn log_loss(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Gradient and diagonal Hessian of the softmax log-loss with respect to the
/// logits: `g_k = p_k - [k == label]`, `h_k = p_k (1 - p_k)`.
pub fn softmax_grad_hess(logits: &[f64], label: usize) -> (Vec<f64>, Vec<f64>) {
    let p = softmax(logits);
    let g = p
        .iter()
        .enumerate()
        .map(|(k, &pk)| if k == label { pk - 1.0 } else { pk })
        .collect();
    let h = p.iter().map(|&pk| pk * (1.0 - pk)).collect();
    (g, h)
}
