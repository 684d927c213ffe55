use super::layers::softmax_in_place;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Stabilized softmax, mean cross-entropy, and its gradient with respect to the
/// logits, (probs - onehot) / batch.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor, Tensor)> {
    let (b, k) = (logits.batch(), logits.features());
    if labels.len() != b {
        return Err(Error::Shape(format!("{} labels for a batch of {b}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Shape(format!("label {bad} for {k} classes")));
    }
    let mut probs = logits.clone();
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (s, &y) in labels.iter().enumerate() {
        let z = logits.item(s);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[y];
        let p = probs.item_mut(s);
        softmax_in_place(p);
        let g = grad.item_mut(s);
        for (j, (gj, pj)) in g.iter_mut().zip(p.iter()).enumerate() {
            *gj = (pj - if j == y { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    Ok((loss / b as f64, probs, grad))
}
