use crate::error::{domain, Result};

/// Softmax cross-entropy against a class index, with its gradient
/// `softmax - onehot`.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(domain!("target {target} outside {} classes", logits.len()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(domain!("non-finite logits"));
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    let mut grad: Vec<f64> = logits.iter().map(|v| (v - z).exp()).collect();
    grad[target] -= 1.0;
    Ok(((z - logits[target]).max(0.0), grad))
}

/// Summed training objective; the speaker term is absent in the ablation.
pub fn joint_loss(ctc: f64, ce: Option<f64>) -> f64 {
    ctc + ce.unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let (loss, grad) = cross_entropy(&[0.0; 200], 17).unwrap();
        assert!((loss - 200f64.ln()).abs() < 1e-12);
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn confident_target() {
        let mut logits = vec![0.0; 200];
        logits[3] = 20.0;
        assert!(cross_entropy(&logits, 3).unwrap().0 < 1e-6);
    }

    #[test]
    fn out_of_range_target() {
        assert!(cross_entropy(&[0.0; 4], 4).is_err());
    }

    #[test]
    fn joint_is_a_plain_sum() {
        assert_eq!(joint_loss(0.5, Some(1.5)), 2.0);
        assert_eq!(joint_loss(0.5, None), 0.5);
    }
}
