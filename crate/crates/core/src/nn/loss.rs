use crate::windowing::logistic;

/// Mean sigmoid cross-entropy over a batch of logits, with its gradient.
///
/// Uses `max(z, 0) - z·y + ln(1 + e^{-|z|})`, which never overflows.
pub fn bce_loss(logits: &[f64], labels: &[f64]) -> (f64, Vec<f64>) {
    debug_assert_eq!(logits.len(), labels.len());
    let n = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
            (logistic(z) - y) / n
        })
        .collect();
    (loss / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_logit() {
        let (l, g) = bce_loss(&[0.0], &[1.0]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, vec![-0.5]);
    }

    #[test]
    fn large_logit_is_stable() {
        let (l, g) = bce_loss(&[100.0], &[1.0]);
        assert!((0.0..1e-40).contains(&l));
        assert!(g[0].abs() < 1e-40);
        let (l, _) = bce_loss(&[-800.0], &[1.0]);
        assert!((l - 800.0).abs() < 1e-9);
    }

    #[test]
    fn mean_reduction() {
        let (l, g) = bce_loss(&[0.0, 0.0], &[1.0, 0.0]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, vec![-0.25, 0.25]);
    }
}
