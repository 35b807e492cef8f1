use crate::error::{Error, Result};
use crate::tensor::{sigmoid_scalar, TimeMatrix};

/// Mean multi-label binary cross-entropy on pre-sigmoid logits.
///
/// Uses `max(z, 0) - z*y + ln(1 + exp(-|z|))` per entry, which equals
/// `-y ln s(z) - (1 - y) ln(1 - s(z))` without overflowing for large `|z|`.
/// Returns the loss and its gradient with respect to the logits.
pub fn bce_multilabel(logits: &TimeMatrix, labels: &TimeMatrix) -> Result<(f64, TimeMatrix)> {
    logits.ensure_same_shape(labels, "bce_multilabel")?;
    if let Some(bad) = labels.as_slice().iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidArgument(format!(
            "labels must be 0 or 1, found {bad}"
        )));
    }
    let n = logits.as_slice().len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty label matrix".into()));
    }
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (&z, &y) in logits.as_slice().iter().zip(labels.as_slice()) {
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid_scalar(z) - y) * scale);
    }
    Ok((loss * scale, TimeMatrix::new(logits.steps(), logits.channels(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_logit_costs_ln2() {
        for y in [0.0, 1.0] {
            let (l, _) = bce_multilabel(&TimeMatrix::column(&[0.0]), &TimeMatrix::column(&[y])).unwrap();
            assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_logit_costs_nothing() {
        let (l, _) = bce_multilabel(&TimeMatrix::column(&[50.0]), &TimeMatrix::column(&[1.0])).unwrap();
        assert!(l < 1e-20);
    }

    #[test]
    fn unit_logit_positive_label() {
        // ln(1 + e^-1) to 20 digits: 0.31326168751822283405
        let (l, _) = bce_multilabel(&TimeMatrix::column(&[1.0]), &TimeMatrix::column(&[1.0])).unwrap();
        assert!((l - 0.313_261_687_518_222_83).abs() < 1e-15);
    }

    #[test]
    fn non_binary_labels_rejected() {
        assert!(bce_multilabel(&TimeMatrix::column(&[0.0]), &TimeMatrix::column(&[0.5])).is_err());
        assert!(bce_multilabel(&TimeMatrix::column(&[0.0]), &TimeMatrix::zeros(2, 1)).is_err());
    }

    proptest! {
        #[test]
        fn non_negative_and_gradient_matches_fd(
            zs in proptest::collection::vec(-30.0f64..30.0, 1..12),
            bits in proptest::collection::vec(any::<bool>(), 12),
        ) {
            let ys: Vec<f64> = zs.iter().zip(&bits).map(|(_, &b)| if b { 1.0 } else { 0.0 }).collect();
            let z = TimeMatrix::column(&zs);
            let y = TimeMatrix::column(&ys);
            let (l, g) = bce_multilabel(&z, &y).unwrap();
            prop_assert!(l >= 0.0);
            let h = 1e-6;
            for i in 0..zs.len() {
                let mut zp = zs.clone();
                zp[i] += h;
                let mut zm = zs.clone();
                zm[i] -= h;
                let lp = bce_multilabel(&TimeMatrix::column(&zp), &y).unwrap().0;
                let lm = bce_multilabel(&TimeMatrix::column(&zm), &y).unwrap().0;
                prop_assert!(((lp - lm) / (2.0 * h) - g.as_slice()[i]).abs() < 1e-8);
            }
        }
    }
}
