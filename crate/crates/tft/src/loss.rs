//! Pinball (quantile) loss.

use crate::error::{Error, Result};

/// `q·max(0, y − ŷ) + (1 − q)·max(0, ŷ − y)` without argument checks.
pub(crate) fn pinball(y: f64, y_hat: f64, q: f64) -> f64 {
    q * (y - y_hat).max(0.0) + (1.0 - q) * (y_hat - y).max(0.0)
}

pub fn quantile_loss(y: f64, y_hat: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Quantile(q));
    }
    Ok(pinball(y, y_hat, q))
}

/// Mean over rows of the loss summed across quantiles: `pred[t][k]` is the
/// forecast for horizon row `t` at quantile `quantiles[k]`.
pub fn horizon_loss(target: &[f64], pred: &[Vec<f64>], quantiles: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.iter().any(|r| r.len() != quantiles.len()) {
        return Err(Error::Shape("prediction rows must match targets and quantiles".into()));
    }
    let mut total = 0.0;
    for (y, row) in target.iter().zip(pred) {
        for (yh, q) in row.iter().zip(quantiles) {
            total += quantile_loss(*y, *yh, *q)?;
        }
    }
    Ok(total / target.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(quantile_loss(3.0, 1.0, 0.5).unwrap(), 1.0);
        assert_eq!(quantile_loss(1.0, 3.0, 0.5).unwrap(), 1.0);
        assert!((quantile_loss(1.0, 0.0, 0.9).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(quantile_loss(2.0, 2.0, 0.1).unwrap(), 0.0);
        assert!(quantile_loss(1.0, 0.0, 1.0).is_err());
        assert!(quantile_loss(1.0, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn non_negative_and_convex(y in -5.0..5.0f64, a in -5.0..5.0f64, b in -5.0..5.0f64, q in 0.01..0.99f64) {
            let l = |yh: f64| quantile_loss(y, yh, q).unwrap();
            prop_assert!(l(a) >= 0.0);
            prop_assert!(l(0.5 * (a + b)) <= 0.5 * (l(a) + l(b)) + 1e-12);
            if a != y {
                prop_assert!(l(a) > 0.0);
            }
        }
    }
}
