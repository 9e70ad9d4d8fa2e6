//! Streaming log-sum-exp.

use crate::scalar::Scalar;

/// Accumulates `log Σ exp(xᵢ)` without forming the exponentials directly.
///
/// The result depends on the order terms are added in; callers that need
/// run-to-run reproducibility feed terms and merge partial accumulators in a
/// fixed order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSumExp<T> {
    max: T,
    scaled_sum: T,
}

impl<T: Scalar> Default for LogSumExp<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> LogSumExp<T> {
    pub fn new() -> Self {
        Self { max: T::neg_infinity(), scaled_sum: T::zero() }
    }

    pub fn add(&mut self, x: T) {
        if x == T::neg_infinity() {
            return;
        }
        if x > self.max {
            self.scaled_sum = self.scaled_sum * (self.max - x).exp() + T::one();
            self.max = x;
        } else {
            self.scaled_sum = self.scaled_sum + (x - self.max).exp();
        }
    }

    pub fn merge(&mut self, other: &Self) {
        if other.max == T::neg_infinity() {
            return;
        }
        if other.max > self.max {
            self.scaled_sum = self.scaled_sum * (self.max - other.max).exp() + other.scaled_sum;
            self.max = other.max;
        } else {
            self.scaled_sum = self.scaled_sum + other.scaled_sum * (other.max - self.max).exp();
        }
    }

    /// Current value of the log-sum; `-∞` when nothing finite was added.
    pub fn value(&self) -> T {
        if self.max == T::neg_infinity() {
            T::neg_infinity()
        } else {
            self.max + self.scaled_sum.ln()
        }
    }
}

/// `log Σ exp(xᵢ)` over a slice, in slice order.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let mut acc = LogSumExp::new();
    for &x in xs {
        acc.add(x);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_sum() {
        let xs = [-1.0f64, 0.5, 2.0, -3.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
    }

    #[test]
    fn survives_underflow() {
        let xs = [-2000.0f64, -2000.0];
        assert!((log_sum_exp(&xs) - (-2000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn empty_and_negative_infinity() {
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
    }

    #[test]
    fn merge_equals_sequential() {
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 5.0).collect();
        let mut left = LogSumExp::new();
        let mut right = LogSumExp::new();
        for &x in &xs[..17] {
            left.add(x);
        }
        for &x in &xs[17..] {
            right.add(x);
        }
        left.merge(&right);
        assert!((left.value() - log_sum_exp(&xs)).abs() < 1e-13);
    }
}
