//! Scalar abstraction and order-stable reductions shared by the math kernels.

use num_traits::Float;

/// Floating-point scalar the numeric kernels are generic over.
///
/// Blanket-implemented for anything satisfying the bounds, i.e. `f32` and
/// `f64` in practice.
pub trait Real: Float + std::fmt::Debug + 'static {
    /// Converts an `f64` constant, panicking only for values the type cannot
    /// represent at all (never the case for ordinary configuration constants).
    fn from_f64(x: f64) -> Self {
        num_traits::NumCast::from(x).expect("constant representable in scalar type")
    }

    /// Widens to `f64` for reporting.
    fn to_f64(self) -> f64 {
        num_traits::NumCast::from(self).expect("scalar widens to f64")
    }
}

impl<T: Float + std::fmt::Debug + 'static> Real for T {}

/// Sums a slice by pairwise (cascade) reduction.
///
/// The reduction tree depends only on the slice length, so results are
/// identical run-to-run and independent of any execution schedule, while the
/// error grows O(log n) instead of O(n).
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    if xs.len() <= 8 {
        return xs.iter().fold(T::zero(), |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean via [`pairwise_sum`]; zero for an empty slice.
pub fn pairwise_mean<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    pairwise_sum(xs) / T::from_f64(xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_sequential_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn pairwise_mean_handles_empty_and_singleton() {
        assert_eq!(pairwise_mean::<f64>(&[]), 0.0);
        assert_eq!(pairwise_mean(&[3.5f64]), 3.5);
    }

    #[test]
    fn pairwise_sum_is_generic_over_f32() {
        let xs: Vec<f32> = vec![0.25; 64];
        assert_eq!(pairwise_sum(&xs), 16.0f32);
    }
}
