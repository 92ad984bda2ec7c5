//! Small descriptive statistics helpers.

use crate::scalar::Scalar;

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::nan();
    }
    xs.iter().copied().sum::<T>() / T::from_usize_lossy(xs.len())
}

/// Standard deviation dividing by the count.
pub fn population_std<T: Scalar>(xs: &[T]) -> T {
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::from_usize_lossy(xs.len());
    var.sqrt()
}

/// Standard deviation dividing by `count - 1`; `None` for fewer than two values.
pub fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Sample standard deviation over `sqrt(count)`.
pub fn standard_error(xs: &[f64]) -> Option<f64> {
    sample_std(xs).map(|s| s / (xs.len() as f64).sqrt())
}

pub fn rmse<T: Scalar>(pred: &[T], truth: &[T]) -> T {
    debug_assert_eq!(pred.len(), truth.len());
    let ss: T = pred
        .iter()
        .zip(truth)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    (ss / T::from_usize_lossy(pred.len())).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std_of_one_two_three() {
        let s = population_std(&[1.0f64, 2.0, 3.0]);
        assert!((s - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn standard_error_needs_two_values() {
        assert!(standard_error(&[0.3]).is_none());
        let se = standard_error(&[1.0, 3.0]).unwrap();
        assert!((se - 2f64.sqrt() / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
