//! Self-consistency diagnostics, latent-space distance and power-law fits of
//! error against an uncertainty estimator.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::twin::{predict_with, Anchors, PairFunction, TwinModel};

/// Default number of anchor pairs sampled for the three-point loop statistic.
pub const LOOP_PAIR_BUDGET: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport<T> {
    /// Spread of the anchor estimates `e_j`.
    pub sigma_pred: T,
    /// Spread of the antisymmetry residuals `F(x,x_j) + F(x_j,x)`.
    pub sigma_sym: T,
    /// Mean |F(x_i,x_j) + F(x_j,x) + F(x,x_i)| over sampled anchor pairs.
    pub loop3_residual: Option<T>,
    pub latent_distance: Option<T>,
}

/// Consistency report for an arbitrary difference function; `x` lives in the
/// same (normalized) space as the anchors.
pub fn consistency_with<T: Scalar, F: PairFunction<T> + ?Sized>(
    f: &F,
    anchors: &Anchors<T>,
    x: &[T],
    loop_pairs: Option<&[(usize, usize)]>,
) -> Result<ConsistencyReport<T>> {
    if anchors.len() < 2 {
        return Err(Error::Contract(
            "consistency report needs at least two anchors".into(),
        ));
    }
    let b = predict_with(f, anchors, x)?;
    let loop3_residual = match loop_pairs {
        Some(p) => Some(loop3_residual(f, anchors, x, p)?),
        None => None,
    };
    Ok(ConsistencyReport {
        sigma_pred: b.std,
        sigma_sym: b.residual_std(),
        loop3_residual,
        latent_distance: None,
    })
}

/// Full report for a trained model and a raw query, including latent distance
/// to the anchor embeddings (precomputed with [`TwinModel::anchor_embeddings`]).
pub fn consistency_report<T: Scalar>(
    model: &TwinModel<T>,
    x: &[T],
    anchor_embeddings: &Matrix<T>,
    loop_pairs: Option<&[(usize, usize)]>,
) -> Result<ConsistencyReport<T>> {
    let z = model.normalizer.apply_row(x)?;
    let mut r = consistency_with(&model.network, &model.anchors, &z, loop_pairs)?;
    let emb = model.embedding_normalized(&z)?;
    r.latent_distance = Some(latent_distance(&emb, anchor_embeddings)?);
    Ok(r)
}

/// Mean absolute three-point loop sum `F(x_i,x_j) + F(x_j,x) + F(x,x_i)`
/// over the given anchor index pairs.
pub fn loop3_residual<T: Scalar, F: PairFunction<T> + ?Sized>(
    f: &F,
    anchors: &Anchors<T>,
    x: &[T],
    pairs: &[(usize, usize)],
) -> Result<T> {
    let d = f.side_dim();
    if x.len() != d || anchors.x.cols() != d {
        return Err(Error::Shape {
            context: "loop query features",
            expected: d,
            actual: x.len(),
        });
    }
    if pairs.is_empty() {
        return Err(Error::Contract(
            "loop residual needs at least one anchor pair".into(),
        ));
    }
    let m = pairs.len();
    let mut rows = Vec::with_capacity(3 * m * 2 * d);
    for &(i, j) in pairs {
        let (xi, xj) = (anchors.x.row(i), anchors.x.row(j));
        rows.extend_from_slice(xi);
        rows.extend_from_slice(xj);
        rows.extend_from_slice(xj);
        rows.extend_from_slice(x);
        rows.extend_from_slice(x);
        rows.extend_from_slice(xi);
    }
    let out = f.eval_pairs(&rows, 3 * m)?;
    let total: T = out
        .chunks_exact(3)
        .map(|c| (c[0] + c[1] + c[2]).abs())
        .sum();
    Ok(total / T::from_usize_lossy(m))
}

/// Anchor pairs for [`loop3_residual`]: all `n²` ordered pairs when that fits
/// the budget, otherwise `budget` uniform draws.
pub fn sample_loop_pairs(n: usize, budget: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    if n * n <= budget {
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect()
    } else {
        (0..budget)
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
            .collect()
    }
}

/// Smallest Euclidean distance from `embedding` to any row of `reference`.
pub fn latent_distance<T: Scalar>(embedding: &[T], reference: &Matrix<T>) -> Result<T> {
    if reference.rows() == 0 {
        return Err(Error::Contract(
            "latent distance needs a nonempty reference set".into(),
        ));
    }
    if reference.cols() != embedding.len() {
        return Err(Error::Shape {
            context: "latent embedding",
            expected: reference.cols(),
            actual: embedding.len(),
        });
    }
    let best = reference
        .iter_rows()
        .map(|r| {
            r.iter()
                .zip(embedding)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<T>()
        })
        .fold(T::infinity(), T::min);
    Ok(best.sqrt())
}

/// `|error| ≈ coefficient · estimator^exponent`, fitted in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub coefficient: f64,
    pub exponent: f64,
    /// Standard error of the fitted exponent.
    pub exponent_std_error: f64,
    /// Root-mean-square residual of the log-log line.
    pub log_residual: f64,
    /// Points that survived the positivity filter.
    pub points: usize,
}

/// Least-squares line through `(ln estimator, ln |error|)`. Points with a
/// nonpositive or non-finite coordinate are dropped first.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(s, e)| *s > 0.0 && *e > 0.0 && s.is_finite() && e.is_finite())
        .map(|&(s, e)| (s.ln(), e.ln()))
        .collect();
    let m = logs.len();
    if m < 3 {
        return Err(Error::Degenerate(format!(
            "power-law fit needs at least 3 strictly positive points, got {m}"
        )));
    }
    let mf = m as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / mf;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / mf;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(Error::Degenerate(
            "all estimator values are identical".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = logs
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    Ok(PowerLawFit {
        coefficient: intercept.exp(),
        exponent: slope,
        exponent_std_error: (ss_res / (mf - 2.0) / sxx).sqrt(),
        log_residual: (ss_res / mf).sqrt(),
        points: m,
    })
}

#[cfg(test)]
mod tests {
    use rand_distr::{Distribution, Normal};

    use super::*;
    use crate::data::Normalizer;
    use crate::nn::{regression_layers, Network};
    use crate::seed;
    use crate::twin::FnPair;

    fn anchors(n: usize) -> Anchors<f64> {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let y = rows.iter().map(|r| r[0] * r[0] - r[1]).collect();
        Anchors::new(Matrix::from_rows(&rows).unwrap(), y).unwrap()
    }

    #[test]
    fn antisymmetric_f_has_zero_sigma_sym() {
        let f = FnPair::new(2, |a: &[f64], b: &[f64]| {
            (a[0] * 3.0 + a[1].powi(3)) - (b[0] * 3.0 + b[1].powi(3))
        });
        let r = consistency_with(&f, &anchors(20), &[0.2, 0.1], None).unwrap();
        assert_eq!(r.sigma_sym, 0.0);
        assert!(r.sigma_pred > 0.0);
    }

    #[test]
    fn true_difference_has_zero_sigma_pred() {
        let f = FnPair::new(2, |a: &[f64], b: &[f64]| {
            (a[0] * a[0] - a[1]) - (b[0] * b[0] - b[1])
        });
        let a = anchors(20);
        let pairs = sample_loop_pairs(a.len(), LOOP_PAIR_BUDGET, &mut seed::rng(0));
        let r = consistency_with(&f, &a, &[0.5, 0.5], Some(&pairs)).unwrap();
        assert!(r.sigma_pred < 1e-15);
        assert!(r.loop3_residual.unwrap() < 1e-15);
    }

    #[test]
    fn untrained_networks_violate_antisymmetry() {
        let a = anchors(30);
        for s in 0..5 {
            let mut rng = seed::rng(s);
            let net = Network::<f64>::glorot(&regression_layers(4, &[64, 64]), &mut rng).unwrap();
            let r = consistency_with(&net, &a, &[0.3, -0.3], None).unwrap();
            assert!(r.sigma_sym > 0.0);
        }
    }

    #[test]
    fn loop_residual_examples() {
        let a = anchors(10);
        let pairs = sample_loop_pairs(10, 1000, &mut seed::rng(0));
        assert_eq!(pairs.len(), 100);
        let tele = FnPair::new(2, |p: &[f64], q: &[f64]| {
            (p[0] - p[1].exp()) - (q[0] - q[1].exp())
        });
        assert!(loop3_residual(&tele, &a, &[0.1, 0.2], &pairs).unwrap() < 1e-14);
        let one = FnPair::new(2, |_: &[f64], _: &[f64]| 1.0);
        assert_eq!(loop3_residual(&one, &a, &[0.1, 0.2], &pairs).unwrap(), 3.0);
        assert!(loop3_residual(&one, &a, &[0.1, 0.2], &[]).is_err());
        let sampled = sample_loop_pairs(100, 256, &mut seed::rng(1));
        assert_eq!(sampled.len(), 256);
    }

    #[test]
    fn consistency_needs_two_anchors() {
        let one = Anchors::new(Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap(), vec![1.0]).unwrap();
        let f = FnPair::new(2, |_: &[f64], _: &[f64]| 0.0);
        assert!(consistency_with(&f, &one, &[0.0, 0.0], None).is_err());
    }

    #[test]
    fn latent_distance_examples() {
        let reference = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(latent_distance(&[3.0, 4.0], &reference).unwrap(), 5.0);
        let three =
            Matrix::from_rows(&[vec![10.0, 0.0], vec![0.0, 2.0], vec![-1.0, -1.0]]).unwrap();
        assert_eq!(latent_distance(&[0.0, 0.0], &three).unwrap(), 2f64.sqrt());
        assert!(latent_distance(&[0.0, 0.0], &Matrix::<f64>::zeros(0, 2)).is_err());
    }

    #[test]
    fn training_point_has_zero_latent_distance() {
        let mut rng = seed::rng(9);
        let net = Network::<f64>::glorot(&regression_layers(4, &[16, 16]), &mut rng).unwrap();
        let a = anchors(15);
        let m = TwinModel::new(net, a.clone(), Normalizer::identity(2)).unwrap();
        let emb = m.anchor_embeddings().unwrap();
        let r = consistency_report(&m, a.x.row(7), &emb, None).unwrap();
        assert_eq!(r.latent_distance, Some(0.0));
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let pts: Vec<(f64, f64)> = (1..50)
            .map(|i| {
                let s = i as f64 * 0.03;
                (s, 2.0 * s.powf(1.5))
            })
            .collect();
        let f = fit_power_law(&pts).unwrap();
        assert!((f.coefficient - 2.0).abs() < 1e-9);
        assert!((f.exponent - 1.5).abs() < 1e-9);
    }

    #[test]
    fn flat_cloud_has_zero_exponent() {
        let pts: Vec<(f64, f64)> = (1..200)
            .map(|i| (i as f64, if i % 2 == 0 { 0.5 } else { 2.0 }))
            .collect();
        let f = fit_power_law(&pts).unwrap();
        assert!(f.exponent.abs() < 3.0 * f.exponent_std_error, "{f:?}");
    }

    #[test]
    fn noisy_exponent_within_three_standard_errors() {
        let mut rng = seed::rng(21);
        let noise = Normal::<f64>::new(0.0, 0.3).unwrap();
        for trial in 0..5 {
            let pts: Vec<(f64, f64)> = (0..300)
                .map(|_| {
                    let s: f64 = rng.random_range(0.01..1.0);
                    (s, 0.7 * s.powf(0.8) * noise.sample(&mut rng).exp())
                })
                .collect();
            let f = fit_power_law(&pts).unwrap();
            assert!(
                (f.exponent - 0.8).abs() < 3.0 * f.exponent_std_error,
                "trial {trial}: {f:?}"
            );
        }
    }

    #[test]
    fn degenerate_points_are_rejected() {
        assert!(fit_power_law(&[(0.0, 1.0), (1.0, 0.0), (-1.0, 2.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_err());
        // Zero-error points are dropped, the rest still fit.
        let f = fit_power_law(&[(1.0, 1.0), (2.0, 2.0), (4.0, 4.0), (8.0, 0.0)]).unwrap();
        assert_eq!(f.points, 3);
        assert!((f.exponent - 1.0).abs() < 1e-12);
    }
}
