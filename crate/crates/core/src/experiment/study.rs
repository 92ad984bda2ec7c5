use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    fit_method, ExperimentConfig, Failures, Fitted, Method, MethodReport, RunMetadata, RunRecord,
    RunTiming, REPORT_VERSION,
};
use crate::data::{Dataset, SplitKind};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{self, stream};
use crate::stats;
use crate::uncertainty::{
    fit_power_law, latent_distance, loop3_residual, sample_loop_pairs, PowerLawFit,
};

pub const ESTIMATORS: [&str; 6] = [
    "sigma_pred",
    "sigma_sym",
    "loop3_residual",
    "latent_distance",
    "ensemble_std",
    "mc_std",
];

/// Error and uncertainty estimators of one evaluated point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub repetition: usize,
    pub method: Method,
    pub subset: String,
    /// Row of the point in the full dataset.
    pub index: usize,
    pub target: f64,
    pub prediction: f64,
    pub abs_error: f64,
    pub sigma_pred: Option<f64>,
    pub sigma_sym: Option<f64>,
    pub loop3_residual: Option<f64>,
    pub latent_distance: Option<f64>,
    pub ensemble_std: Option<f64>,
    pub mc_std: Option<f64>,
}

impl PointRecord {
    pub fn estimator(&self, name: &str) -> Option<f64> {
        match name {
            "sigma_pred" => self.sigma_pred,
            "sigma_sym" => self.sigma_sym,
            "loop3_residual" => self.loop3_residual,
            "latent_distance" => self.latent_distance,
            "ensemble_std" => self.ensemble_std,
            "mc_std" => self.mc_std,
            _ => None,
        }
    }
}

/// Power-law fit of `|error|` against one estimator over the test points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub method: Method,
    pub estimator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<PowerLawFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianRecord {
    pub method: Method,
    pub estimator: String,
    pub subset: String,
    pub median: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub schema: String,
    pub version: u32,
    pub config: ExperimentConfig,
    /// RMSE per method and subset.
    pub methods: Vec<MethodReport>,
    pub fits: Vec<FitRecord>,
    pub medians: Vec<MedianRecord>,
    /// Number of point records per subset and repetition.
    pub point_counts: BTreeMap<String, usize>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn points_csv(points: &[PointRecord]) -> String {
    let mut s = String::from("repetition,method,subset,index,target,prediction,abs_error");
    for e in ESTIMATORS {
        s.push(',');
        s.push_str(e);
    }
    s.push('\n');
    for p in points {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{}",
            p.repetition,
            p.method.name(),
            p.subset,
            p.index,
            p.target,
            p.prediction,
            p.abs_error
        );
        for e in ESTIMATORS {
            s.push(',');
            s.push_str(&opt(p.estimator(e)));
        }
        s.push('\n');
    }
    s
}

fn is_test_subset(name: &str) -> bool {
    name.starts_with("test")
}

struct Scored {
    prediction: f64,
    sigma_pred: Option<f64>,
    sigma_sym: Option<f64>,
    loop3_residual: Option<f64>,
    latent_distance: Option<f64>,
    ensemble_std: Option<f64>,
    mc_std: Option<f64>,
}

impl Scored {
    fn plain(prediction: f64) -> Self {
        Self {
            prediction,
            sigma_pred: None,
            sigma_sym: None,
            loop3_residual: None,
            latent_distance: None,
            ensemble_std: None,
            mc_std: None,
        }
    }
}

fn score(
    fitted: &Fitted,
    train: &Dataset<f64>,
    x: &Matrix<f64>,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<Scored>> {
    match fitted {
        Fitted::Tnn(m) => {
            let z = m.normalizer.apply(x)?;
            let reference = m.anchor_embeddings()?;
            let mut rng = seed::rng(seed::derive(seed, stream::LOOPS));
            let pairs = sample_loop_pairs(m.anchors.len(), cfg.loop_pairs, &mut rng);
            let bundles = m.predict_batch(x)?;
            bundles
                .into_iter()
                .zip(z.iter_rows())
                .map(|(b, q)| {
                    let emb = m.embedding_normalized(q)?;
                    Ok(Scored {
                        sigma_pred: Some(b.std),
                        sigma_sym: Some(b.residual_std()),
                        loop3_residual: Some(loop3_residual(&m.network, &m.anchors, q, &pairs)?),
                        latent_distance: Some(latent_distance(&emb, &reference)?),
                        ..Scored::plain(b.mean)
                    })
                })
                .collect()
        }
        Fitted::TnnEnsemble(e) => x
            .iter_rows()
            .map(|q| {
                let b = e.predict_one(q)?;
                let means: Vec<f64> = e
                    .members()
                    .iter()
                    .map(|m| m.predict_one(q).map(|b| b.mean))
                    .collect::<Result<_>>()?;
                Ok(Scored {
                    sigma_pred: Some(b.std),
                    sigma_sym: Some(b.residual_std()),
                    ensemble_std: Some(stats::population_std(&means)),
                    ..Scored::plain(b.mean)
                })
            })
            .collect(),
        Fitted::Ann(m) => {
            let rows = train
                .x
                .iter_rows()
                .map(|r| m.embedding(r))
                .collect::<Result<Vec<_>>>()?;
            let reference = Matrix::from_rows(&rows)?;
            let preds = m.predict_many(x)?;
            preds
                .into_iter()
                .zip(x.iter_rows())
                .map(|(p, q)| {
                    Ok(Scored {
                        latent_distance: Some(latent_distance(&m.embedding(q)?, &reference)?),
                        ..Scored::plain(p)
                    })
                })
                .collect()
        }
        Fitted::AnnEnsemble(_) => Ok(fitted
            .predict_with_spread(x)?
            .into_iter()
            .map(|(p, s)| Scored {
                ensemble_std: s,
                ..Scored::plain(p)
            })
            .collect()),
        Fitted::McDropout { .. } => Ok(fitted
            .predict_with_spread(x)?
            .into_iter()
            .map(|(p, s)| Scored {
                mc_std: s,
                ..Scored::plain(p)
            })
            .collect()),
    }
}

/// Uncertainty study on a target-threshold split: per-point errors and
/// estimators for the training, in-domain and out-of-domain points, RMSE per
/// subset, and power-law fits of error against each estimator on test points.
pub fn run_uncertainty(
    cfg: &ExperimentConfig,
) -> Result<(UncertaintyReport, Vec<PointRecord>, RunMetadata)> {
    cfg.validate()?;
    if !matches!(cfg.split.kind, SplitKind::TargetThreshold { .. }) {
        return Err(Error::Config(
            "an uncertainty study needs a target_threshold split".into(),
        ));
    }
    let start = Instant::now();
    let data = cfg.dataset.load()?;
    let mut meta = RunMetadata::default();
    let mut failures = Failures::new();
    let mut runs: BTreeMap<Method, Vec<RunRecord>> = BTreeMap::new();
    let mut points = Vec::new();
    let mut point_counts = BTreeMap::new();
    for rep in 0..cfg.repetitions {
        let seed = cfg.repetition_seed(rep);
        let split = cfg.split_for(&data, rep)?;
        let named = split.named();
        let train = data.subset(&split.train);
        let val = data.subset(&split.val);
        for (name, idx) in &named {
            if *name != "val" {
                point_counts.insert(name.to_string(), idx.len());
            }
        }
        for &method in &cfg.methods {
            let t = Instant::now();
            let outcome = (|| -> Result<(BTreeMap<String, f64>, Vec<PointRecord>)> {
                let (fitted, _) = fit_method(method, cfg, &train, &val, seed)?;
                let mut rmse = BTreeMap::new();
                let mut recs = Vec::new();
                for (name, idx) in &named {
                    let subset = data.subset(idx);
                    let scored = score(&fitted, &train, &subset.x, cfg, seed)?;
                    let preds: Vec<f64> = scored.iter().map(|s| s.prediction).collect();
                    rmse.insert(name.to_string(), stats::rmse(&preds, &subset.y));
                    if *name == "val" {
                        continue;
                    }
                    for ((s, &i), &y) in scored.into_iter().zip(idx.iter()).zip(&subset.y) {
                        recs.push(PointRecord {
                            repetition: rep,
                            method,
                            subset: name.to_string(),
                            index: i,
                            target: y,
                            prediction: s.prediction,
                            abs_error: (s.prediction - y).abs(),
                            sigma_pred: s.sigma_pred,
                            sigma_sym: s.sigma_sym,
                            loop3_residual: s.loop3_residual,
                            latent_distance: s.latent_distance,
                            ensemble_std: s.ensemble_std,
                            mc_std: s.mc_std,
                        });
                    }
                }
                Ok((rmse, recs))
            })();
            let result = failures.record(outcome);
            meta.timings.push(RunTiming {
                method,
                repetition: rep,
                size: None,
                seconds: t.elapsed().as_secs_f64(),
            });
            let (rmse, error) = match result {
                Ok((rmse, recs)) => {
                    points.extend(recs);
                    (Some(rmse), None)
                }
                Err(msg) => (None, Some(msg)),
            };
            runs.entry(method).or_default().push(RunRecord {
                repetition: rep,
                seed,
                rmse,
                error,
            });
        }
    }
    failures.finish()?;
    meta.total_seconds = start.elapsed().as_secs_f64();

    let mut fits = Vec::new();
    let mut medians = Vec::new();
    for &method in &cfg.methods {
        let mine: Vec<&PointRecord> = points.iter().filter(|p| p.method == method).collect();
        for est in ESTIMATORS {
            if !mine.iter().any(|p| p.estimator(est).is_some()) {
                continue;
            }
            let pairs: Vec<(f64, f64)> = mine
                .iter()
                .filter(|p| is_test_subset(&p.subset))
                .filter_map(|p| p.estimator(est).map(|s| (s, p.abs_error)))
                .collect();
            let (fit, error) = match fit_power_law(&pairs) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            fits.push(FitRecord {
                method,
                estimator: est.into(),
                fit,
                error,
            });
            for subset in point_counts.keys() {
                let vals: Vec<f64> = mine
                    .iter()
                    .filter(|p| &p.subset == subset)
                    .filter_map(|p| p.estimator(est))
                    .collect();
                if vals.is_empty() {
                    continue;
                }
                medians.push(MedianRecord {
                    method,
                    estimator: est.into(),
                    subset: subset.clone(),
                    median: stats::median(&vals),
                    count: vals.len(),
                });
            }
        }
    }
    let methods = cfg
        .methods
        .iter()
        .map(|m| MethodReport::from_runs(*m, runs.remove(m).unwrap_or_default()))
        .collect();
    Ok((
        UncertaintyReport {
            schema: "tnnr-uncertainty".into(),
            version: REPORT_VERSION,
            config: cfg.echo(),
            methods,
            fits,
            medians,
            point_counts,
        },
        points,
        meta,
    ))
}
