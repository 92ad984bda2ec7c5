//! Config-driven experiments: repeated-split benchmarks, data-size sweeps and
//! uncertainty studies. Every run is a pure function of its config; wall-clock
//! times are returned separately so reports stay byte-identical on rerun.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::{train_ann, train_ann_ensemble, AnnEnsemble, AnnModel};
use crate::container::SavedModel;
use crate::data::{self, generate, Dataset, GeneratorSpec, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{self, stream};
use crate::stats;
use crate::train::{History, TrainConfig};
use crate::twin::{train_twin, train_twin_ensemble, TnnEnsemble, TwinModel};

mod runs;
mod study;

pub use runs::{run_benchmark, run_datasweep, BenchmarkReport, DatasweepReport, SweepRow};
pub use study::{
    points_csv, run_uncertainty, FitRecord, MedianRecord, PointRecord, UncertaintyReport,
};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSpec {
    Generator(GeneratorSpec),
    Csv { path: PathBuf, target: String },
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset<f64>> {
        match self {
            DatasetSpec::Generator(g) => generate(g),
            DatasetSpec::Csv { path, target } => data::load_csv(path, target),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tnn,
    TnnEnsemble,
    Ann,
    AnnEnsemble,
    McDropout,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Tnn,
        Method::TnnEnsemble,
        Method::Ann,
        Method::AnnEnsemble,
        Method::McDropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Tnn => "tnn",
            Method::TnnEnsemble => "tnn_ensemble",
            Method::Ann => "ann",
            Method::AnnEnsemble => "ann_ensemble",
            Method::McDropout => "mc_dropout",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Tnn, Method::Ann]
}
fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_repetitions() -> usize {
    20
}
fn default_ensemble_size() -> usize {
    20
}
fn default_mc_samples() -> usize {
    100
}
fn default_mc_rate() -> f64 {
    0.1
}
fn default_sweep_test_size() -> usize {
    2000
}
fn default_loop_pairs() -> usize {
    crate::uncertainty::LOOP_PAIR_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Hidden layer widths shared by every method.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Training settings shared by every method; the seed is replaced per
    /// repetition.
    #[serde(default)]
    pub train: TrainConfig,
    /// Split fractions; the seed is replaced per repetition.
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Dropout rate used both to train and to sample the MC-dropout network.
    #[serde(default = "default_mc_rate")]
    pub mc_rate: f64,
    /// Dataset sizes for a sweep, ascending.
    #[serde(default)]
    pub sizes: Vec<usize>,
    /// Size of the common held-out set a sweep evaluates on.
    #[serde(default = "default_sweep_test_size")]
    pub sweep_test_size: usize,
    /// Anchor pairs sampled for the loop residual of each point.
    #[serde(default = "default_loop_pairs")]
    pub loop_pairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSpec) -> Self {
        Self {
            dataset,
            methods: default_methods(),
            hidden: default_hidden(),
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            repetitions: default_repetitions(),
            master_seed: 0,
            ensemble_size: default_ensemble_size(),
            mc_samples: default_mc_samples(),
            mc_rate: default_mc_rate(),
            sizes: Vec::new(),
            sweep_test_size: default_sweep_test_size(),
            loop_pairs: default_loop_pairs(),
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid experiment config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("methods must not repeat".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(
                "hidden layer widths must be a nonempty list of positive integers".into(),
            ));
        }
        if self.ensemble_size == 0 {
            return Err(Error::Config("ensemble_size must be at least 1".into()));
        }
        if self.mc_samples < 2 {
            return Err(Error::Config("mc_samples must be at least 2".into()));
        }
        if !(self.mc_rate > 0.0 && self.mc_rate < 1.0) {
            return Err(Error::Config("mc_rate must lie in (0, 1)".into()));
        }
        if self.loop_pairs == 0 {
            return Err(Error::Config("loop_pairs must be positive".into()));
        }
        Ok(())
    }

    /// Config as echoed in reports: the output location is dropped so that
    /// reports written to different places compare equal.
    pub(crate) fn echo(&self) -> Self {
        Self {
            output: None,
            ..self.clone()
        }
    }

    /// Seed of repetition `rep`; reproducible without running earlier ones.
    pub fn repetition_seed(&self, rep: usize) -> u64 {
        seed::derive(self.master_seed, rep as u64)
    }

    /// Seeded split of `data` for repetition `rep`.
    pub fn split_for(&self, data: &Dataset<f64>, rep: usize) -> Result<Split> {
        let spec = SplitSpec {
            kind: self.split.kind,
            seed: seed::derive(self.repetition_seed(rep), stream::SPLIT),
        };
        data::split(&data.y, &spec)
    }
}

/// A trained model of any method.
#[derive(Debug, Clone)]
pub enum Fitted {
    Tnn(TwinModel<f64>),
    TnnEnsemble(TnnEnsemble<f64>),
    Ann(AnnModel<f64>),
    AnnEnsemble(AnnEnsemble<f64>),
    McDropout {
        model: AnnModel<f64>,
        samples: usize,
        rate: f64,
        seed: u64,
    },
}

impl Fitted {
    pub fn method(&self) -> Method {
        match self {
            Fitted::Tnn(_) => Method::Tnn,
            Fitted::TnnEnsemble(_) => Method::TnnEnsemble,
            Fitted::Ann(_) => Method::Ann,
            Fitted::AnnEnsemble(_) => Method::AnnEnsemble,
            Fitted::McDropout { .. } => Method::McDropout,
        }
    }

    /// Point predictions for raw inputs. MC dropout averages its stochastic
    /// passes under a fixed seed.
    pub fn predict(&self, x: &Matrix<f64>) -> Result<Vec<f64>> {
        Ok(self
            .predict_with_spread(x)?
            .into_iter()
            .map(|p| p.0)
            .collect())
    }

    /// Predictions with the method's own spread: anchor spread for twin models,
    /// member spread for ANN ensembles, pass spread for MC dropout, `None`
    /// for a single ANN.
    pub fn predict_with_spread(&self, x: &Matrix<f64>) -> Result<Vec<(f64, Option<f64>)>> {
        match self {
            Fitted::Tnn(m) => Ok(m
                .predict_batch(x)?
                .into_iter()
                .map(|b| (b.mean, Some(b.std)))
                .collect()),
            Fitted::TnnEnsemble(e) => x
                .iter_rows()
                .map(|q| e.predict_one(q).map(|b| (b.mean, Some(b.std))))
                .collect(),
            Fitted::Ann(m) => Ok(m.predict_many(x)?.into_iter().map(|p| (p, None)).collect()),
            Fitted::AnnEnsemble(e) => {
                let per: Vec<Vec<f64>> = e
                    .members()
                    .iter()
                    .map(|m| m.predict_many(x))
                    .collect::<Result<_>>()?;
                Ok((0..x.rows())
                    .map(|i| {
                        let v: Vec<f64> = per.iter().map(|p| p[i]).collect();
                        (stats::mean(&v), Some(stats::population_std(&v)))
                    })
                    .collect())
            }
            Fitted::McDropout {
                model,
                samples,
                rate,
                seed,
            } => {
                let mut rng = seed::rng(seed::derive(*seed, stream::MC));
                x.iter_rows()
                    .map(|q| {
                        model
                            .mc_dropout(q, *samples, *rate, &mut rng)
                            .map(|(m, s)| (m, Some(s)))
                    })
                    .collect()
            }
        }
    }

    pub fn rmse(&self, data: &Dataset<f64>) -> Result<f64> {
        Ok(stats::rmse(&self.predict(&data.x)?, &data.y))
    }

    /// The single network behind this fit, if there is exactly one.
    pub fn to_saved(&self) -> Option<SavedModel<f64>> {
        match self {
            Fitted::Tnn(m) => Some(SavedModel::Twin(m.clone())),
            Fitted::Ann(m) | Fitted::McDropout { model: m, .. } => Some(SavedModel::Ann(m.clone())),
            _ => None,
        }
    }
}

/// Trains `method` on one split with the experiment's shared settings.
pub fn fit_method(
    method: Method,
    cfg: &ExperimentConfig,
    train: &Dataset<f64>,
    val: &Dataset<f64>,
    seed: u64,
) -> Result<(Fitted, Vec<History>)> {
    let tc = cfg.train.with_seed(seed);
    let hidden = &cfg.hidden;
    Ok(match method {
        Method::Tnn => {
            let (m, h) = train_twin(train, val, hidden, &tc)?;
            (Fitted::Tnn(m), vec![h])
        }
        Method::TnnEnsemble => {
            let (e, h) = train_twin_ensemble(train, val, cfg.ensemble_size, hidden, &tc)?;
            (Fitted::TnnEnsemble(e), h)
        }
        Method::Ann => {
            let (m, h) = train_ann(train, val, hidden, &tc)?;
            (Fitted::Ann(m), vec![h])
        }
        Method::AnnEnsemble => {
            let (e, h) = train_ann_ensemble(train, val, cfg.ensemble_size, hidden, &tc)?;
            (Fitted::AnnEnsemble(e), h)
        }
        Method::McDropout => {
            let tc = TrainConfig {
                dropout_rate: cfg.mc_rate,
                ..tc
            };
            let (m, h) = train_ann(train, val, hidden, &tc)?;
            (
                Fitted::McDropout {
                    model: m,
                    samples: cfg.mc_samples,
                    rate: cfg.mc_rate,
                    seed,
                },
                vec![h],
            )
        }
    })
}

/// Mean and standard error of one subset's per-repetition RMSEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    pub mean: f64,
    /// Sample std over `sqrt(count)`; absent for a single repetition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    pub count: usize,
}

impl SubsetSummary {
    pub fn of(values: &[f64]) -> Self {
        Self {
            mean: stats::mean(values),
            std_error: stats::standard_error(values),
            count: values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repetition: usize,
    pub seed: u64,
    /// RMSE per subset; absent if the run failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub runs: Vec<RunRecord>,
    /// Summary over successful runs, per subset.
    pub summary: BTreeMap<String, SubsetSummary>,
}

impl MethodReport {
    pub(crate) fn from_runs(method: Method, mut runs: Vec<RunRecord>) -> Self {
        runs.sort_by_key(|r| r.repetition);
        let mut by_subset: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &runs {
            for (k, v) in r.rmse.iter().flatten() {
                by_subset.entry(k.clone()).or_default().push(*v);
            }
        }
        let summary = by_subset
            .into_iter()
            .map(|(k, v)| (k, SubsetSummary::of(&v)))
            .collect();
        Self {
            method,
            runs,
            summary,
        }
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Wall-clock cost of one training-and-evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub method: Method,
    pub repetition: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    pub seconds: f64,
}

/// Timing data kept out of the primary report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub timings: Vec<RunTiming>,
    pub total_seconds: f64,
}

pub fn to_json_pretty<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    fs::write(path, to_json_pretty(value)?).map_err(|e| Error::io(path, e))
}

/// Collects the first error of a run set so a fully failed run can surface it.
pub(crate) struct Failures {
    first: Option<Error>,
    successes: usize,
}

impl Failures {
    pub(crate) fn new() -> Self {
        Self {
            first: None,
            successes: 0,
        }
    }

    pub(crate) fn record<V>(&mut self, r: Result<V>) -> std::result::Result<V, String> {
        match r {
            Ok(v) => {
                self.successes += 1;
                Ok(v)
            }
            Err(e) => {
                let msg = e.to_string();
                self.first.get_or_insert(e);
                Err(msg)
            }
        }
    }

    pub(crate) fn finish(self) -> Result<()> {
        match (self.successes, self.first) {
            (0, Some(e)) => Err(e),
            _ => Ok(()),
        }
    }
}
