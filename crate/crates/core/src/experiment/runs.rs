use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    fit_method, DatasetSpec, ExperimentConfig, Failures, Method, MethodReport, RunMetadata,
    RunRecord, RunTiming, REPORT_VERSION,
};
use crate::data::{generate_draw, Dataset, GeneratorSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema: String,
    pub version: u32,
    pub config: ExperimentConfig,
    pub methods: Vec<MethodReport>,
}

fn evaluate(
    method: Method,
    cfg: &ExperimentConfig,
    parts: &[(&str, Dataset<f64>)],
    seed: u64,
) -> Result<BTreeMap<String, f64>> {
    let (train, val) = (&parts[0].1, &parts[1].1);
    let (fitted, _) = fit_method(method, cfg, train, val, seed)?;
    let mut out = BTreeMap::new();
    for (name, d) in parts {
        let r = fitted.rmse(d)?;
        if !r.is_finite() {
            return Err(Error::Degenerate(format!("non-finite {name} RMSE")));
        }
        out.insert(name.to_string(), r);
    }
    Ok(out)
}

/// Repeated split, train and evaluate cycles for every configured method.
/// A failed run is recorded and the rest continue; the call fails only if
/// nothing succeeded.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<(BenchmarkReport, RunMetadata)> {
    cfg.validate()?;
    let start = Instant::now();
    let data = cfg.dataset.load()?;
    let mut meta = RunMetadata::default();
    let mut failures = Failures::new();
    let mut runs: BTreeMap<Method, Vec<RunRecord>> = BTreeMap::new();
    for rep in 0..cfg.repetitions {
        let seed = cfg.repetition_seed(rep);
        let split = cfg.split_for(&data, rep)?;
        let parts: Vec<(&str, Dataset<f64>)> = split
            .named()
            .into_iter()
            .map(|(k, idx)| (k, data.subset(idx)))
            .collect();
        for &method in &cfg.methods {
            let t = Instant::now();
            let result = failures.record(evaluate(method, cfg, &parts, seed));
            meta.timings.push(RunTiming {
                method,
                repetition: rep,
                size: None,
                seconds: t.elapsed().as_secs_f64(),
            });
            runs.entry(method).or_default().push(RunRecord {
                repetition: rep,
                seed,
                rmse: result.as_ref().ok().cloned(),
                error: result.err(),
            });
        }
    }
    failures.finish()?;
    meta.total_seconds = start.elapsed().as_secs_f64();
    let methods = cfg
        .methods
        .iter()
        .map(|m| MethodReport::from_runs(*m, runs.remove(m).unwrap_or_default()))
        .collect();
    Ok((
        BenchmarkReport {
            schema: "tnnr-benchmark".into(),
            version: REPORT_VERSION,
            config: cfg.echo(),
            methods,
        },
        meta,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub methods: Vec<MethodReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasweepReport {
    pub schema: String,
    pub version: u32,
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
}

/// Draw 1 of the generator is the shared held-out set; repetition `r` draws
/// its data from draw `2 + r`, so every size sees the same function.
const TEST_DRAW: u64 = 1;
const FIRST_TRAIN_DRAW: u64 = 2;

/// Test RMSE against dataset size. Each size is generated afresh from the
/// configured generator, split with the configured fractions for training and
/// validation, and scored on a common held-out set (reported as `test`).
pub fn run_datasweep(cfg: &ExperimentConfig) -> Result<(DatasweepReport, RunMetadata)> {
    cfg.validate()?;
    let gen = match &cfg.dataset {
        DatasetSpec::Generator(g) => g.clone(),
        DatasetSpec::Csv { .. } => {
            return Err(Error::Config(
                "a data-size sweep needs a generator dataset".into(),
            ));
        }
    };
    if cfg.sizes.is_empty() {
        return Err(Error::Config("sweep sizes must not be empty".into()));
    }
    if cfg.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "sweep sizes must be strictly ascending".into(),
        ));
    }
    if cfg.sweep_test_size == 0 {
        return Err(Error::Config("sweep_test_size must be positive".into()));
    }
    let start = Instant::now();
    let test = generate_draw(
        &GeneratorSpec {
            n: cfg.sweep_test_size,
            ..gen.clone()
        },
        TEST_DRAW,
    )?;
    let mut meta = RunMetadata::default();
    let mut failures = Failures::new();
    let mut rows = Vec::with_capacity(cfg.sizes.len());
    for &size in &cfg.sizes {
        let mut runs: BTreeMap<Method, Vec<RunRecord>> = BTreeMap::new();
        for rep in 0..cfg.repetitions {
            let seed = cfg.repetition_seed(rep);
            let data = generate_draw(
                &GeneratorSpec {
                    n: size,
                    ..gen.clone()
                },
                FIRST_TRAIN_DRAW + rep as u64,
            )?;
            let split = match cfg.split_for(&data, rep) {
                Ok(s) => s,
                Err(e) => {
                    let msg = failures.record::<()>(Err(e)).unwrap_err();
                    for &m in &cfg.methods {
                        runs.entry(m).or_default().push(RunRecord {
                            repetition: rep,
                            seed,
                            rmse: None,
                            error: Some(msg.clone()),
                        });
                    }
                    continue;
                }
            };
            let parts = vec![
                ("train", data.subset(&split.train)),
                ("val", data.subset(&split.val)),
                ("test", test.clone()),
            ];
            for &method in &cfg.methods {
                let t = Instant::now();
                let result = failures.record(evaluate(method, cfg, &parts, seed));
                meta.timings.push(RunTiming {
                    method,
                    repetition: rep,
                    size: Some(size),
                    seconds: t.elapsed().as_secs_f64(),
                });
                runs.entry(method).or_default().push(RunRecord {
                    repetition: rep,
                    seed,
                    rmse: result.as_ref().ok().cloned(),
                    error: result.err(),
                });
            }
        }
        rows.push(SweepRow {
            size,
            methods: cfg
                .methods
                .iter()
                .map(|m| MethodReport::from_runs(*m, runs.remove(m).unwrap_or_default()))
                .collect(),
        });
    }
    failures.finish()?;
    meta.total_seconds = start.elapsed().as_secs_f64();
    Ok((
        DatasweepReport {
            schema: "tnnr-datasweep".into(),
            version: REPORT_VERSION,
            config: cfg.echo(),
            rows,
        },
        meta,
    ))
}
