//! `tnnr`: command-line front end for twin neural network regression.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;
use tnnr_core::container::{load_model, save_model, SavedModel};
use tnnr_core::data::{
    generate, load_csv, Dataset, GeneratorKind, GeneratorSpec, Sidecar, SplitKind,
};
use tnnr_core::experiment::{
    self, fit_method, points_csv, run_benchmark, run_datasweep, run_uncertainty, write_json,
    DatasetSpec, ExperimentConfig, Method,
};
use tnnr_core::nn::OptimizerKind;
use tnnr_core::{stats, Error, Result};

mod args;

use args::{Cli, Command, DataArgs, EvalArgs, ExperimentArgs, GenerateArgs, TrainArgs, OUTPUT_ENV};

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Contract(_) => 2,
        Error::NonFiniteGradient { .. } | Error::Diverged { .. } | Error::Degenerate(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Datasweep(a) => cmd_datasweep(a),
        Command::Uncertainty(a) => cmd_uncertainty(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn parse_generator(name: &str) -> Result<GeneratorKind> {
    GeneratorKind::parse(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown generator {name:?} (expected rp, rcl, wsb or ising)"
        ))
    })
}

/// Output directory: flag, then config, then the environment, then `tnnr-out`.
fn output_dir(flag: Option<&Path>, config: Option<&Path>) -> Result<PathBuf> {
    let dir = flag
        .or(config)
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("tnnr-out"));
    fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let kind = parse_generator(&a.generator)?;
    if a.n == 0 {
        return Err(Error::Config("--n must be at least 1".into()));
    }
    let spec = GeneratorSpec {
        kind,
        n: a.n,
        seed: a.seed,
        noise_std: a.noise,
        lattice: a.lattice,
    };
    let data = generate(&spec)?;
    let csv = match a.out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::Io {
                    path: parent.to_path_buf(),
                    source: e,
                })?;
            }
            p
        }
        None => output_dir(None, None)?.join(format!("{}_n{}_s{}.csv", kind.name(), a.n, a.seed)),
    };
    data.save_csv(&csv)?;
    let sidecar = Sidecar {
        generator: spec,
        rows: data.len(),
        features: data.feature_names.clone(),
        target: data.target_name.clone(),
    };
    write_json(&csv.with_extension("json"), &sidecar)?;
    println!("wrote {} rows to {}", data.len(), csv.display());
    Ok(())
}

fn dataset_override(d: &DataArgs, base: Option<&DatasetSpec>) -> Result<Option<DatasetSpec>> {
    if let Some(path) = &d.data {
        let target = d
            .target
            .clone()
            .ok_or_else(|| Error::Config("--data needs --target".into()))?;
        return Ok(Some(DatasetSpec::Csv {
            path: path.clone(),
            target,
        }));
    }
    let touched = d.generator.is_some()
        || d.n.is_some()
        || d.data_seed.is_some()
        || d.noise.is_some()
        || d.lattice.is_some();
    if !touched {
        return Ok(None);
    }
    let mut spec = match (base, &d.generator) {
        (_, Some(g)) => GeneratorSpec::new(parse_generator(g)?, 0, 0),
        (Some(DatasetSpec::Generator(g)), None) => g.clone(),
        _ => return Err(Error::Config("generator options need --generator".into())),
    };
    if let Some(DatasetSpec::Generator(g)) = base {
        if g.kind == spec.kind {
            spec = g.clone();
        }
    }
    if let Some(n) = d.n {
        spec.n = n;
    }
    if let Some(s) = d.data_seed {
        spec.seed = s;
    }
    if d.noise.is_some() {
        spec.noise_std = d.noise;
    }
    if d.lattice.is_some() {
        spec.lattice = d.lattice;
    }
    Ok(Some(DatasetSpec::Generator(spec)))
}

/// Config file (if any) with every given flag applied on top.
fn resolve_config(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let file = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            Some(ExperimentConfig::from_json(&text)?)
        }
        None => None,
    };
    let dataset = dataset_override(&a.data, file.as_ref().map(|c| &c.dataset))?;
    let mut cfg = match (file, dataset) {
        (Some(mut c), Some(d)) => {
            c.dataset = d;
            c
        }
        (Some(c), None) => c,
        (None, Some(d)) => ExperimentConfig::new(d),
        (None, None) => {
            return Err(Error::Config(
                "no dataset: give --config, --data/--target or --generator/--n".into(),
            ))
        }
    };
    if let Some(ms) = &a.methods {
        cfg.methods = ms
            .iter()
            .map(|m| {
                Method::parse(m.trim())
                    .ok_or_else(|| Error::Config(format!("unknown method {m:?}")))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(h) = &a.hidden {
        cfg.hidden = h.clone();
    }
    if let Some(s) = &a.split {
        cfg.split.kind = match s.as_str() {
            "random" => SplitKind::standard(),
            "threshold" => SplitKind::extrapolation(),
            other => {
                return Err(Error::Config(format!(
                    "unknown split {other:?} (expected random or threshold)"
                )))
            }
        };
    }
    macro_rules! set {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(a.repetitions, cfg.repetitions);
    set!(a.master_seed, cfg.master_seed);
    set!(a.batch_size, cfg.train.batch_size);
    set!(a.l2, cfg.train.l2_penalty);
    set!(a.dropout, cfg.train.dropout_rate);
    set!(a.patience, cfg.train.patience);
    set!(a.max_epochs, cfg.train.max_epochs);
    set!(a.val_anchors, cfg.train.val_anchors);
    set!(a.ensemble_size, cfg.ensemble_size);
    set!(a.mc_samples, cfg.mc_samples);
    set!(a.mc_rate, cfg.mc_rate);
    set!(a.sweep_test_size, cfg.sweep_test_size);
    set!(a.loop_pairs, cfg.loop_pairs);
    set!(a.sizes.clone(), cfg.sizes);
    if a.steps_per_epoch.is_some() {
        cfg.train.steps_per_epoch = a.steps_per_epoch;
    }
    if let Some(o) = &a.optimizer {
        cfg.train.optimizer = match o.as_str() {
            "adadelta" => OptimizerKind::adadelta(),
            "rmsprop" => OptimizerKind::rmsprop(),
            other => return Err(Error::Config(format!("unknown optimizer {other:?}"))),
        };
    }
    if let Some(lr) = a.lr {
        match &mut cfg.train.optimizer {
            OptimizerKind::Rmsprop { lr: rate, .. } => *rate = lr,
            OptimizerKind::Adadelta { .. } => {
                return Err(Error::Config("--lr applies to rmsprop only".into()));
            }
        }
    }
    if a.output.is_some() {
        cfg.output = a.output.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    output_dir(None, cfg.output.as_deref())
}

fn print_summary(methods: &[experiment::MethodReport]) {
    for m in methods {
        let parts: Vec<String> = m
            .summary
            .iter()
            .map(|(k, s)| match s.std_error {
                Some(se) => format!("{k} {:.4} ± {:.4}", s.mean, se),
                None => format!("{k} {:.4}", s.mean),
            })
            .collect();
        let failed = m.failures();
        let note = if failed > 0 {
            format!(" ({failed} failed)")
        } else {
            String::new()
        };
        println!("{:<13} {}{}", m.method.name(), parts.join("  "), note);
    }
}

fn cmd_benchmark(a: ExperimentArgs) -> Result<()> {
    let cfg = resolve_config(&a)?;
    let dir = report_dir(&cfg)?;
    let (report, meta) = run_benchmark(&cfg)?;
    write_json(&dir.join("benchmark.json"), &report)?;
    write_json(&dir.join("benchmark.meta.json"), &meta)?;
    print_summary(&report.methods);
    println!("report: {}", dir.join("benchmark.json").display());
    Ok(())
}

fn cmd_datasweep(a: ExperimentArgs) -> Result<()> {
    let cfg = resolve_config(&a)?;
    let dir = report_dir(&cfg)?;
    let (report, meta) = run_datasweep(&cfg)?;
    write_json(&dir.join("datasweep.json"), &report)?;
    write_json(&dir.join("datasweep.meta.json"), &meta)?;
    for row in &report.rows {
        println!("n = {}", row.size);
        print_summary(&row.methods);
    }
    println!("report: {}", dir.join("datasweep.json").display());
    Ok(())
}

fn cmd_uncertainty(a: ExperimentArgs) -> Result<()> {
    let mut cfg = resolve_config(&a)?;
    if a.split.is_none() && a.config.is_none() {
        cfg.split.kind = SplitKind::extrapolation();
    }
    let dir = report_dir(&cfg)?;
    let (report, points, meta) = run_uncertainty(&cfg)?;
    write_json(&dir.join("uncertainty.json"), &report)?;
    write_text(&dir.join("uncertainty_points.csv"), &points_csv(&points))?;
    write_json(&dir.join("uncertainty.meta.json"), &meta)?;
    print_summary(&report.methods);
    for f in &report.fits {
        match &f.fit {
            Some(p) => println!(
                "{:<13} {:<16} |err| ≈ {:.4e} · s^{:.3} (± {:.3})",
                f.method.name(),
                f.estimator,
                p.coefficient,
                p.exponent,
                p.exponent_std_error
            ),
            None => println!(
                "{:<13} {:<16} no fit: {}",
                f.method.name(),
                f.estimator,
                f.error.as_deref().unwrap_or("")
            ),
        }
    }
    println!("report: {}", dir.join("uncertainty.json").display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = resolve_config(&a.experiment)?;
    let method = match &a.method {
        Some(m) => {
            Method::parse(m).ok_or_else(|| Error::Config(format!("unknown method {m:?}")))?
        }
        None => cfg.methods[0],
    };
    if !matches!(method, Method::Tnn | Method::Ann | Method::McDropout) {
        return Err(Error::Config(format!(
            "train saves a single network; {} is not supported",
            method.name()
        )));
    }
    let dir = report_dir(&cfg)?;
    let data = cfg.dataset.load()?;
    let split = cfg.split_for(&data, 0)?;
    let train = data.subset(&split.train);
    let val = data.subset(&split.val);
    let (fitted, histories) = fit_method(method, &cfg, &train, &val, cfg.repetition_seed(0))?;
    let saved = fitted.to_saved().expect("single-network method");
    save_model(&saved, &dir.join("model.json"))?;
    write_text(&dir.join("history.csv"), &histories[0].to_csv())?;
    let mut rmse = serde_json::Map::new();
    for (name, idx) in split.named() {
        rmse.insert(name.into(), json!(fitted.rmse(&data.subset(idx))?));
    }
    let h = &histories[0];
    let summary = json!({
        "method": method.name(),
        "initial_val_loss": h.initial_val_loss,
        "best_val_loss": h.best_val_loss,
        "best_epoch": h.best_epoch,
        "epochs": h.epochs.len(),
        "rmse": rmse,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn eval_dataset(d: &DataArgs) -> Result<Dataset<f64>> {
    match dataset_override(d, None)? {
        Some(DatasetSpec::Csv { path, target }) => load_csv(&path, &target),
        Some(DatasetSpec::Generator(g)) => generate(&g),
        None => Err(Error::Config(
            "eval needs --data/--target or --generator/--n".into(),
        )),
    }
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model: SavedModel<f64> = load_model(&a.model)?;
    let data = eval_dataset(&a.data)?;
    let (preds, spread): (Vec<f64>, Vec<Option<f64>>) = match &model {
        SavedModel::Twin(m) => m
            .predict_batch(&data.x)?
            .into_iter()
            .map(|b| (b.mean, Some(b.std)))
            .unzip(),
        SavedModel::Ann(m) => (m.predict_many(&data.x)?, vec![None; data.len()]),
    };
    if let Some(path) = &a.predictions {
        let mut s = String::from("target,prediction,sigma_pred\n");
        for ((y, p), sd) in data.y.iter().zip(&preds).zip(&spread) {
            s.push_str(&format!(
                "{y},{p},{}\n",
                sd.map(|v| v.to_string()).unwrap_or_default()
            ));
        }
        write_text(path, &s)?;
    }
    let summary = json!({
        "kind": model.kind(),
        "rows": data.len(),
        "rmse": stats::rmse(&preds, &data.y),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
