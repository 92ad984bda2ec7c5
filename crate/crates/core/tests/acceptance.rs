//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the result lines reach the
//! terminal under `cargo test`. Set `TNNR_ACCEPTANCE_ONLY=5,7` to run a subset.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use tnnr_core::baseline::train_ann;
use tnnr_core::container::{from_json, to_json, SavedModel};
use tnnr_core::data::{generate, GeneratorKind, GeneratorSpec, RandomPolynomial, SplitKind};
use tnnr_core::experiment::{
    run_benchmark, run_datasweep, run_uncertainty, to_json_pretty, DatasetSpec, ExperimentConfig,
    Method, UncertaintyReport,
};
use tnnr_core::nn::{mse_gradient, mse_loss, regression_layers, Network};
use tnnr_core::pairing::PairStream;
use tnnr_core::seed;
use tnnr_core::train::TrainConfig;
use tnnr_core::twin::{predict_with, train_twin, Anchors, FnPair};
use tnnr_core::uncertainty::{consistency_with, sample_loop_pairs, LOOP_PAIR_BUDGET};
use tnnr_core::Matrix;

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<f64> {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

fn gradient_oracle() -> Outcome {
    const H: f64 = 1e-6;
    const TOL: f64 = 1e-4;
    // Central differences carry about 1e-10 of rounding noise at this step,
    // so relative error is only meaningful above this gradient magnitude.
    const RESOLVABLE: f64 = 1e-5;
    let (batch, side) = (4, 5);
    let mut worst_rel: f64 = 0.0;
    let mut worst_small_gap: f64 = 0.0;
    let mut bad = 0usize;
    let (mut checked, mut resolvable) = (0usize, 0usize);
    for s in 0..20 {
        let mut rng = seed::rng(1000 + s);
        let mut net =
            Network::<f64>::glorot(&regression_layers(2 * side, &[64, 64]), &mut rng).unwrap();
        let x = uniform_matrix(batch, 2 * side, &mut rng);
        let t: Vec<f64> = (0..batch).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cache = net.forward_batch(x.as_slice(), batch, None).unwrap();
        let g = net
            .backward(&cache, &mse_gradient(cache.output(), &t))
            .unwrap();
        let loss =
            |n: &Network<f64>| mse_loss(&n.predict_rows(x.as_slice(), batch).unwrap(), &t).unwrap();
        for idx in 0..net.num_params() {
            let p = net.param(idx);
            net.set_param(idx, p + H);
            let up = loss(&net);
            net.set_param(idx, p - H);
            let down = loss(&net);
            net.set_param(idx, p);
            let fd = (up - down) / (2.0 * H);
            let a = g.flat(idx);
            let gap = (a - fd).abs();
            let scale = a.abs().max(fd.abs());
            checked += 1;
            if scale >= RESOLVABLE {
                resolvable += 1;
                let rel = gap / scale;
                worst_rel = worst_rel.max(rel);
                if rel > TOL {
                    bad += 1;
                }
            } else {
                worst_small_gap = worst_small_gap.max(gap);
                if gap > TOL * RESOLVABLE {
                    bad += 1;
                }
            }
        }
    }
    outcome(
        bad == 0 && resolvable > checked / 2,
        format!(
            "{checked} parameters over 20 networks, worst relative error {worst_rel:.2e} on {resolvable} resolvable gradients, \
             worst absolute gap {worst_small_gap:.1e} on the rest, {bad} violations"
        ),
    )
}

fn pair_stream_exactness() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for n in [1usize, 2, 7, 30] {
        for batch in [2usize, 16] {
            let mut stream = PairStream::new(n, batch, 77 + n as u64).unwrap();
            let batches = stream.drain_epoch();
            let mut seen: Vec<(usize, usize)> = batches
                .iter()
                .flat_map(|b| b.pairs.iter().copied())
                .collect();
            seen.sort_unstable();
            let mut all: Vec<(usize, usize)> =
                (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
            all.sort_unstable();
            let exact = seen == all;
            let mirrored = batches.iter().all(|b| {
                let mut fwd = b.pairs.clone();
                let mut rev: Vec<_> = b.pairs.iter().map(|&(i, j)| (j, i)).collect();
                fwd.sort_unstable();
                rev.sort_unstable();
                fwd == rev
            });
            let one_epoch = batches.iter().all(|b| b.epoch == 0)
                && batches.last().is_some_and(|b| b.ends_epoch);
            pass &= exact && mirrored && one_epoch;
            if !(exact && mirrored && one_epoch) {
                notes.push(format!(
                    "n={n} batch={batch} exact={exact} mirrored={mirrored}"
                ));
            }
        }
    }
    let detail = if notes.is_empty() {
        "n in {1,2,7,30}, batch 2 and 16: epoch multiset equals all ordered pairs, every batch mirror-closed".to_string()
    } else {
        notes.join("; ")
    };
    outcome(pass, detail)
}

fn antisymmetry_invariance() -> Outcome {
    let side = 5;
    let mut worst: f64 = 0.0;
    for s in 0..10 {
        let mut rng = seed::rng(2000 + s);
        let net =
            Network::<f64>::glorot(&regression_layers(2 * side, &[64, 64]), &mut rng).unwrap();
        let ax = uniform_matrix(50, side, &mut rng);
        let ay: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();
        let anchors = Anchors::new(ax, ay).unwrap();
        let anti = FnPair::new(side, |a: &[f64], b: &[f64]| {
            let mut ab = a.to_vec();
            ab.extend_from_slice(b);
            let mut ba = b.to_vec();
            ba.extend_from_slice(a);
            0.5 * (net.predict_rows(&ab, 1).unwrap()[0] - net.predict_rows(&ba, 1).unwrap()[0])
        });
        for _ in 0..10 {
            let q: Vec<f64> = (0..side).map(|_| rng.random_range(-1.5..1.5)).collect();
            let raw = predict_with(&net, &anchors, &q).unwrap().mean;
            let sym = predict_with(&anti, &anchors, &q).unwrap().mean;
            worst = worst.max((raw - sym).abs());
        }
    }
    outcome(
        worst < 1e-12,
        format!("100 queries on 10 models, largest mean change {worst:.2e}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let g = |v: &[f64]| v[0].sin() + v[1] * v[1] - 0.5 * v[2] * v[3] + v[4].exp();
    let f = FnPair::new(5, move |a: &[f64], b: &[f64]| g(a) - g(b));
    let mut rng = seed::rng(3000);
    let ax = uniform_matrix(40, 5, &mut rng);
    let ay: Vec<f64> = ax.iter_rows().map(g).collect();
    let anchors = Anchors::new(ax, ay).unwrap();
    let pairs = sample_loop_pairs(anchors.len(), LOOP_PAIR_BUDGET, &mut seed::rng(3001));
    let mut worst = [0.0f64; 4];
    for _ in 0..20 {
        let q: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let err = (predict_with(&f, &anchors, &q).unwrap().mean - g(&q)).abs();
        let r = consistency_with(&f, &anchors, &q, Some(&pairs)).unwrap();
        for (w, v) in
            worst
                .iter_mut()
                .zip([err, r.sigma_pred, r.sigma_sym, r.loop3_residual.unwrap()])
        {
            *w = w.max(v);
        }
    }
    outcome(
        worst.iter().all(|&w| w < 1e-12),
        format!(
            "error {:.1e}, sigma_pred {:.1e}, sigma_sym {:.1e}, loop3 {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn desk_config(n: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(DatasetSpec::Generator(GeneratorSpec::new(
        GeneratorKind::Rp,
        n,
        0,
    )));
    cfg.methods = vec![Method::Tnn, Method::Ann];
    cfg.train.steps_per_epoch = Some(2000);
    cfg.train.patience = 10;
    cfg
}

fn rp_accuracy() -> Outcome {
    const PAPER_MEAN: f64 = 0.022;
    const PAPER_SE: f64 = 0.001;
    let mut cfg = desk_config(1000);
    cfg.repetitions = 5;
    let (report, _) = run_benchmark(&cfg).unwrap();
    let test = |m: Method| {
        report
            .methods
            .iter()
            .find(|r| r.method == m)
            .unwrap()
            .summary["test"]
            .clone()
    };
    let (tnn, ann) = (test(Method::Tnn), test(Method::Ann));
    let se = tnn.std_error.unwrap_or(0.0);
    let combined = (se * se + PAPER_SE * PAPER_SE).sqrt();
    let close = (tnn.mean - PAPER_MEAN).abs() <= 3.0 * combined;
    let ordered = tnn.mean < ann.mean;
    outcome(
        close && ordered && tnn.count == 5 && ann.count == 5,
        format!(
            "TNN {:.4} ± {:.4} (target {PAPER_MEAN} within {:.4}), ANN {:.4} ± {:.4}",
            tnn.mean,
            se,
            3.0 * combined,
            ann.mean,
            ann.std_error.unwrap_or(0.0)
        ),
    )
}

fn data_size_sweep() -> Outcome {
    let mut cfg = desk_config(1000);
    cfg.repetitions = 3;
    cfg.sizes = vec![100, 300, 1000, 3000];
    let (report, _) = run_datasweep(&cfg).unwrap();
    let series = |m: Method| -> Vec<(f64, f64)> {
        report
            .rows
            .iter()
            .map(|row| {
                let s = &row.methods.iter().find(|r| r.method == m).unwrap().summary["test"];
                (s.mean, s.std_error.unwrap_or(0.0))
            })
            .collect()
    };
    let (tnn, ann) = (series(Method::Tnn), series(Method::Ann));
    let monotone = |s: &[(f64, f64)]| {
        let rises: Vec<(f64, f64)> = s
            .windows(2)
            .filter(|w| w[1].0 > w[0].0)
            .map(|w| (w[1].0 - w[0].0, (w[0].1.powi(2) + w[1].1.powi(2)).sqrt()))
            .collect();
        rises.is_empty() || (rises.len() == 1 && rises[0].0 <= rises[0].1)
    };
    let beats = tnn.iter().zip(&ann).all(|(t, a)| t.0 <= a.0);
    let fmt = |s: &[(f64, f64)]| {
        s.iter()
            .map(|p| format!("{:.4}", p.0))
            .collect::<Vec<_>>()
            .join("/")
    };
    outcome(
        monotone(&tnn) && monotone(&ann) && beats,
        format!("n=100/300/1000/3000: TNN {} ANN {}", fmt(&tnn), fmt(&ann)),
    )
}

fn extrapolation_run() -> &'static UncertaintyReport {
    static REPORT: OnceLock<UncertaintyReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let mut cfg = desk_config(1000);
        cfg.methods = vec![Method::Tnn];
        cfg.repetitions = 1;
        cfg.split.kind = SplitKind::extrapolation();
        run_uncertainty(&cfg).unwrap().0
    })
}

fn extrapolation_ordering() -> Outcome {
    let r = extrapolation_run();
    let s = &r.methods[0].summary;
    let (train, tin, tout) = (s["train"].mean, s["test_in"].mean, s["test_out"].mean);
    let ratio = tout / tin;
    outcome(
        train < tin && tin < tout && ratio > 3.0,
        format!("train {train:.4} < test_in {tin:.4} < test_out {tout:.4}, out/in {ratio:.1}"),
    )
}

fn uncertainty_separation() -> Outcome {
    let r = extrapolation_run();
    let median = |subset: &str| {
        r.medians
            .iter()
            .find(|m| m.method == Method::Tnn && m.estimator == "sigma_pred" && m.subset == subset)
            .map(|m| m.median)
            .unwrap_or(f64::NAN)
    };
    let (tin, tout) = (median("test_in"), median("test_out"));
    let fit = r
        .fits
        .iter()
        .find(|f| f.method == Method::Tnn && f.estimator == "sigma_pred")
        .and_then(|f| f.fit);
    let alpha = fit.map(|f| f.exponent).unwrap_or(f64::NAN);
    outcome(
        tout > tin && alpha > 0.0,
        format!(
            "median sigma_pred test_out {tout:.4} > test_in {tin:.4}, fitted exponent {alpha:.2}"
        ),
    )
}

fn generator_fidelity() -> Outcome {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let noiseless = |kind| generate(&GeneratorSpec::new(kind, 10_000, 41).noiseless()).unwrap();

    let rp = noiseless(GeneratorKind::Rp);
    let coef = RandomPolynomial::from_seed(41);
    let rp_err =
        rp.x.iter_rows()
            .zip(&rp.y)
            .map(|(x, &y)| {
                let mut want = coef.constant;
                for i in 0..5 {
                    want += coef.linear[i] * x[i];
                    for j in i..5 {
                        want += coef.quad[i][j] * x[i] * x[j];
                    }
                }
                rel(y, want)
            })
            .fold(0.0, f64::max);

    let rcl = noiseless(GeneratorKind::Rcl);
    let rcl_err = rcl
        .x
        .iter_rows()
        .zip(&rcl.y)
        .map(|(p, &y)| {
            let (v0, w, t, r, l, c) = (p[0], p[1], p[2], p[3], p[4], p[5]);
            let x = w * l - 1.0 / (w * c);
            rel(y, v0 * (w * t).cos() / (r * r + x * x).sqrt())
        })
        .fold(0.0, f64::max);

    let wsb = noiseless(GeneratorKind::Wsb);
    let wsb_err = wsb
        .x
        .iter_rows()
        .zip(&wsb.y)
        .map(|(p, &y)| rel(y, p[0] * (p[2] / (p[1] + p[2]) - p[3] / (p[2] + p[3]))))
        .fold(0.0, f64::max);

    let l = 20usize;
    let ising = generate(&GeneratorSpec::new(GeneratorKind::Ising, 100, 41)).unwrap();
    let ising_mismatch = ising
        .x
        .iter_rows()
        .zip(&ising.y)
        .filter(|(s, &y)| {
            let mut sum = 0.0;
            for r in 0..l {
                for c in 0..l {
                    let here = s[r * l + c];
                    for (dr, dc) in [(1, 0), (l - 1, 0), (0, 1), (0, l - 1)] {
                        sum += here * s[((r + dr) % l) * l + (c + dc) % l];
                    }
                }
            }
            y != -sum / 2.0
        })
        .count();

    let tol = 1e-12;
    outcome(
        rp_err < tol && rcl_err < tol && wsb_err < tol && ising_mismatch == 0,
        format!(
            "10^4 draws: RP {rp_err:.1e}, RCL {rcl_err:.1e}, WSB {wsb_err:.1e}; Ising 100 configs, {ising_mismatch} mismatches"
        ),
    )
}

fn determinism_and_serialization() -> Outcome {
    let mut cfg = ExperimentConfig::new(DatasetSpec::Generator(GeneratorSpec::new(
        GeneratorKind::Wsb,
        120,
        5,
    )));
    cfg.repetitions = 3;
    cfg.hidden = vec![16, 16];
    cfg.train.max_epochs = 10;
    cfg.train.steps_per_epoch = Some(100);
    cfg.master_seed = 99;
    let first = to_json_pretty(&run_benchmark(&cfg).unwrap().0).unwrap();
    let second = to_json_pretty(&run_benchmark(&cfg).unwrap().0).unwrap();
    let same_report = first == second;

    let data = generate(&GeneratorSpec::new(GeneratorKind::Rcl, 80, 6)).unwrap();
    let (train, val) = (
        data.subset(&(0..60).collect::<Vec<_>>()),
        data.subset(&(60..80).collect::<Vec<_>>()),
    );
    let tc = TrainConfig {
        max_epochs: 3,
        steps_per_epoch: Some(50),
        ..TrainConfig::default()
    };
    let (twin, _) = train_twin(&train, &val, &[16, 16], &tc).unwrap();
    let (ann, _) = train_ann(&train, &val, &[16, 16], &tc).unwrap();
    let (twin32, _) = train_twin(&train.cast::<f32>(), &val.cast::<f32>(), &[8], &tc).unwrap();
    let round_trip = |m: SavedModel<f64>| {
        let text = to_json(&m).unwrap();
        let back: SavedModel<f64> = from_json(&text).unwrap();
        back == m && to_json(&back).unwrap() == text
    };
    let m32 = SavedModel::Twin(twin32);
    let text32 = to_json(&m32).unwrap();
    let ok32 = from_json::<f32>(&text32).unwrap() == m32;
    let models = round_trip(SavedModel::Twin(twin)) && round_trip(SavedModel::Ann(ann)) && ok32;
    outcome(
        same_report && models,
        format!("benchmark reports identical: {same_report}; twin, ANN and f32 twin containers round-trip: {models}"),
    )
}

fn main() -> ExitCode {
    let only: Option<BTreeSet<u32>> = std::env::var("TNNR_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria: [(u32, &str, Check); 10] = [
        (1, "gradient oracle", gradient_oracle),
        (2, "pair stream exactness", pair_stream_exactness),
        (3, "antisymmetrization invariance", antisymmetry_invariance),
        (4, "oracle difference function", oracle_equivalence),
        (5, "RP accuracy", rp_accuracy),
        (6, "data-size sweep", data_size_sweep),
        (7, "extrapolation ordering", extrapolation_ordering),
        (8, "uncertainty separation", uncertainty_separation),
        (9, "generator fidelity", generator_fidelity),
        (
            10,
            "determinism and serialization",
            determinism_and_serialization,
        ),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {verdict} {name}: {} [{:.1}s]",
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
