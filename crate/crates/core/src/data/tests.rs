use std::fs;

use proptest::prelude::*;

use super::*;
use crate::seed;

fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn small_csv_loads_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        &dir,
        "a.csv",
        "a,b,target\n1,2.5,3\n-4,0.125,6\n7,8,-9.75\n",
    );
    let d: Dataset<f64> = load_csv(&p, "target").unwrap();
    assert_eq!(d.len(), 3);
    assert_eq!(d.dim(), 2);
    assert_eq!(d.x.as_slice(), &[1.0, 2.5, -4.0, 0.125, 7.0, 8.0]);
    assert_eq!(d.y, vec![3.0, 6.0, -9.75]);
    assert_eq!(d.feature_names, vec!["a", "b"]);
}

#[test]
fn target_column_may_be_anywhere() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "a.csv", "y,a,b\n1,2,3\n");
    let d: Dataset<f64> = load_csv(&p, "y").unwrap();
    assert_eq!(d.x.as_slice(), &[2.0, 3.0]);
    assert_eq!(d.y, vec![1.0]);
}

#[test]
fn header_only_is_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "h.csv", "a,b,y\n");
    let err = load_csv::<f64>(&p, "y").unwrap_err();
    assert!(err.to_string().contains("empty dataset"), "{err}");
}

#[test]
fn non_numeric_cell_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "bad.csv", "a,b,y\n1,2,3\n4,oops,6\n");
    match load_csv::<f64>(&p, "y").unwrap_err() {
        Error::Parse { row, column, .. } => assert_eq!((row, column), (3, 2)),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn missing_target_column_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "a.csv", "a,b\n1,2\n");
    let err = load_csv::<f64>(&p, "price").unwrap_err();
    assert!(err.to_string().contains("price"));
}

#[test]
fn boston_shaped_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut body: String = (1..=13).map(|i| format!("f{i},")).collect();
    body.push_str("medv\n");
    for r in 0..506 {
        let row: Vec<String> = (0..14).map(|c| format!("{}", r * 14 + c)).collect();
        body.push_str(&row.join(","));
        body.push('\n');
    }
    let p = write(&dir, "bh.csv", &body);
    let d: Dataset<f64> = load_csv(&p, "medv").unwrap();
    assert_eq!((d.len(), d.dim()), (506, 13));
}

#[test]
fn generated_dataset_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [GeneratorKind::Rp, GeneratorKind::Rcl, GeneratorKind::Wsb] {
        let d = generate(&GeneratorSpec::new(kind, 50, 3)).unwrap();
        let p = dir.path().join("g.csv");
        d.save_csv(&p).unwrap();
        let back: Dataset<f64> = load_csv(&p, &d.target_name).unwrap();
        assert_eq!(back.x, d.x);
        assert_eq!(back.y, d.y);
        assert_eq!(back.feature_names, d.feature_names);
    }
}

#[test]
fn normalizer_examples() {
    let x = Matrix::from_rows(&[vec![0.0], vec![10.0]]).unwrap();
    let n = Normalizer::fit(&x).unwrap();
    assert_eq!(n.apply(&x).unwrap().as_slice(), &[-1.0, 1.0]);
    assert_eq!(n.apply_row(&[20.0]).unwrap(), vec![3.0]);

    let z = n.apply(&x).unwrap();
    let again = Normalizer::fit(&z).unwrap();
    assert_eq!(again.apply(&z).unwrap(), z);

    let c = Matrix::from_rows(&[vec![4.0], vec![4.0]]).unwrap();
    let nc = Normalizer::fit(&c).unwrap();
    assert_eq!(nc.apply_row(&[4.0]).unwrap(), vec![0.0]);
    assert_eq!(nc.apply_row(&[9.0]).unwrap(), vec![0.0]);
}

proptest! {
    #[test]
    fn normalized_training_columns_span_exactly_unit_interval(
        vals in prop::collection::vec(-1e6f64..1e6, 2..40)
    ) {
        let rows: Vec<Vec<f64>> = vals.iter().map(|&v| vec![v, 3.0 * v - 1.0]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let n = Normalizer::fit(&x).unwrap();
        let z = n.apply(&x).unwrap();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (i, &v) in vals.iter().enumerate() {
            let zi = z.get(i, 0);
            prop_assert!((-1.0..=1.0).contains(&zi));
            if lo < hi {
                if v == lo { prop_assert_eq!(zi, -1.0); }
                if v == hi { prop_assert_eq!(zi, 1.0); }
            }
        }
    }

    #[test]
    fn split_partitions_indices(n in 40usize..300, s in any::<u64>(), threshold in any::<bool>()) {
        let y: Vec<f64> = (0..n).map(|i| ((i * 7919) % 101) as f64).collect();
        let kind = if threshold { SplitKind::extrapolation() } else { SplitKind::standard() };
        let sp = split(&y, &SplitSpec { kind, seed: s }).unwrap();
        let mut all: Vec<usize> = sp.named().iter().flat_map(|(_, v)| v.iter().copied()).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn random_split_sizes() {
    let y = vec![0.0f64; 100];
    let sp = split(
        &y,
        &SplitSpec {
            kind: SplitKind::standard(),
            seed: 1,
        },
    )
    .unwrap();
    assert_eq!((sp.train.len(), sp.val.len(), sp.test.len()), (90, 5, 5));
    let again = split(
        &y,
        &SplitSpec {
            kind: SplitKind::standard(),
            seed: 1,
        },
    )
    .unwrap();
    assert_eq!(sp, again);
    let other = split(
        &y,
        &SplitSpec {
            kind: SplitKind::standard(),
            seed: 2,
        },
    )
    .unwrap();
    assert_ne!(sp.train, other.train);
}

#[test]
fn threshold_split_sizes_and_cut() {
    let y: Vec<f64> = (0..200).map(|i| ((i * 37) % 200) as f64).collect();
    let sp = split(
        &y,
        &SplitSpec {
            kind: SplitKind::extrapolation(),
            seed: 4,
        },
    )
    .unwrap();
    assert_eq!(sp.test_out.len(), 50);
    assert_eq!(sp.train.len(), 100);
    assert_eq!(sp.val.len(), 20);
    assert_eq!(sp.test.len(), 30);
    let min_out = sp
        .test_out
        .iter()
        .map(|&i| y[i])
        .fold(f64::INFINITY, f64::min);
    for &i in sp.train.iter().chain(&sp.val).chain(&sp.test) {
        assert!(y[i] < min_out);
    }
}

#[test]
fn invalid_split_specs_fail() {
    let y = vec![0.0f64; 10];
    let bad = SplitSpec {
        kind: SplitKind::Random {
            train: 0.8,
            val: 0.1,
            test: 0.2,
        },
        seed: 0,
    };
    assert!(matches!(split(&y, &bad), Err(Error::Config(_))));
    let tiny = vec![0.0f64; 3];
    assert!(matches!(
        split(
            &tiny,
            &SplitSpec {
                kind: SplitKind::standard(),
                seed: 0
            }
        ),
        Err(Error::Data(_))
    ));
    let nan = vec![0.0, f64::NAN, 1.0, 2.0];
    assert!(matches!(
        split(
            &nan,
            &SplitSpec {
                kind: SplitKind::extrapolation(),
                seed: 0
            }
        ),
        Err(Error::Data(_))
    ));
}

#[test]
fn zero_polynomial_is_constant() {
    let p = RandomPolynomial {
        quad: [[0.0; 5]; 5],
        linear: [0.0; 5],
        constant: 0.37,
    };
    let (_, y) = p.sample(25, 0.0, &mut seed::rng(0));
    assert!(y.iter().all(|&v| v == 0.37));
}

#[test]
fn generators_are_deterministic_and_sized() {
    let a = generate(&GeneratorSpec::new(GeneratorKind::Rp, 2, 11)).unwrap();
    let b = generate(&GeneratorSpec::new(GeneratorKind::Rp, 2, 11)).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.len(), a.dim()), (2, 5));
    for (kind, n, d) in [
        (GeneratorKind::Rp, 1000, 5),
        (GeneratorKind::Rcl, 4000, 6),
        (GeneratorKind::Wsb, 200, 4),
        (GeneratorKind::Ising, 20, 400),
    ] {
        let ds = generate(&GeneratorSpec::new(kind, n, 0)).unwrap();
        assert_eq!((ds.len(), ds.dim()), (n, d));
    }
    assert!(generate(&GeneratorSpec::new(GeneratorKind::Wsb, 0, 0)).is_err());
}

#[test]
fn rp_coefficients_shared_across_draws() {
    let spec = GeneratorSpec::new(GeneratorKind::Rp, 30, 5);
    let poly = RandomPolynomial::from_seed(5);
    for draw in 0..3 {
        let d = generate_draw(&spec, draw).unwrap();
        for (row, &y) in d.x.iter_rows().zip(&d.y) {
            assert_eq!(poly.eval(row), y);
        }
    }
    assert_ne!(
        generate_draw(&spec, 0).unwrap().x,
        generate_draw(&spec, 1).unwrap().x
    );
}

#[test]
fn rcl_closed_form_cases() {
    // Resonance: ωL = 1/(ωC) with ω=1, L=C=1.
    assert_eq!(
        RclCircuit::current(1.5, 1.0, 0.0, 0.75, 1.0, 1.0),
        1.5 / 0.75
    );
    assert_eq!(RclCircuit::current(0.0, 2.0, 0.3, 1.0, 1.0, 1.0), 0.0);
}

#[test]
fn wheatstone_closed_form_cases() {
    assert_eq!(Wheatstone::voltage(1.0, 1.0, 1.0, 1.0), 0.0);
    assert_eq!(Wheatstone::voltage(0.0, 0.7, 1.3, 2.0), 0.0);
}

#[test]
fn noisy_generators_add_unit_scale_noise() {
    let spec = GeneratorSpec::new(GeneratorKind::Wsb, 4000, 8);
    let d = generate(&spec).unwrap();
    let resid: Vec<f64> =
        d.x.iter_rows()
            .zip(&d.y)
            .map(|(r, &y)| y - Wheatstone::voltage(r[0], r[1], r[2], r[3]))
            .collect();
    let s = crate::stats::sample_std(&resid).unwrap();
    assert!((s - 0.1).abs() < 0.01, "noise std {s}");
}

#[test]
fn ising_reference_configurations() {
    let l = 20;
    let up = vec![1.0; l * l];
    assert_eq!(ising_energy(&up, l), -800.0);
    let mut flipped = up.clone();
    flipped[7 * l + 3] = -1.0;
    assert_eq!(ising_energy(&flipped, l) - ising_energy(&up, l), 8.0);
    let checker: Vec<f64> = (0..l * l)
        .map(|k| if (k / l + k % l) % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    assert_eq!(ising_energy(&checker, l), 800.0);
}
