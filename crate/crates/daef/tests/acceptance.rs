//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured figures (visible with `--nocapture`). Tolerances are pinned
//! constants; nothing is tuned at runtime.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::{max_principal_angle, random_matrix, uneven_blocks};

use daef::anomaly::{self, CvConfig, ThresholdSpec};
use daef::data::{self, LabeledDataset};
use daef::federation::{self, Broker, FedMode, FedSession};
use daef::linalg::{dsvd_merge, svd_thin, truncate, Matrix};
use daef::model::{self, Architecture, DaefModel};
use daef::rng::SplitMix64;
use daef::rolann::{self, Activation};

/// Federated weights vs centralized training, absolute.
const FEDERATED_EQUALITY_TOL: f64 = 1e-7;
/// Chunked-merge solve vs whole-data solve, absolute in the weights.
const INCREMENTAL_EQUALITY_TOL: f64 = 1e-8;
/// Merged vs direct singular values, relative.
const DSVD_SPECTRUM_REL_TOL: f64 = 1e-9;
/// Largest principal angle between merged and direct subspaces (radians).
const DSVD_ANGLE_TOL: f64 = 1e-7;
/// Directions below this fraction of the leading singular value are noise.
const NEGLIGIBLE_DIRECTION: f64 = 1e-8;
/// Closed-form solve vs explicit normal-equations oracle, absolute.
const SOLVER_ORACLE_TOL: f64 = 1e-8;
/// Benchmark gate: mean tenfold F1 for the two desk-scale datasets.
const BENCHMARK_MIN_F1: f64 = 0.80;

fn arch(sizes: &[usize], seed: u64) -> Architecture {
    Architecture {
        layer_sizes: sizes.to_vec(),
        hidden_activation: Activation::Sigmoid,
        lambda_hidden: 0.3,
        lambda_last: 0.3,
        clamp_eps: 1e-3,
        init_seed: seed,
    }
}

#[test]
fn criterion_1_layer_sync_federation_equals_centralized() {
    let started = Instant::now();
    let mut rng = SplitMix64::new(0xAC01);
    // Benchmark-style layer progressions at three input widths.
    let shapes: [&[usize]; 3] = [&[5, 2, 3, 5], &[10, 2, 4, 6, 8, 10], &[30, 8, 14, 30]];
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for sizes in shapes {
        for &n in &[50usize, 500] {
            let x = random_matrix(&mut rng, sizes[0], n);
            let a = arch(sizes, 0xFED ^ n as u64);
            let centralized = model::train(&x, &a, 1, 1).unwrap();
            for &nodes in &[1usize, 2, 4] {
                let broker = Broker::new();
                let session = FedSession::new(
                    &format!("acc1-{}-{n}-{nodes}", sizes[0]),
                    a.clone(),
                    FedMode::LayerSync,
                    nodes,
                );
                let blocks: Vec<Option<Matrix>> =
                    uneven_blocks(&x, nodes).into_iter().map(Some).collect();
                let global = federation::run_layer_sync(&session, &broker, &blocks).unwrap();
                let delta = centralized.max_weight_delta(&global);
                assert!(
                    delta < FEDERATED_EQUALITY_TOL,
                    "m0={} n={n} nodes={nodes}: delta {delta:.3e}",
                    sizes[0]
                );
                worst = worst.max(delta);
                runs += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!(
        "criterion 1 (federated = centralized): PASS — {runs} sessions, worst delta {worst:.3e} < {FEDERATED_EQUALITY_TOL:.0e}, {elapsed:.2?}"
    );
}

#[test]
fn criterion_2_incremental_equals_batch() {
    let started = Instant::now();
    let mut rng = SplitMix64::new(0xAC02);
    let mut worst: f64 = 0.0;
    for problem in 0..50 {
        let dim = 2 + rng.uniform_usize(6);
        let n = 21 + rng.uniform_usize(40);
        let x = random_matrix(&mut rng, dim, n);
        let act = [Activation::Linear, Activation::Sigmoid, Activation::Tanh][problem % 3];
        let desired: Vec<f64> = (0..n)
            .map(|_| match act {
                Activation::Sigmoid => rng.uniform(0.05, 0.95),
                _ => rng.uniform(-0.9, 0.9),
            })
            .collect();
        let lambda = rng.uniform(1e-3, 1.0);

        let whole =
            rolann::compute_partial(&rolann::make_workset(&x, &desired, act, 1e-3).unwrap())
                .unwrap();
        let w_batch = rolann::solve_weights(&whole, lambda).unwrap();

        for &chunks in &[2usize, 3, 7] {
            let mut merged: Option<rolann::RolannPartial> = None;
            let mut start = 0;
            for c in 0..chunks {
                let width = n / chunks + usize::from(c < n % chunks);
                let idx: Vec<usize> = (start..start + width).collect();
                start += width;
                let xs = x.select_columns(&idx).unwrap();
                let ds: Vec<f64> = idx.iter().map(|&i| desired[i]).collect();
                let part =
                    rolann::compute_partial(&rolann::make_workset(&xs, &ds, act, 1e-3).unwrap())
                        .unwrap();
                merged = Some(match merged {
                    None => part,
                    Some(acc) => rolann::merge_partials(&acc, &part).unwrap(),
                });
            }
            let w_inc = rolann::solve_weights(&merged.unwrap(), lambda).unwrap();
            let delta = w_batch
                .iter()
                .zip(&w_inc)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(
                delta < INCREMENTAL_EQUALITY_TOL,
                "problem {problem} chunks {chunks}: delta {delta:.3e}"
            );
            worst = worst.max(delta);
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!(
        "criterion 2 (incremental = batch): PASS — 50 problems x 3 chunkings, worst delta {worst:.3e} < {INCREMENTAL_EQUALITY_TOL:.0e}, {elapsed:.2?}"
    );
}

#[test]
fn criterion_3_distributed_svd_oracle() {
    let started = Instant::now();
    let mut rng = SplitMix64::new(0xAC03);
    let mut worst_rel: f64 = 0.0;
    let mut worst_angle: f64 = 0.0;
    for trial in 0..100 {
        let rows = 3 + rng.uniform_usize(10);
        let cols = rows + 2 + rng.uniform_usize(30);
        let x = random_matrix(&mut rng, rows, cols);
        let parts = [2, 3, 5][trial % 3];
        let blocks = uneven_blocks(&x, parts);
        let merged = dsvd_merge(
            &blocks
                .iter()
                .map(|b| svd_thin(b).unwrap())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let direct = svd_thin(&x).unwrap();

        let floor = NEGLIGIBLE_DIRECTION * direct.s[0];
        for (i, (m, d)) in merged.s.iter().zip(&direct.s).enumerate() {
            if *d > floor {
                let rel = (m - d).abs() / d;
                assert!(
                    rel < DSVD_SPECTRUM_REL_TOL,
                    "trial {trial} s[{i}]: rel {rel:.3e}"
                );
                worst_rel = worst_rel.max(rel);
            } else {
                assert!((m - d).abs() < DSVD_SPECTRUM_REL_TOL * direct.s[0]);
            }
        }
        let keep = direct.rank_above(floor);
        let angle = max_principal_angle(
            &truncate(&direct, keep).unwrap().u,
            &truncate(&merged, keep).unwrap().u,
        );
        assert!(angle < DSVD_ANGLE_TOL, "trial {trial}: angle {angle:.3e}");
        worst_angle = worst_angle.max(angle);
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!(
        "criterion 3 (distributed SVD oracle): PASS — 100 matrices, worst rel {worst_rel:.3e} < {DSVD_SPECTRUM_REL_TOL:.0e}, worst angle {worst_angle:.3e} < {DSVD_ANGLE_TOL:.0e}, {elapsed:.2?}"
    );
}

/// Independent route: assemble X F² Xᵀ + λI explicitly and solve by Gaussian
/// elimination with partial pivoting.
fn normal_equations_oracle(ws: &rolann::RolannWorkset, lambda: f64) -> Vec<f64> {
    let x = &ws.inputs_aug;
    let dim = x.rows();
    let mut a = vec![vec![0.0; dim]; dim];
    let mut b = vec![0.0; dim];
    for k in 0..x.cols() {
        let f2 = ws.f_prime[k] * ws.f_prime[k];
        for i in 0..dim {
            b[i] += x[(i, k)] * f2 * ws.d_bar[k];
            for j in 0..dim {
                a[i][j] += x[(i, k)] * f2 * x[(j, k)];
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += lambda;
    }
    for col in 0..dim {
        let pivot = (col..dim)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..dim {
            let factor = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (k, pv) in pivot_row.iter().enumerate().skip(col) {
                a[row][k] -= factor * pv;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut w = vec![0.0; dim];
    for row in (0..dim).rev() {
        let mut acc = b[row];
        for k in row + 1..dim {
            acc -= a[row][k] * w[k];
        }
        w[row] = acc / a[row][row];
    }
    w
}

#[test]
fn criterion_4_closed_form_solver_oracle() {
    let mut rng = SplitMix64::new(0xAC04);
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for act in [Activation::Linear, Activation::Sigmoid, Activation::Tanh] {
        for &lambda in &[1e-3, 0.1, 0.9] {
            for _ in 0..10 {
                let dim = 2 + rng.uniform_usize(6);
                let n = dim + 10 + rng.uniform_usize(40);
                let x = random_matrix(&mut rng, dim, n);
                let desired: Vec<f64> = (0..n)
                    .map(|_| match act {
                        Activation::Sigmoid => rng.uniform(0.05, 0.95),
                        _ => rng.uniform(-0.9, 0.9),
                    })
                    .collect();
                let ws = rolann::make_workset(&x, &desired, act, 1e-3).unwrap();
                let partial = rolann::compute_partial(&ws).unwrap();
                let solved = rolann::solve_weights(&partial, lambda).unwrap();
                let oracle = normal_equations_oracle(&ws, lambda);
                let delta = solved
                    .iter()
                    .zip(&oracle)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                assert!(
                    delta < SOLVER_ORACLE_TOL,
                    "{act:?} lambda {lambda}: delta {delta:.3e}"
                );
                worst = worst.max(delta);
                checks += 1;
            }
        }
    }
    println!(
        "criterion 4 (closed-form solver oracle): PASS — {checks} solves across 3 activations x 3 lambdas, worst delta {worst:.3e} < {SOLVER_ORACLE_TOL:.0e}"
    );
}

fn data_dir() -> PathBuf {
    match std::env::var_os("DAEF_DATA_DIR") {
        Some(dir) => PathBuf::from(dir),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

fn load_benchmark(name: &str, expected: (usize, usize, usize)) -> LabeledDataset {
    let path = data_dir().join(format!("{name}.csv"));
    let manifest = data::DatasetManifest {
        name: name.to_string(),
        label_column: data::LabelColumn::Name("label".into()),
        anomaly_value: "1".into(),
        expected: Some(data::ExpectedCounts {
            n: expected.0,
            dim: expected.1,
            anomalies: expected.2,
        }),
    };
    let (ds, warnings) = data::load_with_manifest(&path, &manifest)
        .unwrap_or_else(|e| panic!("loading {}: {e}", path.display()));
    for w in warnings {
        eprintln!("note: {w} (mirror drift; evaluation proceeds)");
    }
    ds
}

#[test]
fn criterion_5_benchmark_reproduction_desk_scale() {
    let dir = data_dir();
    let missing: Vec<&str> = ["ionosphere", "cardio"]
        .into_iter()
        .filter(|n| !dir.join(format!("{n}.csv")).exists())
        .collect();
    assert!(
        missing.is_empty(),
        "criterion 5: FAIL — benchmark dataset(s) {missing:?} not found under {}.\n\
         This build environment has no route to the public dataset mirrors, so the\n\
         files cannot be fetched here. Where network access exists, run\n\
         `python3 tools/fetch_datasets.py --out {}` (see README) and re-run this test.",
        dir.display(),
        dir.display(),
    );

    // Mirrors drift: some drop constant columns relative to the originally
    // reported feature counts. The benchmark architecture keeps its hidden
    // widths and takes its input/output width from the data actually loaded.
    let fit_width = |sizes: &[usize], dim: usize| {
        let mut adapted = sizes.to_vec();
        adapted[0] = dim;
        *adapted.last_mut().unwrap() = dim;
        adapted
    };

    // Ionosphere: [33, 8, 14, 33], hidden lambda 0.01, output lambda 0.8,
    // extreme-IQR threshold.
    let started = Instant::now();
    let ds = load_benchmark("ionosphere", (351, 33, 126));
    let mut a = arch(&fit_width(&[33, 8, 14, 33], ds.dim()), 7);
    a.lambda_hidden = 0.01;
    a.lambda_last = 0.8;
    let cv = CvConfig {
        folds: 10,
        seed: 7,
        partitions: 1,
        workers: 1,
    };
    let report = anomaly::evaluate_cv(&ds, &a, &ThresholdSpec::ExtremeIqr, &cv).unwrap();
    let iono_f1 = report.mean_f1;
    let iono_std = report.std_f1;
    let iono_elapsed = started.elapsed();
    assert!(
        iono_elapsed < Duration::from_secs(120),
        "ionosphere took {iono_elapsed:?}"
    );
    assert!(
        iono_f1 >= BENCHMARK_MIN_F1,
        "ionosphere mean F1 {iono_f1:.3} below {BENCHMARK_MIN_F1}"
    );

    // Cardio: [21, 4, 8, 12, 16, 21], both lambdas 0.9, 90th-percentile
    // threshold.
    let started = Instant::now();
    let ds = load_benchmark("cardio", (1831, 21, 176));
    let mut a = arch(&fit_width(&[21, 4, 8, 12, 16, 21], ds.dim()), 7);
    a.lambda_hidden = 0.9;
    a.lambda_last = 0.9;
    let report = anomaly::evaluate_cv(&ds, &a, &ThresholdSpec::Percentile { q: 0.9 }, &cv).unwrap();
    let cardio_f1 = report.mean_f1;
    let cardio_std = report.std_f1;
    let cardio_elapsed = started.elapsed();
    assert!(
        cardio_elapsed < Duration::from_secs(120),
        "cardio took {cardio_elapsed:?}"
    );
    assert!(
        cardio_f1 >= BENCHMARK_MIN_F1,
        "cardio mean F1 {cardio_f1:.3} below {BENCHMARK_MIN_F1}"
    );

    // Large sets: pipeline-health smoke, one fold on a 10% subsample when
    // the file is present; their scores are not gated.
    let mut smoke_notes = Vec::new();
    for (name, expected, sizes, lh, ll, spec) in [
        (
            "creditcard",
            (284807, 29, 492),
            &[29usize, 15, 18, 21, 24, 27, 29][..],
            0.8,
            0.9,
            ThresholdSpec::ExtremeIqr,
        ),
        (
            "covertype",
            (286048, 10, 2747),
            &[10usize, 2, 4, 6, 8, 10][..],
            0.7,
            0.1,
            ThresholdSpec::Percentile { q: 0.9 },
        ),
    ] {
        if !dir.join(format!("{name}.csv")).exists() {
            smoke_notes.push(format!("{name}: absent, smoke skipped"));
            continue;
        }
        let ds = load_benchmark(name, expected);
        let keep: Vec<usize> = (0..ds.len()).filter(|i| i % 10 == 0).collect();
        let sub = LabeledDataset::new(
            ds.features.select_columns(&keep).unwrap(),
            keep.iter().map(|&i| ds.labels[i]).collect(),
            format!("{name}-10pct"),
        )
        .unwrap();
        let mut a = arch(&fit_width(sizes, sub.dim()), 7);
        a.lambda_hidden = lh;
        a.lambda_last = ll;
        let assignment = data::split_folds(&sub, 10, 7).unwrap();
        let train_idx: Vec<usize> = (0..sub.len())
            .filter(|&i| assignment[i] != 0 && !sub.labels[i])
            .collect();
        // Balanced test, same construction as the full protocol.
        let anomalies: Vec<usize> = (0..sub.len())
            .filter(|&i| assignment[i] == 0 && sub.labels[i])
            .collect();
        let mut normals: Vec<usize> = (0..sub.len())
            .filter(|&i| assignment[i] == 0 && !sub.labels[i])
            .collect();
        let mut rng = SplitMix64::new(7);
        rng.shuffle(&mut normals);
        normals.truncate(anomalies.len());
        let mut test_idx = anomalies;
        test_idx.extend(normals);
        let outcome = anomaly::evaluate_fold(&sub, &train_idx, &test_idx, &a, &spec, &cv).unwrap();
        smoke_notes.push(format!(
            "{name}: smoke fold F1 {:.3} (not gated)",
            outcome.f1
        ));
    }

    println!(
        "criterion 5 (benchmark reproduction): PASS — ionosphere F1 {iono_f1:.3}±{iono_std:.3} ({iono_elapsed:.1?}), cardio F1 {cardio_f1:.3}±{cardio_std:.3} ({cardio_elapsed:.1?}), gate {BENCHMARK_MIN_F1}; {}",
        smoke_notes.join("; ")
    );
}

/// Not a gated criterion: on real benchmark data, a model trained on normal
/// samples keeps most held-out normals under the extreme-IQR threshold.
/// Skips quietly when the data files are absent (the gated benchmark test
/// already fails loudly in that case).
#[test]
fn held_out_normals_rarely_exceed_extreme_iqr() {
    let path = data_dir().join("cardio.csv");
    if !path.exists() {
        eprintln!("note: cardio.csv absent; held-out exceedance check skipped");
        return;
    }
    let ds = load_benchmark("cardio", (1831, 21, 176));
    let normals: Vec<usize> = (0..ds.len()).filter(|&i| !ds.labels[i]).collect();
    let (train_idx, held_out) = normals.split_at(normals.len() * 4 / 5);

    let x_train_raw = ds.features.select_columns(train_idx).unwrap();
    let scaler = data::scaler_fit(&x_train_raw).unwrap();
    let x_train = data::scaler_apply(&scaler, &x_train_raw).unwrap();
    let mut a = arch(&[21, 4, 8, 12, 16, 21], 7);
    a.lambda_hidden = 0.9;
    a.lambda_last = 0.9;
    let model = model::train(&x_train, &a, 1, 1).unwrap();
    let train_errors = anomaly::reconstruction_errors(&model, &x_train).unwrap();
    let mu = anomaly::fit_threshold(&train_errors, &ThresholdSpec::ExtremeIqr).unwrap();

    let x_held_raw = ds.features.select_columns(held_out).unwrap();
    let x_held = data::scaler_apply(&scaler, &x_held_raw).unwrap();
    let errors = anomaly::reconstruction_errors(&model, &x_held).unwrap();
    let exceeding = errors.iter().filter(|&&e| e > mu).count();
    let fraction = exceeding as f64 / errors.len() as f64;
    assert!(
        fraction < 0.05,
        "{exceeding}/{} held-out normals exceed the extreme-IQR threshold",
        errors.len()
    );
    println!(
        "held-out exceedance: {exceeding}/{} normals above extreme-IQR ({:.2}%)",
        errors.len(),
        100.0 * fraction
    );
}

#[test]
fn criterion_6_training_speed_bound() {
    // Benchmark-scale problem: 21 features x 1600 samples, five-layer
    // architecture, one partition, one worker.
    let mut rng = SplitMix64::new(0xAC06);
    let x = random_matrix(&mut rng, 21, 1600);
    let mut a = arch(&[21, 4, 8, 12, 16, 21], 7);
    a.lambda_hidden = 0.9;
    a.lambda_last = 0.9;
    let started = Instant::now();
    let model = model::train(&x, &a, 1, 1).unwrap();
    let elapsed = started.elapsed();
    assert_eq!(model.decoder_weights.len(), 4);
    assert!(
        elapsed < Duration::from_secs(10),
        "single-threaded training took {elapsed:?}"
    );
    println!(
        "criterion 6 (training speed bound): PASS — 21x1600 single-threaded training in {elapsed:.2?} < 10 s (upper bound only, not hardware-comparable)"
    );
}

#[test]
fn criterion_7_threshold_fixtures() {
    // Hand-computed: sorted [1,2,3,4,100] has Q1=2, Q3=4, IQR=2.
    let errors = [1.0, 2.0, 3.0, 4.0, 100.0];
    let unusual = anomaly::fit_threshold(&errors, &ThresholdSpec::UnusualIqr).unwrap();
    let extreme = anomaly::fit_threshold(&errors, &ThresholdSpec::ExtremeIqr).unwrap();
    assert_eq!(unusual, 7.0);
    assert_eq!(extreme, 10.0);

    // Degenerate spread: IQR = 0 collapses both rules to the constant.
    let flat = [0.25; 4];
    assert_eq!(
        anomaly::fit_threshold(&flat, &ThresholdSpec::UnusualIqr).unwrap(),
        0.25
    );
    assert_eq!(
        anomaly::fit_threshold(&flat, &ThresholdSpec::ExtremeIqr).unwrap(),
        0.25
    );

    // Interpolated percentile on 0..99 at q = 0.9 lands at 89.1.
    let ramp: Vec<f64> = (0..100).map(f64::from).collect();
    let q90 = anomaly::fit_threshold(&ramp, &ThresholdSpec::Percentile { q: 0.9 }).unwrap();
    assert!((q90 - 89.1).abs() < 1e-12);

    // Boundary equality stays normal; anything above flips.
    let labels = anomaly::classify(&[0.25, 0.25 + 1e-12], 0.25);
    assert_eq!(labels, vec![false, true]);

    println!(
        "criterion 7 (threshold fixtures): PASS — IQR rules, zero-IQR collapse, interpolated percentile, strict boundary"
    );
}

#[test]
fn criterion_8_privacy_structural_and_codec() {
    // Codec round-trip over 1000 random packets of every kind.
    let mut rng = SplitMix64::new(0xAC08);
    for i in 0..1000 {
        let packet = common::random_packet(&mut rng, i);
        let bytes = federation::encode_packet(&packet).unwrap();
        let back = federation::decode_packet(&bytes).unwrap();
        assert_eq!(packet, back, "packet {i}");
    }

    // Structural privacy: a payload dimensioned by the sample count is
    // rejected by the schema check.
    let wide = Matrix::zeros(4, 9);
    let bad = federation::KnowledgePacket::new(
        "s",
        "n",
        0,
        federation::PacketBody::EncoderStats {
            us_product: wide,
            sample_count: 9,
        },
    );
    assert!(federation::validate_packet(&bad).is_err());

    // Monotone sample counts leave the payload size unchanged: the encoded
    // statistics of 30 and 30000 samples differ only in the count digits.
    let sizes: Vec<usize> = [30usize, 3000, 30000]
        .iter()
        .map(|&n| {
            let x = random_matrix(&mut rng, 6, n);
            let stats = federation::local_encoder_stats(&x).unwrap();
            let packet = federation::KnowledgePacket::new(
                "s",
                "n",
                0,
                federation::PacketBody::EncoderStats {
                    us_product: stats.us_product,
                    sample_count: 1_000_000,
                },
            );
            federation::encode_packet(&packet).unwrap().len()
        })
        .collect();
    let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
    assert!(
        spread < 64,
        "payload size varies with sample count: {sizes:?}"
    );

    println!(
        "criterion 8 (privacy-structural + codec): PASS — 1000 packets round-tripped, sample-scaled payloads rejected, size spread {spread} bytes across 30..30000 samples"
    );
}

#[test]
fn criterion_9_determinism() {
    let mut rng = SplitMix64::new(0xAC09);
    let x = random_matrix(&mut rng, 6, 80);
    let a = arch(&[6, 3, 4, 6], 99);

    let save_bytes = |m: &DaefModel| {
        let mut buf = Vec::new();
        model::save(m, &mut buf).unwrap();
        buf
    };
    let run_a = save_bytes(&model::train(&x, &a, 2, 1).unwrap());
    let run_b = save_bytes(&model::train(&x, &a, 2, 4).unwrap());
    let run_c = save_bytes(&model::train(&x, &a, 2, 1).unwrap());
    assert_eq!(run_a, run_b, "worker count changed the model file");
    assert_eq!(run_a, run_c, "consecutive runs differ");

    // Eval reports: byte-identical across worker counts and repeat runs.
    let labels: Vec<bool> = (0..80).map(|i| i % 8 == 0).collect();
    let ds = LabeledDataset::new(x, labels, "synthetic".into()).unwrap();
    let report_bytes = |workers: usize| {
        let cv = CvConfig {
            folds: 5,
            seed: 3,
            partitions: 1,
            workers,
        };
        let report =
            anomaly::evaluate_cv(&ds, &a, &ThresholdSpec::Percentile { q: 0.9 }, &cv).unwrap();
        serde_json::to_vec(&report).unwrap()
    };
    let r1 = report_bytes(1);
    let r4 = report_bytes(4);
    let r1_again = report_bytes(1);
    assert_eq!(r1, r4, "worker count changed the eval report");
    assert_eq!(r1, r1_again, "consecutive eval runs differ");

    println!(
        "criterion 9 (determinism): PASS — model files and eval reports bitwise-identical across worker counts and repeat runs"
    );
}
