//! Subcommand implementations. Results go to stdout, diagnostics to stderr,
//! files are written atomically (temp file + rename), and everything except
//! reported wall times is deterministic under a fixed seed.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use daef::anomaly::{self, CvConfig, FittedThreshold};
use daef::data::{self, LabeledDataset};
use daef::federation::{self, Broker, FedMode, FedSession};
use daef::linalg::Matrix;
use daef::model::{self, DaefModel};

use crate::config::RunConfig;
use crate::CliError;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("writing {}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new("."))).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path)
        .map_err(|e| CliError::Io(format!("writing {}: {}", path.display(), e.error)))?;
    Ok(())
}

fn load_dataset(
    config: &RunConfig,
    config_path: &Path,
    data: &Path,
) -> Result<LabeledDataset, CliError> {
    let (schema, manifest) = config.dataset_schema(config_path)?;
    let (dataset, warnings) = match manifest {
        Some(manifest) => data::load_with_manifest(data, &manifest).map_err(CliError::from)?,
        None => (
            data::load_csv(data, &schema).map_err(CliError::from)?,
            Vec::new(),
        ),
    };
    for warning in warnings {
        eprintln!("warning: {warning}");
    }
    Ok(dataset)
}

fn normal_columns(ds: &LabeledDataset) -> Vec<usize> {
    (0..ds.len()).filter(|&i| !ds.labels[i]).collect()
}

fn print_kv(key: &str, value: impl std::fmt::Display) {
    println!("{key:<14} {value}");
}

fn fit_config_threshold(
    config: &RunConfig,
    model: &mut DaefModel,
    x_train: &Matrix,
) -> Result<(), CliError> {
    if let Some(spec) = &config.threshold {
        let errors = anomaly::reconstruction_errors(model, x_train)?;
        let mu = anomaly::fit_threshold(&errors, spec)?;
        model.threshold = Some(FittedThreshold {
            spec: spec.clone(),
            mu,
        });
    }
    Ok(())
}

fn save_model(model: &DaefModel, path: &Path) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    model::save(model, &mut bytes).map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn cmd_train(
    config_path: &Path,
    config: &RunConfig,
    data_path: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let dataset = load_dataset(config, config_path, data_path)?;
    let arch = config.effective_architecture();
    let normals = normal_columns(&dataset);
    if normals.is_empty() {
        return Err(CliError::Data("no normal samples to train on".into()));
    }
    let x_train = dataset
        .features
        .select_columns(&normals)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let started = Instant::now();
    let mut model = model::train(&x_train, &arch, config.partitions, config.workers)?;
    fit_config_threshold(config, &mut model, &x_train)?;
    let wall = started.elapsed();

    save_model(&model, out)?;

    print_kv("dataset", &dataset.name);
    print_kv(
        "samples",
        format!(
            "{} normal / {} anomalous",
            normals.len(),
            dataset.anomaly_count()
        ),
    );
    print_kv("architecture", format!("{:?}", arch.layer_sizes));
    print_kv("partitions", config.partitions);
    print_kv("workers", config.workers);
    print_kv("seed", config.seed);
    for (i, w) in model.decoder_weights.iter().enumerate() {
        print_kv(
            &format!("decoder[{i}]"),
            format!("{}x{}", w.rows(), w.cols()),
        );
    }
    if let Some(t) = &model.threshold {
        print_kv("threshold", format!("{:?} -> {:.6e}", t.spec, t.mu));
    }
    print_kv("model", out.display());
    print_kv("wall time", format!("{:.3} s", wall.as_secs_f64()));

    let summary = serde_json::json!({
        "dataset": dataset.name,
        "training_samples": normals.len(),
        "architecture": arch,
        "decoder_shapes": model
            .decoder_weights
            .iter()
            .map(|w| [w.rows(), w.cols()])
            .collect::<Vec<_>>(),
        "threshold": model.threshold,
        "wall_seconds": wall.as_secs_f64(),
    });
    let sidecar = out.with_extension("summary.json");
    write_atomic(&sidecar, format!("{summary:#}\n").as_bytes())?;
    Ok(())
}

pub fn cmd_eval(
    config_path: &Path,
    config: &RunConfig,
    data_path: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let dataset = load_dataset(config, config_path, data_path)?;
    let arch = config.effective_architecture();
    let spec = config
        .threshold
        .clone()
        .ok_or_else(|| CliError::Config("eval requires a threshold spec in the config".into()))?;
    let cv = CvConfig {
        folds: config.folds,
        seed: config.seed,
        partitions: config.partitions,
        workers: config.workers,
    };
    let started = Instant::now();
    let report = anomaly::evaluate_cv(&dataset, &arch, &spec, &cv)?;
    let wall = started.elapsed();

    // Same row shape as the benchmark tables: F1 x 100, one decimal.
    println!(
        "{:<12} {:>5.1}±{:<4.1} ({} folds)",
        dataset.name,
        100.0 * report.mean_f1,
        100.0 * report.std_f1,
        report.folds.len()
    );
    let per_fold: Vec<String> = report.folds.iter().map(|f| format!("{:.3}", f)).collect();
    print_kv("per-fold F1", per_fold.join(" "));
    print_kv("fingerprint", &report.config_fingerprint);
    print_kv("wall time", format!("{:.3} s", wall.as_secs_f64()));

    let mut bytes = serde_json::to_vec_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(out, &bytes)?;
    Ok(())
}

pub fn cmd_fedsim(
    config_path: &Path,
    config: &RunConfig,
    data_path: &Path,
    nodes: usize,
    mode: FedMode,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let dataset = load_dataset(config, config_path, data_path)?;
    let arch = config.effective_architecture();
    let normals = normal_columns(&dataset);
    if normals.len() < nodes {
        return Err(CliError::Data(format!(
            "{} normal samples cannot cover {nodes} nodes",
            normals.len()
        )));
    }
    let x_train = dataset
        .features
        .select_columns(&normals)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let blocks = data::partition_columns(&x_train, nodes, config.seed)?;
    for (i, block) in blocks.iter().enumerate() {
        print_kv(&format!("node[{i}]"), format!("{} samples", block.cols()));
    }

    // Centralized reference on the same sample multiset.
    let refs: Vec<&Matrix> = blocks.iter().collect();
    let concat = Matrix::hconcat(&refs).map_err(|e| CliError::Data(e.to_string()))?;
    let centralized = model::train(&concat, &arch, 1, config.workers)?;

    let started = Instant::now();
    let broker = Broker::new();
    let mut session = FedSession::new(&format!("fedsim-{}", config.seed), arch, mode, nodes);
    session.workers = config.workers;
    let global = match mode {
        FedMode::LayerSync => {
            let data: Vec<Option<Matrix>> = blocks.into_iter().map(Some).collect();
            federation::run_layer_sync(&session, &broker, &data)?
        }
        FedMode::PostHoc => {
            let mut models = federation::run_post_hoc(&session, &broker, &blocks)?;
            models.remove(0)
        }
    };
    let wall = started.elapsed();

    let delta = centralized.max_weight_delta(&global);
    match mode {
        FedMode::LayerSync => {
            print_kv("mode", "layer_sync");
            print_kv(
                "equivalence",
                format!("max |w_fed - w_central| = {delta:.3e}"),
            );
        }
        FedMode::PostHoc => {
            print_kv("mode", "post_hoc");
            print_kv(
                "equivalence",
                format!("max |w_merged - w_central| = {delta:.3e} (one-shot merge, not asserted)"),
            );
        }
    }
    print_kv("wall time", format!("{:.3} s", wall.as_secs_f64()));
    if let Some(path) = out {
        save_model(&global, path)?;
        print_kv("model", path.display());
    }
    Ok(())
}

pub fn cmd_predict(
    model_path: &Path,
    data_path: &Path,
    out: &Path,
    schema: Option<(PathBuf, RunConfig)>,
) -> Result<(), CliError> {
    let file = fs::File::open(model_path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", model_path.display())))?;
    let model = model::load(file).map_err(|e| CliError::Data(e.to_string()))?;

    // With a config, the label column is dropped; otherwise every column is a
    // numeric feature.
    let features = match &schema {
        Some((config_path, config)) => load_dataset(config, config_path, data_path)?.features,
        None => load_unlabeled_csv(data_path)?,
    };

    let errors = anomaly::reconstruction_errors(&model, &features).map_err(|e| match e {
        anomaly::AnomalyError::ShapeMismatch(msg) => CliError::Data(msg),
        other => CliError::from(other),
    })?;
    let mut csv = String::new();
    match &model.threshold {
        Some(t) => {
            csv.push_str("index,reconstruction_error,anomaly\n");
            let flags = anomaly::classify(&errors, t.mu);
            for (i, (e, flag)) in errors.iter().zip(&flags).enumerate() {
                csv.push_str(&format!("{i},{e},{}\n", u8::from(*flag)));
            }
        }
        None => {
            eprintln!("warning: model has no fitted threshold; anomaly column omitted");
            csv.push_str("index,reconstruction_error\n");
            for (i, e) in errors.iter().enumerate() {
                csv.push_str(&format!("{i},{e}\n"));
            }
        }
    }
    write_atomic(out, csv.as_bytes())?;
    print_kv("samples", errors.len());
    print_kv("scores", out.display());
    Ok(())
}

/// Reads a header-first CSV in which every column is a numeric feature.
fn load_unlabeled_csv(path: &Path) -> Result<Matrix, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let width = reader
        .headers()
        .map_err(|e| CliError::Data(e.to_string()))?
        .len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("row {}: {e}", idx + 1)))?;
        let mut row = Vec::with_capacity(width);
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!(
                    "non-numeric cell at row {}, column {}",
                    idx + 1,
                    col + 1
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data("no data rows".into()));
    }
    let n = rows.len();
    let dim = rows[0].len();
    let mut data = vec![0.0; dim * n];
    for (j, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(CliError::Data(format!(
                "row {} has {} fields, expected {dim}",
                j + 1,
                row.len()
            )));
        }
        for (i, &v) in row.iter().enumerate() {
            data[i * n + j] = v;
        }
    }
    Matrix::from_vec(dim, n, data).map_err(|e| CliError::Data(e.to_string()))
}
