//! Dataset ingestion and the deterministic splits the benchmark protocol
//! relies on. Samples live in columns everywhere, so a CSV of n rows by
//! d feature columns loads into a d × n matrix.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::rng::SplitMix64;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV parse error at row {row}: {msg}")]
    ParseError { row: usize, msg: String },
    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),
    #[error("non-numeric feature at row {row}, column {col}")]
    NonNumericFeature { row: usize, col: usize },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("dataset has no normal samples")]
    NoNormalSamples,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("{anomalies} anomalies cannot stratify {folds} folds")]
    InsufficientAnomalies { anomalies: usize, folds: usize },
    #[error("{requested} partitions requested for {available} columns")]
    TooManyPartitions { requested: usize, available: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid manifest: {0}")]
    BadManifest(String),
}

/// Features (d × n) with one boolean label per sample column, true = anomaly.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<bool>,
    pub name: String,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<bool>, name: String) -> Result<Self, DataError> {
        if labels.len() != features.cols() {
            return Err(DataError::ShapeMismatch(format!(
                "{} labels for {} samples",
                labels.len(),
                features.cols()
            )));
        }
        if labels.iter().all(|&l| l) {
            return Err(DataError::NoNormalSamples);
        }
        Ok(Self {
            features,
            labels,
            name,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn anomaly_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn dim(&self) -> usize {
        self.features.rows()
    }
}

/// Which CSV column holds the label, by header name or zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: LabelColumn,
    /// Literal cell value (after trimming) that marks an anomaly.
    pub anomaly_value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedCounts {
    pub n: usize,
    pub dim: usize,
    pub anomalies: usize,
}

/// Checked-in description of a benchmark dataset: where the label lives, how
/// anomalies are encoded, and the counts the source is expected to have so
/// that drifted mirrors are flagged at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub label_column: LabelColumn,
    pub anomaly_value: String,
    #[serde(default)]
    pub expected: Option<ExpectedCounts>,
}

impl DatasetManifest {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        serde_json::from_str(text).map_err(|e| DataError::BadManifest(e.to_string()))
    }

    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            label_column: self.label_column.clone(),
            anomaly_value: self.anomaly_value.clone(),
        }
    }
}

/// Loads an RFC-4180 CSV with a header row. Every non-label column must be
/// numeric; the label column is compared literally against `anomaly_value`.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LabeledDataset, DataError> {
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(source),
            other => DataError::ParseError {
                row: 0,
                msg: format!("{other:?}"),
            },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| DataError::ParseError {
            row: 0,
            msg: e.to_string(),
        })?
        .clone();
    let label_pos = match &schema.label_column {
        LabelColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingLabelColumn(name.clone()))?,
        LabelColumn::Index(idx) => {
            if *idx >= headers.len() {
                return Err(DataError::MissingLabelColumn(format!("index {idx}")));
            }
            *idx
        }
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<bool> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| DataError::ParseError {
            row,
            msg: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(DataError::ParseError {
                row,
                msg: format!("{} fields, header has {}", record.len(), headers.len()),
            });
        }
        let mut features = Vec::with_capacity(headers.len() - 1);
        for (col, cell) in record.iter().enumerate() {
            if col == label_pos {
                labels.push(cell == schema.anomaly_value);
            } else {
                let value: f64 = cell
                    .parse()
                    .map_err(|_| DataError::NonNumericFeature { row, col: col + 1 })?;
                if !value.is_finite() {
                    return Err(DataError::NonNumericFeature { row, col: col + 1 });
                }
                features.push(value);
            }
        }
        rows.push(features);
    }
    if rows.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    // Transpose into column-per-sample layout.
    let n = rows.len();
    let dim = rows[0].len();
    let mut data = vec![0.0; dim * n];
    for (j, row) in rows.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            data[i * n + j] = v;
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    LabeledDataset::new(Matrix::from_parts(dim, n, data), labels, name)
}

/// Loads through a manifest and reports (without failing) any drift from the
/// expected counts.
pub fn load_with_manifest(
    path: &Path,
    manifest: &DatasetManifest,
) -> Result<(LabeledDataset, Vec<String>), DataError> {
    let mut ds = load_csv(path, &manifest.schema())?;
    ds.name = manifest.name.clone();
    let mut warnings = Vec::new();
    if let Some(expected) = &manifest.expected {
        if ds.len() != expected.n {
            warnings.push(format!(
                "{}: expected {} samples, found {}",
                manifest.name,
                expected.n,
                ds.len()
            ));
        }
        if ds.dim() != expected.dim {
            warnings.push(format!(
                "{}: expected {} features, found {}",
                manifest.name,
                expected.dim,
                ds.dim()
            ));
        }
        if ds.anomaly_count() != expected.anomalies {
            warnings.push(format!(
                "{}: expected {} anomalies, found {}",
                manifest.name,
                expected.anomalies,
                ds.anomaly_count()
            ));
        }
    }
    Ok((ds, warnings))
}

/// Per-feature mean and population standard deviation. Degenerate features
/// (std below 1e-12) scale by 1 so constant columns pass through as zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

pub fn scaler_fit(features: &Matrix) -> Result<StandardScaler, DataError> {
    let n = features.cols();
    if n < 2 {
        return Err(DataError::TooFewSamples { needed: 2, got: n });
    }
    let mut means = Vec::with_capacity(features.rows());
    let mut stds = Vec::with_capacity(features.rows());
    for i in 0..features.rows() {
        let row = features.row(i);
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        means.push(mean);
        stds.push(if std < 1e-12 { 1.0 } else { std });
    }
    Ok(StandardScaler { means, stds })
}

pub fn scaler_apply(scaler: &StandardScaler, features: &Matrix) -> Result<Matrix, DataError> {
    if scaler.means.len() != features.rows() {
        return Err(DataError::ShapeMismatch(format!(
            "scaler fitted on {} features, data has {}",
            scaler.means.len(),
            features.rows()
        )));
    }
    let mut out = features.clone();
    for i in 0..features.rows() {
        let (mean, std) = (scaler.means[i], scaler.stds[i]);
        for j in 0..features.cols() {
            out[(i, j)] = (out[(i, j)] - mean) / std;
        }
    }
    Ok(out)
}

/// Stratified fold assignment: anomalies and normals are shuffled separately
/// under the seed and dealt round-robin with a shared position counter, so
/// fold sizes and per-fold anomaly counts each differ by at most one.
pub fn split_folds(ds: &LabeledDataset, folds: usize, seed: u64) -> Result<Vec<usize>, DataError> {
    if folds < 2 || folds > ds.len() {
        return Err(DataError::TooFewSamples {
            needed: folds.max(2),
            got: ds.len(),
        });
    }
    let anomalies_total = ds.anomaly_count();
    if anomalies_total < folds {
        return Err(DataError::InsufficientAnomalies {
            anomalies: anomalies_total,
            folds,
        });
    }
    let mut anomalies: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i]).collect();
    let mut normals: Vec<usize> = (0..ds.len()).filter(|&i| !ds.labels[i]).collect();
    let mut rng = SplitMix64::new(seed);
    rng.shuffle(&mut anomalies);
    rng.shuffle(&mut normals);

    let mut assignment = vec![0usize; ds.len()];
    for (position, idx) in anomalies.into_iter().chain(normals).enumerate() {
        assignment[idx] = position % folds;
    }
    Ok(assignment)
}

/// Disjoint near-equal column blocks (sizes differ by at most one), shuffled
/// deterministically under the seed. Indices stay ascending within a block.
pub fn partition_columns(x: &Matrix, parts: usize, seed: u64) -> Result<Vec<Matrix>, DataError> {
    if parts == 0 || parts > x.cols() {
        return Err(DataError::TooManyPartitions {
            requested: parts,
            available: x.cols(),
        });
    }
    let mut indices: Vec<usize> = (0..x.cols()).collect();
    let mut rng = SplitMix64::new(seed);
    rng.shuffle(&mut indices);

    let base = x.cols() / parts;
    let extra = x.cols() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let width = base + usize::from(p < extra);
        let mut block: Vec<usize> = indices[start..start + width].to_vec();
        block.sort_unstable();
        out.push(
            x.select_columns(&block)
                .map_err(|e| DataError::ShapeMismatch(e.to_string()))?,
        );
        start += width;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file.flush().unwrap();
        file
    }

    fn label_schema() -> CsvSchema {
        CsvSchema {
            label_column: LabelColumn::Name("class".into()),
            anomaly_value: "1".into(),
        }
    }

    #[test]
    fn smoke_parse_three_rows() {
        let file = write_temp_csv("a,b,class\n1.0,2.0,0\n3.5,4.5,1\n-1,0.25,0\n");
        let ds = load_csv(file.path(), &label_schema()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels, vec![false, true, false]);
        assert_eq!(ds.features.column(1), vec![3.5, 4.5]);
    }

    #[test]
    fn text_feature_cell_reports_position() {
        let file = write_temp_csv("a,b,class\n1.0,2.0,0\n1.0,oops,0\n");
        match load_csv(file.path(), &label_schema()) {
            Err(DataError::NonNumericFeature { row: 2, col: 2 }) => {}
            other => panic!("expected NonNumericFeature at (2,2), got {other:?}"),
        }
    }

    #[test]
    fn nan_feature_rejected() {
        let file = write_temp_csv("a,class\nNaN,0\n1.0,0\n");
        assert!(matches!(
            load_csv(file.path(), &label_schema()),
            Err(DataError::NonNumericFeature { row: 1, col: 1 })
        ));
    }

    #[test]
    fn missing_label_column() {
        let file = write_temp_csv("a,b\n1,2\n");
        assert!(matches!(
            load_csv(file.path(), &label_schema()),
            Err(DataError::MissingLabelColumn(_))
        ));
    }

    #[test]
    fn label_by_index_and_quoted_fields() {
        let file = write_temp_csv("x,y,flag\n\"1.5\",2.5,\"anom\"\n0.5,1.5,ok\n");
        let schema = CsvSchema {
            label_column: LabelColumn::Index(2),
            anomaly_value: "anom".into(),
        };
        let ds = load_csv(file.path(), &schema).unwrap();
        assert_eq!(ds.labels, vec![true, false]);
        assert_eq!(ds.features.column(0), vec![1.5, 2.5]);
    }

    #[test]
    fn ragged_row_is_parse_error() {
        let file = write_temp_csv("a,b,class\n1,2,0\n1,2\n");
        assert!(matches!(
            load_csv(file.path(), &label_schema()),
            Err(DataError::ParseError { row: 2, .. })
        ));
    }

    #[test]
    fn manifest_count_drift_warns() {
        let file = write_temp_csv("a,class\n1,0\n2,0\n3,1\n");
        let manifest = DatasetManifest {
            name: "tiny".into(),
            label_column: LabelColumn::Name("class".into()),
            anomaly_value: "1".into(),
            expected: Some(ExpectedCounts {
                n: 5,
                dim: 1,
                anomalies: 1,
            }),
        };
        let (ds, warnings) = load_with_manifest(file.path(), &manifest).unwrap();
        assert_eq!(ds.name, "tiny");
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("expected 5 samples"));
    }

    #[test]
    fn scaler_normalizes_to_zero_mean_unit_variance() {
        let mut rng = SplitMix64::new(5);
        let data: Vec<f64> = (0..3 * 50).map(|_| rng.uniform(-4.0, 9.0)).collect();
        let x = Matrix::from_parts(3, 50, data);
        let scaler = scaler_fit(&x).unwrap();
        let z = scaler_apply(&scaler, &x).unwrap();
        for i in 0..3 {
            let row = z.row(i);
            let mean = row.iter().sum::<f64>() / 50.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_feature_scales_to_zero() {
        let x = Matrix::from_vec(2, 4, vec![7.0, 7.0, 7.0, 7.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let scaler = scaler_fit(&x).unwrap();
        assert_eq!(scaler.stds[0], 1.0);
        let z = scaler_apply(&scaler, &x).unwrap();
        assert!(z.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaler_elementwise_oracle_on_shifted_data() {
        let train = Matrix::from_vec(1, 4, vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        let scaler = scaler_fit(&train).unwrap();
        let test = Matrix::from_vec(1, 2, vec![10.0, -3.0]).unwrap();
        let z = scaler_apply(&scaler, &test).unwrap();
        for j in 0..2 {
            let expected = (test[(0, j)] - scaler.means[0]) / scaler.stds[0];
            assert_eq!(z[(0, j)], expected);
        }
    }

    fn synthetic_dataset(n: usize, anomalies: usize) -> LabeledDataset {
        let mut labels = vec![false; n];
        for label in labels.iter_mut().take(anomalies) {
            *label = true;
        }
        LabeledDataset::new(Matrix::zeros(2, n), labels, "synthetic".into()).unwrap()
    }

    #[test]
    fn folds_partition_exactly_and_evenly() {
        let ds = synthetic_dataset(100, 13);
        let assignment = split_folds(&ds, 10, 7).unwrap();
        assert_eq!(assignment.len(), 100);
        let mut sizes = [0usize; 10];
        for &f in &assignment {
            sizes[f] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 10));
    }

    #[test]
    fn fold_anomaly_counts_balanced() {
        let ds = synthetic_dataset(6870, 156);
        let assignment = split_folds(&ds, 10, 3).unwrap();
        let mut counts = vec![0usize; 10];
        for (i, &f) in assignment.iter().enumerate() {
            if ds.labels[i] {
                counts[f] += 1;
            }
        }
        assert!(counts.iter().all(|&c| c == 15 || c == 16), "{counts:?}");
    }

    #[test]
    fn folds_deterministic_under_seed() {
        let ds = synthetic_dataset(50, 10);
        assert_eq!(
            split_folds(&ds, 5, 11).unwrap(),
            split_folds(&ds, 5, 11).unwrap()
        );
        assert_ne!(
            split_folds(&ds, 5, 11).unwrap(),
            split_folds(&ds, 5, 12).unwrap()
        );
    }

    #[test]
    fn too_few_anomalies_for_folds() {
        let ds = synthetic_dataset(40, 3);
        assert!(matches!(
            split_folds(&ds, 10, 0),
            Err(DataError::InsufficientAnomalies {
                anomalies: 3,
                folds: 10
            })
        ));
    }

    #[test]
    fn partition_sizes_and_reassembly() {
        let mut rng = SplitMix64::new(21);
        let data: Vec<f64> = (0..3 * 10).map(|_| rng.uniform(0.0, 1.0)).collect();
        let x = Matrix::from_parts(3, 10, data);

        let single = partition_columns(&x, 1, 5).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].cols(), 10);

        let parts = partition_columns(&x, 4, 5).unwrap();
        let mut sizes: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 3, 3]);

        // Reassembly oracle: every original column appears exactly once.
        let mut seen: Vec<Vec<f64>> = parts
            .iter()
            .flat_map(|p| (0..p.cols()).map(|j| p.column(j)).collect::<Vec<_>>())
            .collect();
        let mut expected: Vec<Vec<f64>> = (0..10).map(|j| x.column(j)).collect();
        let key = |v: &Vec<f64>| (v[0], v[1], v[2]);
        seen.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        expected.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        assert_eq!(seen, expected);

        assert!(matches!(
            partition_columns(&x, 11, 0),
            Err(DataError::TooManyPartitions { .. })
        ));
    }
}
