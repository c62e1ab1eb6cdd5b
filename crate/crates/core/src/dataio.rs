//! Dataset ingestion and artifact persistence: label-first TSV curve sets,
//! enriched-matrix CSV, model JSON, and benchmark run records.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

use crate::basis::linspace;
use crate::bench::RunRecord;
use crate::enrich::{BlockLayout, BlockTag, CurveSet, EnrichedMatrix};
use crate::models::{ModelDocument, ModelError, TrainedModel};

#[derive(Error, Debug)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row} has {got} fields, expected {expected}")]
    RaggedFile {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("row {row}, field {field}: cannot parse {token:?} as a number")]
    ParseError {
        row: usize,
        field: usize,
        token: String,
    },
    #[error("test label {0} never appears in the training set")]
    LabelMismatch(f64),
    #[error("file {0} is empty")]
    EmptyFile(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("refusing to save non-finite values")]
    NonFinite,
    #[error("malformed model json: {0}")]
    ModelJson(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
}

/// Formats a value in decimal text with 17 significant digits, enough to
/// reproduce the f64 bit pattern on read.
fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// Curve-set TSV
// ---------------------------------------------------------------------------

/// Ascending order-preserving map from raw file labels to 0..C-1.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    originals: Vec<f64>,
}

impl LabelMap {
    pub fn from_raw(raw: &[f64]) -> Self {
        let mut originals: Vec<f64> = raw.to_vec();
        originals.sort_by(f64::total_cmp);
        originals.dedup();
        Self { originals }
    }

    pub fn map(&self, raw: f64) -> Option<usize> {
        self.originals.iter().position(|&o| o == raw)
    }

    pub fn len(&self) -> usize {
        self.originals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.originals.is_empty()
    }
}

fn detect_delimiter(line: &str) -> char {
    if line.contains('\t') {
        '\t'
    } else if line.contains(',') {
        ','
    } else {
        ' '
    }
}

fn parse_rows(
    content: &str,
    path_for_error: &str,
    delimiter: Option<char>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), DataError> {
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut expected_fields = None;
    let mut first_line = true;
    let mut delim = delimiter.unwrap_or('\t');
    for (row_idx, line) in content.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if first_line {
            if delimiter.is_none() {
                delim = detect_delimiter(line);
            }
            first_line = false;
        }
        let tokens: Vec<&str> = if delim == ' ' {
            line.split_whitespace().collect()
        } else {
            line.split(delim).map(str::trim).collect()
        };
        let expected = *expected_fields.get_or_insert(tokens.len());
        if tokens.len() != expected {
            return Err(DataError::RaggedFile {
                row: row_idx + 1,
                got: tokens.len(),
                expected,
            });
        }
        let mut parsed = Vec::with_capacity(tokens.len());
        for (field, tok) in tokens.iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| DataError::ParseError {
                row: row_idx + 1,
                field: field + 1,
                token: (*tok).to_string(),
            })?;
            parsed.push(v);
        }
        if parsed.len() < 2 {
            return Err(DataError::RaggedFile {
                row: row_idx + 1,
                got: parsed.len(),
                expected: 2,
            });
        }
        raw_labels.push(parsed[0]);
        rows.push(parsed[1..].to_vec());
    }
    if rows.is_empty() {
        return Err(DataError::EmptyFile(path_for_error.to_string()));
    }
    Ok((raw_labels, rows))
}

fn assemble_curve_set(
    raw_labels: Vec<f64>,
    rows: Vec<Vec<f64>>,
    map: &LabelMap,
    name: &str,
) -> Result<CurveSet, DataError> {
    let n = rows.len();
    let t = rows[0].len();
    let mut labels = Vec::with_capacity(n);
    for &raw in &raw_labels {
        labels.push(map.map(raw).ok_or(DataError::LabelMismatch(raw))?);
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((n, t), flat)
        .map_err(|e| DataError::InvalidDataset(e.to_string()))?;
    let mut set = CurveSet::new(linspace(0.0, 1.0, t), values, labels, name)
        .map_err(|e| DataError::InvalidDataset(e.to_string()))?;
    // A test split may miss classes; the class count comes from the map.
    set.n_classes = map.len();
    Ok(set)
}

/// Loads one label-first delimited file: each row is `label v_1 ... v_T`.
/// Labels are remapped to contiguous 0..C-1 preserving ascending original
/// order; the time grid is set to T equispaced points on [0, 1].
pub fn load_ucr(path: impl AsRef<Path>, delimiter: Option<char>) -> Result<CurveSet, DataError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (raw_labels, rows) = parse_rows(&content, &path.to_string_lossy(), delimiter)?;
    let map = LabelMap::from_raw(&raw_labels);
    assemble_curve_set(raw_labels, rows, &map, &name)
}

/// Loads a train/test pair with one label map built from the training file;
/// an unseen test label is an error.
pub fn load_ucr_pair(
    train_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
    delimiter: Option<char>,
) -> Result<(CurveSet, CurveSet), DataError> {
    let train_path = train_path.as_ref();
    let test_path = test_path.as_ref();
    let train_content = fs::read_to_string(train_path)?;
    let test_content = fs::read_to_string(test_path)?;
    let (train_raw, train_rows) =
        parse_rows(&train_content, &train_path.to_string_lossy(), delimiter)?;
    let (test_raw, test_rows) = parse_rows(&test_content, &test_path.to_string_lossy(), delimiter)?;
    let map = LabelMap::from_raw(&train_raw);
    let name = |p: &Path| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let train = assemble_curve_set(train_raw, train_rows, &map, &name(train_path))?;
    let test = assemble_curve_set(test_raw, test_rows, &map, &name(test_path))?;
    Ok((train, test))
}

/// Writes a curve set in the label-first TSV format with full-precision
/// values.
pub fn save_dataset_tsv(set: &CurveSet, path: impl AsRef<Path>) -> Result<(), DataError> {
    if set.values.iter().any(|v| !v.is_finite()) {
        return Err(DataError::NonFinite);
    }
    let mut out = String::new();
    for i in 0..set.n_curves() {
        let _ = write!(out, "{}", set.labels[i]);
        for v in set.values.row(i) {
            let _ = write!(out, "\t{}", fmt_full(*v));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpectedShape {
    pub train_n: usize,
    pub test_n: usize,
    pub length: usize,
    pub n_classes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub train_path: String,
    pub test_path: String,
    pub expected: ExpectedShape,
}

impl DatasetManifest {
    /// Published shapes of the seven benchmark archive datasets.
    pub fn known_shape(name: &str) -> Option<ExpectedShape> {
        let (train_n, test_n, length, n_classes) = match name {
            "Car" => (60, 60, 577, 4),
            "ECG200" => (100, 100, 96, 2),
            "ECGFiveDays" => (23, 861, 136, 2),
            "ItalyPowerDemand" => (67, 1029, 24, 2),
            "Plane" => (105, 105, 144, 7),
            "Trace" => (100, 100, 275, 4),
            "TwoLeadECG" => (23, 1139, 82, 2),
            _ => return None,
        };
        Some(ExpectedShape {
            train_n,
            test_n,
            length,
            n_classes,
        })
    }
}

/// Non-fatal comparison of observed curve sets against a manifest.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub mismatches: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

pub fn validate_manifest(
    manifest: &DatasetManifest,
    train: &CurveSet,
    test: &CurveSet,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let e = &manifest.expected;
    let mut check = |what: &str, got: usize, want: usize| {
        if got != want {
            report.mismatches.push(format!(
                "{}: {what} is {got}, expected {want}",
                manifest.name
            ));
        }
    };
    check("train size", train.n_curves(), e.train_n);
    check("test size", test.n_curves(), e.test_n);
    check("train length", train.n_points(), e.length);
    check("test length", test.n_points(), e.length);
    check("train classes", train.n_classes, e.n_classes);
    check("test classes", test.n_classes, e.n_classes);
    report
}

// ---------------------------------------------------------------------------
// Enriched-matrix CSV
// ---------------------------------------------------------------------------

/// Writes the matrix as CSV: header `label,<block>_<s>` with 1-based basis
/// indices, one row per curve.
pub fn save_matrix(matrix: &EnrichedMatrix, path: impl AsRef<Path>) -> Result<(), DataError> {
    if matrix.features.iter().any(|v| !v.is_finite()) {
        return Err(DataError::NonFinite);
    }
    let mut out = String::from("label");
    for (block, range) in matrix.layout.entries() {
        for s in 0..range.len() {
            let _ = write!(out, ",{}_{}", block.as_str(), s + 1);
        }
    }
    out.push('\n');
    for i in 0..matrix.n_rows() {
        let _ = write!(out, "{}", matrix.labels[i]);
        for v in matrix.features.row(i) {
            let _ = write!(out, ",{}", fmt_full(*v));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<EnrichedMatrix, DataError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| DataError::EmptyFile(path.to_string_lossy().into_owned()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"label") {
        return Err(DataError::MalformedHeader(
            "first column must be 'label'".into(),
        ));
    }
    // Columns group into consecutive runs of `<block>_<s>` with s = 1..S.
    let mut blocks: Vec<(BlockTag, usize)> = Vec::new();
    for col in &cols[1..] {
        let (tag_str, idx_str) = col.rsplit_once('_').ok_or_else(|| {
            DataError::MalformedHeader(format!("column {col:?} is not <block>_<index>"))
        })?;
        let tag = BlockTag::parse(tag_str)
            .ok_or_else(|| DataError::MalformedHeader(format!("unknown block {tag_str:?}")))?;
        let idx: usize = idx_str
            .parse()
            .map_err(|_| DataError::MalformedHeader(format!("bad basis index in {col:?}")))?;
        match blocks.last_mut() {
            Some((last_tag, count)) if *last_tag == tag => {
                if idx != *count + 1 {
                    return Err(DataError::MalformedHeader(format!(
                        "non-contiguous indices in block {}",
                        tag.as_str()
                    )));
                }
                *count += 1;
            }
            _ => {
                if idx != 1 {
                    return Err(DataError::MalformedHeader(format!(
                        "block {} does not start at index 1",
                        tag.as_str()
                    )));
                }
                blocks.push((tag, 1));
            }
        }
    }
    if blocks.is_empty() {
        return Err(DataError::MalformedHeader("no feature columns".into()));
    }
    let basis_size = blocks[0].1;
    if blocks.iter().any(|(_, c)| *c != basis_size) {
        return Err(DataError::MalformedHeader(
            "blocks have different column counts".into(),
        ));
    }
    let tags: Vec<BlockTag> = blocks.iter().map(|(t, _)| *t).collect();
    let layout = BlockLayout::new(&tags, basis_size);
    if layout.entries().len() != tags.len()
        || layout.blocks().zip(tags.iter()).any(|(a, &b)| a != b)
    {
        return Err(DataError::MalformedHeader(
            "blocks are not in canonical order".into(),
        ));
    }

    let p = layout.n_columns();
    let mut labels = Vec::new();
    let mut flat = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != p + 1 {
            return Err(DataError::RaggedFile {
                row: row_idx + 2,
                got: fields.len(),
                expected: p + 1,
            });
        }
        let label: usize = fields[0].parse().map_err(|_| DataError::ParseError {
            row: row_idx + 2,
            field: 1,
            token: fields[0].to_string(),
        })?;
        labels.push(label);
        for (field, tok) in fields[1..].iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| DataError::ParseError {
                row: row_idx + 2,
                field: field + 2,
                token: (*tok).to_string(),
            })?;
            flat.push(v);
        }
    }
    if labels.is_empty() {
        return Err(DataError::EmptyFile(path.to_string_lossy().into_owned()));
    }
    let n = labels.len();
    let features = Array2::from_shape_vec((n, p), flat)
        .map_err(|e| DataError::InvalidDataset(e.to_string()))?;
    let n_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Ok(EnrichedMatrix {
        features,
        labels,
        n_classes,
        layout,
        basis: None,
    })
}

// ---------------------------------------------------------------------------
// Model JSON
// ---------------------------------------------------------------------------

pub fn save_model_document(doc: &ModelDocument, path: impl AsRef<Path>) -> Result<(), DataError> {
    let json = serde_json::to_string_pretty(doc)?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_model_document(path: impl AsRef<Path>) -> Result<ModelDocument, DataError> {
    let json = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&json)?)
}

pub fn save_model(
    model: &TrainedModel,
    layout: Option<BlockLayout>,
    basis: Option<crate::basis::BasisSystem>,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    save_model_document(&ModelDocument::from_model(model, layout, basis), path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, DataError> {
    Ok(load_model_document(path)?.into_model()?)
}

// ---------------------------------------------------------------------------
// Run-record CSV
// ---------------------------------------------------------------------------

pub fn save_runs(records: &[RunRecord], path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new().from_path(path.as_ref())?;
    w.write_record([
        "dataset",
        "method",
        "enriched",
        "run_id",
        "seed",
        "hyperparams_json",
        "accuracy",
        "train_seconds",
    ])?;
    for r in records {
        if !r.accuracy.is_finite() {
            return Err(DataError::NonFinite);
        }
        w.write_record([
            r.dataset.as_str(),
            r.method.as_str(),
            if r.enriched { "true" } else { "false" },
            &r.run_id.to_string(),
            &r.seed.to_string(),
            r.hyperparams_json.as_str(),
            &fmt_full(r.accuracy),
            &format!("{:.6}", r.train_seconds),
        ])?;
    }
    w.flush().map_err(DataError::Io)?;
    Ok(())
}

pub fn load_runs(path: impl AsRef<Path>) -> Result<Vec<RunRecord>, DataError> {
    let mut reader = csv::ReaderBuilder::new().from_path(path.as_ref())?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse_f = |i: usize| -> Result<f64, DataError> {
            record[i].parse().map_err(|_| DataError::ParseError {
                row: out.len() + 2,
                field: i + 1,
                token: record[i].to_string(),
            })
        };
        let parse_u = |i: usize| -> Result<u64, DataError> {
            record[i].parse().map_err(|_| DataError::ParseError {
                row: out.len() + 2,
                field: i + 1,
                token: record[i].to_string(),
            })
        };
        out.push(RunRecord {
            dataset: record[0].to_string(),
            method: record[1].to_string(),
            enriched: &record[2] == "true",
            run_id: parse_u(3)?,
            seed: parse_u(4)?,
            hyperparams_json: record[5].to_string(),
            accuracy: parse_f(6)?,
            train_seconds: parse_f(7)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enrich::{build_enriched, EnrichConfig};
    use crate::models::{train_forest, ForestParams};
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    #[test]
    fn single_row_file_parses_and_remaps() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("one.tsv");
        fs::write(&p, "1 0.0 0.5 1.0\n").unwrap();
        let set = load_ucr(&p, None).unwrap();
        assert_eq!(set.n_curves(), 1);
        assert_eq!(set.n_points(), 3);
        assert_eq!(set.labels, vec![0]);
        assert_eq!(set.values[[0, 2]], 1.0);
    }

    #[test]
    fn labels_remap_ascending() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "3,1.0,2.0\n-1,0.0,0.5\n3,1.5,2.5\n7,9.0,9.5\n").unwrap();
        let set = load_ucr(&p, None).unwrap();
        // -1 -> 0, 3 -> 1, 7 -> 2
        assert_eq!(set.labels, vec![1, 0, 1, 2]);
        assert_eq!(set.n_classes, 3);
    }

    #[test]
    fn ragged_and_nonnumeric_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.tsv");
        fs::write(&p, "1\t0.0\t0.5\n1\t0.0\n").unwrap();
        assert!(matches!(
            load_ucr(&p, None),
            Err(DataError::RaggedFile { row: 2, .. })
        ));
        fs::write(&p, "1\t0.0\tabc\n").unwrap();
        assert!(matches!(
            load_ucr(&p, None),
            Err(DataError::ParseError { .. })
        ));
    }

    #[test]
    fn unseen_test_label_is_mismatch() {
        let dir = tempdir().unwrap();
        let train = dir.path().join("train.tsv");
        let test = dir.path().join("test.tsv");
        fs::write(&train, "1\t0.0\t1.0\n2\t1.0\t2.0\n").unwrap();
        fs::write(&test, "1\t0.0\t1.0\n9\t1.0\t2.0\n").unwrap();
        assert!(matches!(
            load_ucr_pair(&train, &test, None),
            Err(DataError::LabelMismatch(l)) if l == 9.0
        ));
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut values = Array2::<f64>::zeros((5, 12));
        for v in values.iter_mut() {
            *v = rng.random::<f64>() * 1e3 - 500.0;
        }
        let set = CurveSet::new(linspace(0.0, 1.0, 12), values, vec![0, 1, 2, 1, 0], "rt").unwrap();
        let dir = tempdir().unwrap();
        let p = dir.path().join("rt.tsv");
        save_dataset_tsv(&set, &p).unwrap();
        let back = load_ucr(&p, None).unwrap();
        assert_eq!(back.values, set.values);
        assert_eq!(back.labels, set.labels);
        // Second round trip is a fixed point byte-wise.
        let p2 = dir.path().join("rt2.tsv");
        save_dataset_tsv(&back, &p2).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn manifest_validation_flags_mismatches() {
        let set = CurveSet::new(
            linspace(0.0, 1.0, 4),
            array![[0.0, 1.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0]],
            vec![0, 1],
            "tiny",
        )
        .unwrap();
        let manifest = DatasetManifest {
            name: "tiny".into(),
            train_path: String::new(),
            test_path: String::new(),
            expected: ExpectedShape {
                train_n: 2,
                test_n: 2,
                length: 4,
                n_classes: 2,
            },
        };
        assert!(validate_manifest(&manifest, &set, &set).is_ok());
        let manifest_bad = DatasetManifest {
            expected: ExpectedShape {
                length: 5,
                ..manifest.expected.clone()
            },
            ..manifest
        };
        let report = validate_manifest(&manifest_bad, &set, &set);
        assert_eq!(report.mismatches.len(), 2); // train + test length
    }

    #[test]
    fn known_shapes_match_published_table() {
        let car = DatasetManifest::known_shape("Car").unwrap();
        assert_eq!(
            (car.train_n, car.test_n, car.length, car.n_classes),
            (60, 60, 577, 4)
        );
        let plane = DatasetManifest::known_shape("Plane").unwrap();
        assert_eq!(plane.n_classes, 7);
        assert!(DatasetManifest::known_shape("Nope").is_none());
    }

    #[test]
    fn matrix_csv_round_trip() {
        let set = CurveSet::new(
            linspace(0.0, 1.0, 20),
            {
                let mut v = Array2::<f64>::zeros((4, 20));
                for (i, mut row) in v.rows_mut().into_iter().enumerate() {
                    for (j, cell) in row.iter_mut().enumerate() {
                        *cell = ((i + 1) as f64 * j as f64 / 7.0).sin();
                    }
                }
                v
            },
            vec![0, 1, 0, 1],
            "m",
        )
        .unwrap();
        let (matrix, _) = build_enriched(&set, &EnrichConfig::default()).unwrap();
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.csv");
        save_matrix(&matrix, &p).unwrap();
        let back = load_matrix(&p).unwrap();
        assert_eq!(back.features, matrix.features);
        assert_eq!(back.labels, matrix.labels);
        assert_eq!(back.layout, matrix.layout);
        // Header spot check.
        let header = fs::read_to_string(&p)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert!(header.starts_with("label,ORIG_1,"));
        assert!(header.contains(",ELAST_22"));
    }

    #[test]
    fn matrix_with_nan_rejected() {
        let layout = BlockLayout::new(&[BlockTag::Orig], 2);
        let matrix = EnrichedMatrix {
            features: array![[1.0, f64::NAN]],
            labels: vec![0],
            n_classes: 1,
            layout,
            basis: None,
        };
        let dir = tempdir().unwrap();
        assert!(matches!(
            save_matrix(&matrix, dir.path().join("nan.csv")),
            Err(DataError::NonFinite)
        ));
    }

    #[test]
    fn model_round_trip_predictions_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = Array2::<f64>::zeros((40, 6));
        for v in x.iter_mut() {
            *v = rng.random::<f64>();
        }
        let y: Vec<usize> = (0..40).map(|i| usize::from(x[[i, 0]] > 0.5)).collect();
        let forest = train_forest(
            &x,
            &y,
            2,
            &ForestParams {
                n_trees: 12,
                seed: 5,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let model = TrainedModel::Forest(forest);
        let dir = tempdir().unwrap();
        let p = dir.path().join("model.json");
        save_model(&model, None, None, &p).unwrap();
        let back = load_model(&p).unwrap();
        for _ in 0..100 {
            let q: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 0.5).collect();
            assert_eq!(model.predict(&q).unwrap(), back.predict(&q).unwrap());
        }
    }

    #[test]
    fn runs_round_trip_including_empty() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("runs.csv");
        save_runs(&[], &p).unwrap();
        assert!(load_runs(&p).unwrap().is_empty());

        let records = vec![RunRecord {
            dataset: "scenario1".into(),
            method: "forest".into(),
            enriched: true,
            run_id: 3,
            seed: 17,
            hyperparams_json: r#"{"max_depth":7,"mtry":12}"#.into(),
            accuracy: 0.93,
            train_seconds: 0.125,
        }];
        save_runs(&records, &p).unwrap();
        let back = load_runs(&p).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].dataset, "scenario1");
        assert_eq!(back[0].hyperparams_json, records[0].hyperparams_json);
        assert_eq!(back[0].accuracy, records[0].accuracy);
        assert!(back[0].enriched);
    }

    #[test]
    fn nan_accuracy_rejected_on_save() {
        let dir = tempdir().unwrap();
        let records = vec![RunRecord {
            dataset: "x".into(),
            method: "tree".into(),
            enriched: false,
            run_id: 0,
            seed: 0,
            hyperparams_json: "{}".into(),
            accuracy: f64::NAN,
            train_seconds: 0.0,
        }];
        assert!(matches!(
            save_runs(&records, dir.path().join("r.csv")),
            Err(DataError::NonFinite)
        ));
    }
}
