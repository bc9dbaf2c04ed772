//! Dataset ingestion: CSV and pcap loading, column exclusion, stratified
//! splitting, and synthetic data generation.

pub mod labels;
pub mod pcap;
pub mod schema;
pub mod table;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use labels::ClassLabelSet;
use schema::FeatureSchema;
use table::FeatureTable;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("schema column `{name}` absent from CSV header")]
    MissingColumn { name: String },
    #[error("row {row}: expected {expected} values, got {got}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("unknown class label `{value}`")]
    UnknownLabel { value: String },
    #[error("malformed capture: {reason}")]
    MalformedCapture { reason: String },
    #[error("invalid schema: {reason}")]
    SchemaInvalid { reason: String },
    #[error("invalid split ratio {ratio}; must be in (0, 1)")]
    BadRatio { ratio: f64 },
    #[error("labels required for this operation")]
    MissingLabels,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Loads a CSV file against a schema.
///
/// The header must contain every schema column (extra columns are ignored);
/// values are re-ordered into schema order. Empty cells become the literal
/// string `"0"` so every row hashes to the same fixed length downstream.
/// When `label_column` is given, that column is split out into labels; when
/// `enforce` is also given, each label must belong to the set.
pub fn load_csv(
    path: &Path,
    schema: &FeatureSchema,
    label_column: Option<&str>,
    enforce: Option<&ClassLabelSet>,
) -> Result<FeatureTable, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);

    let header = reader.headers()?.clone();
    let mut positions = Vec::with_capacity(schema.len());
    for name in schema.names() {
        let pos = header.iter().position(|h| h == name).ok_or_else(|| {
            IngestError::MissingColumn {
                name: name.to_string(),
            }
        })?;
        positions.push(pos);
    }
    let label_pos = match label_column {
        Some(name) => Some(header.iter().position(|h| h == name).ok_or_else(|| {
            IngestError::MissingColumn {
                name: name.to_string(),
            }
        })?),
        None => None,
    };
    if let Some(lp) = label_pos {
        if positions.contains(&lp) {
            return Err(IngestError::SchemaInvalid {
                reason: format!(
                    "label column `{}` is also a schema feature column",
                    label_column.unwrap()
                ),
            });
        }
    }

    let mut rows = Vec::new();
    let mut labels = label_pos.map(|_| Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => IngestError::RaggedRow {
                row: i,
                expected: *expected_len as usize,
                got: *len as usize,
            },
            _ => IngestError::Csv(e),
        })?;
        let row: Vec<String> = positions
            .iter()
            .map(|&p| {
                let cell = record.get(p).unwrap_or("");
                if cell.is_empty() {
                    "0".to_string()
                } else {
                    cell.to_string()
                }
            })
            .collect();
        rows.push(row);
        if let (Some(ls), Some(lp)) = (labels.as_mut(), label_pos) {
            let value = record.get(lp).unwrap_or("").to_string();
            if let Some(set) = enforce {
                if set.index_of(&value).is_none() {
                    return Err(IngestError::UnknownLabel { value });
                }
            }
            ls.push(value);
        }
    }
    FeatureTable::new(schema.clone(), rows, labels)
}

/// Writes a table as CSV in schema column order, appending the label column
/// (named `label`) when labels are present.
pub fn write_csv(table: &FeatureTable, path: &Path) -> Result<(), IngestError> {
    let file = std::fs::File::create(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut writer = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = table.schema.names().collect();
    if table.labels.is_some() {
        header.push("label");
    }
    writer.write_record(&header)?;
    for (i, row) in table.rows.iter().enumerate() {
        match &table.labels {
            Some(labels) => {
                let mut rec: Vec<&str> = row.iter().map(|s| s.as_str()).collect();
                rec.push(&labels[i]);
                writer.write_record(&rec)?;
            }
            None => writer.write_record(row)?,
        }
    }
    writer.flush().map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Removes the schema's excluded columns from the table. Idempotent: the
/// result carries an empty exclusion set.
pub fn drop_excluded(table: &FeatureTable) -> FeatureTable {
    let keep: Vec<usize> = table
        .schema
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| !table.schema.is_excluded(&c.name))
        .map(|(i, _)| i)
        .collect();
    let rows = table
        .rows
        .iter()
        .map(|row| keep.iter().map(|&i| row[i].clone()).collect())
        .collect();
    FeatureTable {
        schema: table.schema.retained(),
        rows,
        labels: table.labels.clone(),
    }
}

/// A class too small to stratify; its rows were assigned to training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegenerateClass {
    pub name: String,
    pub count: usize,
}

/// Result of a stratified split.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub train: FeatureTable,
    pub eval: FeatureTable,
    pub warnings: Vec<DegenerateClass>,
}

/// Train indices, eval indices, and any degenerate-class warnings.
pub type SplitIndices = (Vec<usize>, Vec<usize>, Vec<DegenerateClass>);

/// Stratified train/eval index split over a label sequence. Per class,
/// `round(ratio * count)` rows go to training; classes with fewer than two
/// rows go entirely to training and are reported as degenerate. Classes are
/// walked in sorted-name order and shuffled with a seeded generator, so the
/// same seed always yields the same assignment.
pub fn stratified_split_indices(
    labels: &[String],
    ratio: f64,
    seed: u64,
) -> Result<SplitIndices, IngestError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(IngestError::BadRatio { ratio });
    }
    let mut by_class: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        match by_class.iter_mut().find(|(name, _)| name == label) {
            Some((_, idxs)) => idxs.push(i),
            None => by_class.push((label.clone(), vec![i])),
        }
    }
    by_class.sort_by(|a, b| a.0.cmp(&b.0));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut eval = Vec::new();
    let mut warnings = Vec::new();
    for (name, mut idxs) in by_class {
        if idxs.len() < 2 {
            warnings.push(DegenerateClass {
                name,
                count: idxs.len(),
            });
            train.extend(idxs);
            continue;
        }
        idxs.shuffle(&mut rng);
        let n_train = (ratio * idxs.len() as f64).round() as usize;
        let n_train = n_train.clamp(1, idxs.len() - 1);
        train.extend_from_slice(&idxs[..n_train]);
        eval.extend_from_slice(&idxs[n_train..]);
    }
    train.sort_unstable();
    eval.sort_unstable();
    Ok((train, eval, warnings))
}

/// Stratified-by-label random split of a labeled table.
pub fn split_train_eval(
    table: &FeatureTable,
    ratio: f64,
    seed: u64,
) -> Result<SplitOutcome, IngestError> {
    let labels = table.labels.as_ref().ok_or(IngestError::MissingLabels)?;
    let (train_idx, eval_idx, warnings) = stratified_split_indices(labels, ratio, seed)?;
    Ok(SplitOutcome {
        train: table.select_rows(&train_idx),
        eval: table.select_rows(&eval_idx),
        warnings,
    })
}

/// Generates a labeled synthetic table over the given schema.
///
/// Each class gets a distinct deterministic signature on the first three
/// retained columns; the remaining columns draw from a small categorical
/// pool shared across classes. Classes are therefore separable by
/// construction while the noise columns carry no class information.
/// Excluded columns are filled too, so the exclusion stage has work to do.
pub fn generate_synthetic(
    n_per_class: usize,
    n_classes: usize,
    schema: &FeatureSchema,
    seed: u64,
) -> Result<FeatureTable, IngestError> {
    let label_set = ClassLabelSet::first(n_classes)?;
    let retained: Vec<usize> = schema
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| !schema.is_excluded(&c.name))
        .map(|(i, _)| i)
        .collect();
    if retained.len() < 4 {
        return Err(IngestError::SchemaInvalid {
            reason: "synthetic generation needs at least 4 retained columns".into(),
        });
    }
    let signature: Vec<usize> = retained[..3].to_vec();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_pool: Vec<String> = (0..6).map(|k| format!("bg.{k}")).collect();
    let mut rows = Vec::with_capacity(n_per_class * n_classes);
    let mut labels = Vec::with_capacity(n_per_class * n_classes);
    for class in 0..n_classes {
        let name = label_set.name(class).unwrap().to_string();
        for _ in 0..n_per_class {
            let mut row = Vec::with_capacity(schema.len());
            for (col, _) in schema.columns().iter().enumerate() {
                let value = if signature.contains(&col) {
                    format!("cls{class}.f{col}.key")
                } else if retained.contains(&col) {
                    noise_pool[rng.gen_range(0..noise_pool.len())].clone()
                } else {
                    // Excluded columns: per-row filler that exclusion must remove.
                    format!("drop.{}", rng.gen_range(0..1_000_000))
                };
                row.push(value);
            }
            rows.push(row);
            labels.push(name.clone());
        }
    }
    FeatureTable::new(schema.clone(), rows, Some(labels))
}

/// Reads a one-label-per-line file.
pub fn read_labels(path: &Path) -> Result<Vec<String>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn tiny_schema() -> FeatureSchema {
        FeatureSchema::parse("tcp.dstport tcp uint\nhttp.method http string\n").unwrap()
    }

    #[test]
    fn load_csv_splits_label_column() {
        let f = write_temp("tcp.dstport,http.method,label\n443,GET,DDoS_HTTP\n");
        let t = load_csv(
            f.path(),
            &tiny_schema(),
            Some("label"),
            Some(&ClassLabelSet::full()),
        )
        .unwrap();
        assert_eq!(t.n_rows(), 1);
        assert_eq!(t.n_columns(), 2);
        assert_eq!(t.labels, Some(vec!["DDoS_HTTP".to_string()]));
        assert_eq!(t.rows[0], vec!["443".to_string(), "GET".to_string()]);
    }

    #[test]
    fn load_csv_reorders_to_schema_order_and_ignores_extras() {
        let f = write_temp("extra,http.method,tcp.dstport\nzz,GET,443\n");
        let t = load_csv(f.path(), &tiny_schema(), None, None).unwrap();
        assert_eq!(t.rows[0], vec!["443".to_string(), "GET".to_string()]);
    }

    #[test]
    fn empty_cell_becomes_zero() {
        let f = write_temp("tcp.dstport,http.method\n443,\n");
        let t = load_csv(f.path(), &tiny_schema(), None, None).unwrap();
        assert_eq!(t.rows[0][1], "0");
    }

    #[test]
    fn missing_column_and_ragged_row_errors() {
        let f = write_temp("tcp.dstport\n443\n");
        let err = load_csv(f.path(), &tiny_schema(), None, None).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { ref name } if name == "http.method"));

        let f = write_temp("tcp.dstport,http.method\n443\n");
        let err = load_csv(f.path(), &tiny_schema(), None, None).unwrap_err();
        assert!(matches!(err, IngestError::RaggedRow { .. }));
    }

    #[test]
    fn unknown_label_rejected_when_enforced() {
        let f = write_temp("tcp.dstport,http.method,label\n443,GET,NotAClass\n");
        let err = load_csv(
            f.path(),
            &tiny_schema(),
            Some("label"),
            Some(&ClassLabelSet::full()),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::UnknownLabel { .. }));
    }

    #[test]
    fn sixty_one_column_csv_loads() {
        let schema = FeatureSchema::edge_iiot61();
        let header: Vec<&str> = schema.names().collect();
        let row: Vec<String> = (0..61).map(|i| format!("v{i}")).collect();
        let csv = format!("{}\n{}\n", header.join(","), row.join(","));
        let f = write_temp(&csv);
        let t = load_csv(f.path(), &schema, None, None).unwrap();
        assert_eq!(t.n_columns(), 61);
    }

    #[test]
    fn drop_excluded_removes_defaults_and_is_idempotent() {
        let schema =
            FeatureSchema::parse("frame.time frame datetime excluded\ntcp.dstport tcp uint\n")
                .unwrap();
        let t = FeatureTable::new(
            schema,
            vec![vec!["now".into(), "443".into()]],
            None,
        )
        .unwrap();
        let dropped = drop_excluded(&t);
        assert_eq!(dropped.n_columns(), 1);
        assert_eq!(dropped.rows[0], vec!["443".to_string()]);
        assert_eq!(drop_excluded(&dropped), dropped);
    }

    #[test]
    fn drop_excluded_identity_without_exclusions() {
        let t = FeatureTable::new(
            tiny_schema(),
            vec![vec!["443".into(), "GET".into()]],
            None,
        )
        .unwrap();
        assert_eq!(drop_excluded(&t), t);
    }

    #[test]
    fn sixty_one_to_fifty_three() {
        let schema = FeatureSchema::edge_iiot61();
        let row: Vec<String> = (0..61).map(|i| format!("v{i}")).collect();
        let t = FeatureTable::new(schema, vec![row], None).unwrap();
        assert_eq!(drop_excluded(&t).n_columns(), 53);
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let t = FeatureTable::new(
            tiny_schema(),
            vec![
                vec!["443".into(), "GET".into()],
                vec!["80".into(), "POST".into()],
            ],
            Some(vec!["Normal".into(), "DDoS_HTTP".into()]),
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&t, f.path()).unwrap();
        let back = load_csv(f.path(), &tiny_schema(), Some("label"), None).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn split_is_exactly_stratified() {
        let labels: Vec<String> = (0..100)
            .map(|i| if i % 2 == 0 { "A".into() } else { "B".into() })
            .collect();
        let rows: Vec<Vec<String>> = (0..100)
            .map(|i| vec![i.to_string(), "x".to_string()])
            .collect();
        let t = FeatureTable::new(tiny_schema(), rows, Some(labels)).unwrap();
        let out = split_train_eval(&t, 0.8, 7).unwrap();
        assert_eq!(out.train.n_rows(), 80);
        assert_eq!(out.eval.n_rows(), 20);
        let tc = out.train.class_counts();
        let ec = out.eval.class_counts();
        assert!(tc.iter().all(|(_, c)| *c == 40));
        assert!(ec.iter().all(|(_, c)| *c == 10));
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn split_is_deterministic() {
        let labels: Vec<String> = (0..50).map(|i| format!("c{}", i % 3)).collect();
        let (a1, b1, _) = stratified_split_indices(&labels, 0.8, 7).unwrap();
        let (a2, b2, _) = stratified_split_indices(&labels, 0.8, 7).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        let (a3, _, _) = stratified_split_indices(&labels, 0.8, 8).unwrap();
        assert_ne!(a1, a3);
    }

    #[test]
    fn split_rounds_per_class_counts() {
        // Per class the train share is round(ratio * n): 801/200 for 1001
        // rows at 0.8, and 50/12 for 62 rows (49.6 rounds up).
        for (n, expect_train) in [(1001usize, 801usize), (62, 50)] {
            let labels: Vec<String> = (0..n).map(|_| "A".to_string()).collect();
            let (tr, ev, _) = stratified_split_indices(&labels, 0.8, 1).unwrap();
            assert_eq!(tr.len(), expect_train);
            assert_eq!(ev.len(), n - expect_train);
        }
    }

    #[test]
    fn split_union_is_input_and_intersection_empty() {
        let labels: Vec<String> = (0..37).map(|i| format!("c{}", i % 4)).collect();
        let (tr, ev, _) = stratified_split_indices(&labels, 0.7, 5).unwrap();
        let mut all: Vec<usize> = tr.iter().chain(ev.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn per_class_eval_fraction_is_within_one_row() {
        use rand::{Rng, SeedableRng};
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.gen_range(2..6usize);
            let n = rng.gen_range(10..200);
            let labels: Vec<String> = (0..n).map(|_| format!("c{}", rng.gen_range(0..k))).collect();
            let ratio = [0.5, 0.7, 0.8, 0.9][rng.gen_range(0..4)];
            let (tr, ev, warn) = stratified_split_indices(&labels, ratio, seed).unwrap();
            assert_eq!(tr.len() + ev.len(), n);
            for class in 0..k {
                let name = format!("c{class}");
                let total = labels.iter().filter(|l| **l == name).count();
                if total < 2 {
                    assert!(warn.iter().any(|w| w.name == name));
                    continue;
                }
                let in_eval = ev.iter().filter(|&&i| labels[i] == name).count();
                let expect = (1.0 - ratio) * total as f64;
                assert!(
                    (in_eval as f64 - expect).abs() <= 1.0,
                    "class {name}: {in_eval} eval rows vs expected {expect}"
                );
            }
        }
    }

    #[test]
    fn bad_ratio_rejected() {
        let labels = vec!["A".to_string(), "A".into()];
        assert!(matches!(
            stratified_split_indices(&labels, 0.0, 1),
            Err(IngestError::BadRatio { .. })
        ));
        assert!(matches!(
            stratified_split_indices(&labels, 1.0, 1),
            Err(IngestError::BadRatio { .. })
        ));
    }

    #[test]
    fn degenerate_class_goes_to_training_with_warning() {
        let labels = vec!["A".to_string(), "A".into(), "B".into()];
        let (tr, ev, warn) = stratified_split_indices(&labels, 0.5, 3).unwrap();
        assert_eq!(warn, vec![DegenerateClass { name: "B".into(), count: 1 }]);
        assert_eq!(tr.len() + ev.len(), 3);
        assert!(tr.contains(&2));
    }

    #[test]
    fn synthetic_cardinality_and_determinism() {
        let schema = FeatureSchema::synthetic_compact();
        let t1 = generate_synthetic(10, 3, &schema, 9).unwrap();
        let t2 = generate_synthetic(10, 3, &schema, 9).unwrap();
        assert_eq!(t1.n_rows(), 30);
        assert_eq!(t1, t2);
        let t3 = generate_synthetic(10, 3, &schema, 10).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn synthetic_signature_supports_trivial_classifier() {
        // Depth-1 oracle: predict the majority class per value of the first
        // retained column; must beat chance by a wide margin.
        let schema = FeatureSchema::synthetic_compact();
        let t = generate_synthetic(40, 5, &schema, 11).unwrap();
        let sig_col = t
            .schema
            .columns()
            .iter()
            .position(|c| !t.schema.is_excluded(&c.name))
            .unwrap();
        let labels = t.labels.as_ref().unwrap();
        let mut majority: Vec<(String, String)> = Vec::new();
        for (row, label) in t.rows.iter().zip(labels) {
            if !majority.iter().any(|(v, _)| v == &row[sig_col]) {
                majority.push((row[sig_col].clone(), label.clone()));
            }
        }
        let correct = t
            .rows
            .iter()
            .zip(labels)
            .filter(|(row, label)| {
                majority
                    .iter()
                    .find(|(v, _)| v == &row[sig_col])
                    .map(|(_, l)| l == *label)
                    .unwrap_or(false)
            })
            .count();
        let accuracy = correct as f64 / t.n_rows() as f64;
        assert!(accuracy > 0.9, "depth-1 oracle accuracy {accuracy}");
    }
}
