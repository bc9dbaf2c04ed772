//! Rectangular feature table: rows of value strings aligned to a schema.

use serde::{Deserialize, Serialize};

use super::schema::FeatureSchema;
use super::IngestError;

/// A labeled (or unlabeled) rectangular table of feature value strings.
/// Every row has exactly one value per schema column; labels, when present,
/// align one-to-one with rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub schema: FeatureSchema,
    pub rows: Vec<Vec<String>>,
    pub labels: Option<Vec<String>>,
}

impl FeatureTable {
    pub fn new(
        schema: FeatureSchema,
        rows: Vec<Vec<String>>,
        labels: Option<Vec<String>>,
    ) -> Result<Self, IngestError> {
        let width = schema.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(IngestError::RaggedRow {
                    row: i,
                    expected: width,
                    got: row.len(),
                });
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != rows.len() {
                return Err(IngestError::RaggedRow {
                    row: labels.len().min(rows.len()),
                    expected: rows.len(),
                    got: labels.len(),
                });
            }
        }
        Ok(Self {
            schema,
            rows,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_columns(&self) -> usize {
        self.schema.len()
    }

    /// A new table containing the given row indices, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureTable {
        FeatureTable {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|ls| indices.iter().map(|&i| ls[i].clone()).collect()),
        }
    }

    /// Per-class row counts, keyed by label name in first-seen order.
    pub fn class_counts(&self) -> Vec<(String, usize)> {
        let mut counts: Vec<(String, usize)> = Vec::new();
        if let Some(labels) = &self.labels {
            for label in labels {
                match counts.iter_mut().find(|(name, _)| name == label) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((label.clone(), 1)),
                }
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::schema::{Column, ValueKind};

    fn schema2() -> FeatureSchema {
        FeatureSchema::new(
            vec![
                Column {
                    name: "a".into(),
                    protocol_layer: "x".into(),
                    value_kind: ValueKind::String,
                },
                Column {
                    name: "b".into(),
                    protocol_layer: "x".into(),
                    value_kind: ValueKind::UnsignedInt,
                },
            ],
            [],
        )
        .unwrap()
    }

    #[test]
    fn rejects_ragged_rows_and_label_mismatch() {
        let err = FeatureTable::new(schema2(), vec![vec!["1".into()]], None).unwrap_err();
        assert!(matches!(err, IngestError::RaggedRow { .. }));
        let err = FeatureTable::new(
            schema2(),
            vec![vec!["1".into(), "2".into()]],
            Some(vec![]),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::RaggedRow { .. }));
    }

    #[test]
    fn select_rows_keeps_label_alignment() {
        let t = FeatureTable::new(
            schema2(),
            vec![
                vec!["1".into(), "2".into()],
                vec!["3".into(), "4".into()],
            ],
            Some(vec!["x".into(), "y".into()]),
        )
        .unwrap();
        let s = t.select_rows(&[1]);
        assert_eq!(s.rows, vec![vec!["3".to_string(), "4".to_string()]]);
        assert_eq!(s.labels, Some(vec!["y".to_string()]));
    }
}
