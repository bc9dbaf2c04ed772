//! Privacy-preserving fixed-length encoding of feature tables.
//!
//! Every cell becomes the string `UPPER(COLUMN) + "$" + value`, which is
//! hashed; a row becomes the ordered, space-joined line of its per-column
//! digests. All lines of a table therefore have the same digest count and
//! the same character length, and raw values never appear in the output.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256, Sha512};
use thiserror::Error;

use crate::ingest::table::FeatureTable;

#[derive(Debug, Error)]
pub enum PpfleError {
    #[error("bad truncation length {len}: must be even, >= 8, and <= the digest length")]
    BadTruncation { len: usize },
    #[error("row {row}: expected {expected} values, got {got}")]
    ArityMismatch {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Digest algorithm for cell hashing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HashAlgorithm {
    #[default]
    Sha256,
    Sha512,
}

impl HashAlgorithm {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sha256" => Some(Self::Sha256),
            "sha512" => Some(Self::Sha512),
            _ => None,
        }
    }

    /// Full digest length in hex characters.
    pub fn hex_len(&self) -> usize {
        match self {
            Self::Sha256 => 64,
            Self::Sha512 => 128,
        }
    }
}

impl fmt::Display for HashAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Sha256 => f.write_str("sha256"),
            Self::Sha512 => f.write_str("sha512"),
        }
    }
}

/// Hashing configuration: algorithm plus an optional hex-prefix truncation.
/// Truncation must be even and at least 8; the default keeps the full digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct HashConfig {
    #[serde(default)]
    pub algorithm: HashAlgorithm,
    #[serde(default)]
    pub truncate_hex: Option<usize>,
}

impl HashConfig {
    pub fn validate(&self) -> Result<(), PpfleError> {
        if let Some(len) = self.truncate_hex {
            if len % 2 != 0 || len < 8 || len > self.algorithm.hex_len() {
                return Err(PpfleError::BadTruncation { len });
            }
        }
        Ok(())
    }

    /// Rendered digest length in hex characters.
    pub fn digest_len(&self) -> usize {
        self.truncate_hex.unwrap_or_else(|| self.algorithm.hex_len())
    }
}

/// A `NAME$value` cell string ready for hashing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellString {
    pub text: String,
}

/// One encoded row: ordered per-column digests, rendered space-joined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenLine {
    pub digests: Vec<String>,
}

impl TokenLine {
    pub fn render(&self) -> String {
        self.digests.join(" ")
    }
}

/// All encoded rows of a table, labels carried through aligned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataList {
    pub lines: Vec<TokenLine>,
    pub labels: Option<Vec<String>>,
}

/// Concatenates an upper-cased column name, the `$` separator, and the raw
/// value.
pub fn concat_cell(column_name: &str, value: &str) -> CellString {
    CellString {
        text: format!("{}${}", column_name.to_uppercase(), value),
    }
}

/// Lowercase hex digest of the UTF-8 bytes of a cell string, optionally
/// truncated to the configured prefix.
pub fn hash_cell(cell: &CellString, config: &HashConfig) -> Result<String, PpfleError> {
    config.validate()?;
    let mut hex = match config.algorithm {
        HashAlgorithm::Sha256 => hex::encode(Sha256::digest(cell.text.as_bytes())),
        HashAlgorithm::Sha512 => hex::encode(Sha512::digest(cell.text.as_bytes())),
    };
    if let Some(len) = config.truncate_hex {
        hex.truncate(len);
    }
    Ok(hex)
}

/// Encodes one row against the retained columns of a schema-aligned table.
pub fn encode_row(
    row: &[String],
    column_names: &[&str],
    config: &HashConfig,
) -> Result<TokenLine, PpfleError> {
    if row.len() != column_names.len() {
        return Err(PpfleError::ArityMismatch {
            row: 0,
            expected: column_names.len(),
            got: row.len(),
        });
    }
    let digests = column_names
        .iter()
        .zip(row)
        .map(|(name, value)| hash_cell(&concat_cell(name, value), config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TokenLine { digests })
}

/// Encodes a whole table, one line per row in row order. The table is used
/// as-is; run exclusion first if the schema carries excluded columns.
pub fn encode_table(table: &FeatureTable, config: &HashConfig) -> Result<DataList, PpfleError> {
    config.validate()?;
    let names: Vec<&str> = table.schema.names().collect();
    let lines = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            encode_row(row, &names, config).map_err(|e| match e {
                PpfleError::ArityMismatch { expected, got, .. } => PpfleError::ArityMismatch {
                    row: i,
                    expected,
                    got,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DataList {
        lines,
        labels: table.labels.clone(),
    })
}

/// Writes one space-joined line per row, newline-terminated, UTF-8; when a
/// label path is given, writes the aligned one-name-per-line sidecar.
pub fn write_corpus(
    dl: &DataList,
    corpus_path: &Path,
    labels_path: Option<&Path>,
) -> Result<(), PpfleError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source: std::io::Error| PpfleError::Io { path, source }
    };
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(corpus_path).map_err(io_err(corpus_path))?,
    );
    for line in &dl.lines {
        out.write_all(line.render().as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(io_err(corpus_path))?;
    }
    out.flush().map_err(io_err(corpus_path))?;
    if let (Some(path), Some(labels)) = (labels_path, &dl.labels) {
        let mut out =
            std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
        for label in labels {
            out.write_all(label.as_bytes())
                .and_then(|_| out.write_all(b"\n"))
                .map_err(io_err(path))?;
        }
        out.flush().map_err(io_err(path))?;
    }
    Ok(())
}

/// Reads a corpus written by [`write_corpus`] back into lines.
pub fn read_corpus(path: &Path) -> Result<Vec<String>, PpfleError> {
    let text = std::fs::read_to_string(path).map_err(|source| PpfleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::schema::FeatureSchema;
    use proptest::prelude::*;

    const SHA256_TCP_443: &str =
        "d91ef801a3254bbfc1b2a549a24200950f7b1acbdc459ba54194860f1a903f1c";
    const SHA256_METHOD_0: &str =
        "ed80d599405b02027b2675d212a58d105a0c30f4d71121859a0e85f4e434fdcc";

    #[test]
    fn concat_cell_uppercases_name_and_keeps_value() {
        assert_eq!(concat_cell("tcp.dstport", "443").text, "TCP.DSTPORT$443");
        assert_eq!(concat_cell("http.method", "0").text, "HTTP.METHOD$0");
        assert_eq!(concat_cell("x", "").text, "X$");
    }

    #[test]
    fn hash_cell_matches_reference_digest() {
        let cfg = HashConfig::default();
        let d = hash_cell(&concat_cell("tcp.dstport", "443"), &cfg).unwrap();
        assert_eq!(d, SHA256_TCP_443);
        let d = hash_cell(&concat_cell("http.method", "0"), &cfg).unwrap();
        assert_eq!(d, SHA256_METHOD_0);
        let again = hash_cell(&concat_cell("tcp.dstport", "443"), &cfg).unwrap();
        assert_eq!(d.len(), 64);
        assert_eq!(
            again,
            hash_cell(&concat_cell("tcp.dstport", "443"), &cfg).unwrap()
        );
    }

    #[test]
    fn truncation_rules() {
        for len in [7usize, 9, 6, 65, 130] {
            let cfg = HashConfig {
                algorithm: HashAlgorithm::Sha256,
                truncate_hex: Some(len),
            };
            assert!(
                matches!(cfg.validate(), Err(PpfleError::BadTruncation { .. })),
                "{len} should be rejected"
            );
        }
        let cfg = HashConfig {
            algorithm: HashAlgorithm::Sha256,
            truncate_hex: Some(16),
        };
        let d = hash_cell(&concat_cell("a", "b"), &cfg).unwrap();
        assert_eq!(d.len(), 16);
        let cfg512 = HashConfig {
            algorithm: HashAlgorithm::Sha512,
            truncate_hex: Some(100),
        };
        assert!(cfg512.validate().is_ok());
    }

    #[test]
    fn near_collision_pairs_differ() {
        let cfg = HashConfig::default();
        for i in 0..1000u32 {
            let a = hash_cell(&concat_cell("col", &format!("v{i}")), &cfg).unwrap();
            let b = hash_cell(&concat_cell("col", &format!("v{}", i + 1)), &cfg).unwrap();
            assert_ne!(a, b);
        }
    }

    fn table(names: &[&str], rows: Vec<Vec<String>>) -> FeatureTable {
        let text: String = names
            .iter()
            .map(|n| format!("{n} app string\n"))
            .collect();
        let schema = FeatureSchema::parse(&text).unwrap();
        FeatureTable::new(schema, rows, None).unwrap()
    }

    #[test]
    fn encode_row_is_positional() {
        let cfg = HashConfig::default();
        let names = ["a", "b"];
        let line1 = encode_row(&["x".into(), "y".into()], &names, &cfg).unwrap();
        let line2 = encode_row(&["y".into(), "x".into()], &names, &cfg).unwrap();
        assert_eq!(line1.digests.len(), 2);
        // Swapping values changes both positions (names differ), but each
        // digest is a pure function of (name, value).
        assert_eq!(
            line1.digests[0],
            hash_cell(&concat_cell("a", "x"), &cfg).unwrap()
        );
        assert_eq!(
            line2.digests[1],
            hash_cell(&concat_cell("b", "x"), &cfg).unwrap()
        );
        // Permuting whole columns (name with value) swaps digest positions
        // without changing digest values.
        let swapped = encode_row(&["y".into(), "x".into()], &["b", "a"], &cfg).unwrap();
        assert_eq!(swapped.digests[0], line1.digests[1]);
        assert_eq!(swapped.digests[1], line1.digests[0]);
    }

    #[test]
    fn all_zero_row_is_still_full_length() {
        let cfg = HashConfig::default();
        let line = encode_row(&["0".into(), "0".into(), "0".into()], &["a", "b", "c"], &cfg)
            .unwrap();
        assert_eq!(line.digests.len(), 3);
        assert!(line.digests.iter().all(|d| d.len() == 64));
    }

    #[test]
    fn arity_mismatch_reports_row() {
        let cfg = HashConfig::default();
        let t = table(&["a", "b"], vec![vec!["1".into(), "2".into()]]);
        let mut bad = t;
        bad.rows.push(vec!["only-one".into(), "x".into()]);
        bad.rows[1].pop();
        let err = encode_table(&bad, &cfg).unwrap_err();
        assert!(matches!(err, PpfleError::ArityMismatch { row: 1, .. }));
    }

    #[test]
    fn encode_table_matches_row_by_row() {
        let cfg = HashConfig::default();
        let t = table(
            &["a", "b"],
            vec![
                vec!["1".into(), "2".into()],
                vec!["3".into(), "4".into()],
                vec!["".into(), "GET".into()],
            ],
        );
        let dl = encode_table(&t, &cfg).unwrap();
        assert_eq!(dl.lines.len(), 3);
        let names: Vec<&str> = t.schema.names().collect();
        for (line, row) in dl.lines.iter().zip(&t.rows) {
            assert_eq!(line, &encode_row(row, &names, &cfg).unwrap());
        }
    }

    #[test]
    fn empty_table_encodes_to_empty_list() {
        let cfg = HashConfig::default();
        let t = table(&["a"], vec![]);
        let dl = encode_table(&t, &cfg).unwrap();
        assert!(dl.lines.is_empty());
    }

    #[test]
    fn corpus_write_read_round_trip_and_line_length() {
        let cfg = HashConfig::default();
        let names: Vec<String> = (0..61).map(|i| format!("c{i}")).collect();
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let row: Vec<String> = (0..61).map(|i| format!("v{i}")).collect();
        let line = encode_row(&row, &name_refs, &cfg).unwrap();
        let rendered = line.render();
        assert_eq!(rendered.len(), 61 * 64 + 60);

        let dl = DataList {
            lines: vec![line.clone(), line],
            labels: Some(vec!["Normal".into(), "MITM".into()]),
        };
        let dir = tempfile::tempdir().unwrap();
        let cp = dir.path().join("corpus.txt");
        let lp = dir.path().join("corpus.labels");
        write_corpus(&dl, &cp, Some(&lp)).unwrap();
        let lines = read_corpus(&cp).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], rendered);
        let labels = std::fs::read_to_string(&lp).unwrap();
        assert_eq!(labels, "Normal\nMITM\n");
    }

    proptest! {
        #[test]
        fn lines_have_fixed_length_and_conceal_values(
            n_cols in 1usize..8,
            n_rows in 0usize..8,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // Realistic traffic-ish values: always contain a character
            // outside the lowercase-hex alphabet, so concealment is exact.
            let pools = ["GET", "10.0.{}.7", "host{}.local", "scan-{}", "0x{}Z"];
            let names: Vec<String> = (0..n_cols).map(|i| format!("col{i}")).collect();
            let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            let rows: Vec<Vec<String>> = (0..n_rows)
                .map(|_| {
                    (0..n_cols)
                        .map(|_| {
                            let p = pools[rng.gen_range(0..pools.len())];
                            p.replace("{}", &rng.gen_range(0..100u32).to_string())
                        })
                        .collect()
                })
                .collect();
            let cfg = HashConfig { algorithm: HashAlgorithm::Sha256, truncate_hex: Some(16) };
            let mut corpus = String::new();
            for row in &rows {
                let line = encode_row(row, &name_refs, &cfg).unwrap();
                prop_assert_eq!(line.digests.len(), n_cols);
                let rendered = line.render();
                prop_assert_eq!(rendered.len(), n_cols * 16 + n_cols - 1);
                corpus.push_str(&rendered);
                corpus.push('\n');
            }
            for row in &rows {
                for value in row {
                    if value.len() >= 4 {
                        prop_assert!(!corpus.contains(value.as_str()),
                            "raw value {} leaked", value);
                    }
                }
            }
        }
    }
}
