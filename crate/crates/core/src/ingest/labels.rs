//! The fixed 15-class label set: normal traffic plus 14 attack types.

use serde::{Deserialize, Serialize};

use super::IngestError;

/// Canonical class names in index order. Index 0 is normal traffic; the
/// attack classes follow in their conventional reporting order.
pub const CLASS_NAMES: [&str; 15] = [
    "Normal",
    "DDoS_UDP",
    "DDoS_ICMP",
    "SQL_injection",
    "Password",
    "Vulnerability_scanner",
    "DDoS_TCP",
    "DDoS_HTTP",
    "Uploading",
    "Backdoor",
    "Port_Scanning",
    "XSS",
    "Ransomware",
    "MITM",
    "Fingerprinting",
];

/// A class name paired with its fixed index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLabel {
    pub name: String,
    pub index: usize,
}

/// Ordered set of class labels; lookups go both ways.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLabelSet {
    names: Vec<String>,
}

impl ClassLabelSet {
    /// The full 15-class set.
    pub fn full() -> Self {
        Self {
            names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// The first `n` canonical classes (normal first). `n` must be in 1..=15.
    pub fn first(n: usize) -> Result<Self, IngestError> {
        if n == 0 || n > CLASS_NAMES.len() {
            return Err(IngestError::SchemaInvalid {
                reason: format!("class count {n} outside 1..=15"),
            });
        }
        Ok(Self {
            names: CLASS_NAMES[..n].iter().map(|s| s.to_string()).collect(),
        })
    }

    /// A label set over arbitrary names, in the given order.
    pub fn from_names(names: Vec<String>) -> Self {
        Self { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(|s| s.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn labels(&self) -> impl Iterator<Item = ClassLabel> + '_ {
        self.names.iter().enumerate().map(|(index, name)| ClassLabel {
            name: name.clone(),
            index,
        })
    }

    /// Maps class names to indices, failing on the first unknown name.
    pub fn indices_for(&self, names: &[String]) -> Result<Vec<usize>, IngestError> {
        names
            .iter()
            .map(|n| {
                self.index_of(n).ok_or_else(|| IngestError::UnknownLabel {
                    value: n.clone(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_set_has_15_distinct_names() {
        let set = ClassLabelSet::full();
        assert_eq!(set.len(), 15);
        assert_eq!(set.index_of("Normal"), Some(0));
        assert_eq!(set.index_of("Fingerprinting"), Some(14));
        let mut sorted: Vec<_> = set.names().to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 15);
    }

    #[test]
    fn unknown_label_is_an_error() {
        let set = ClassLabelSet::full();
        let err = set.indices_for(&["NotAClass".to_string()]).unwrap_err();
        assert!(matches!(err, IngestError::UnknownLabel { .. }));
    }

    #[test]
    fn first_n_bounds() {
        assert!(ClassLabelSet::first(0).is_err());
        assert!(ClassLabelSet::first(16).is_err());
        assert_eq!(ClassLabelSet::first(3).unwrap().len(), 3);
    }
}
