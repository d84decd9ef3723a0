use std::collections::HashMap;

use super::ReportError;

const BUILTIN: &str = include_str!("../../data/organs.txt");
pub const VOCABULARY_SIZE: usize = 201;

/// Lowercase and collapse internal whitespace.
pub fn normalize_label(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// The fixed, ordered set of organ labels findings may be matched to.
#[derive(Debug, Clone, PartialEq)]
pub struct OrganVocabulary {
    labels: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl OrganVocabulary {
    /// The 201-label thorax/abdomen vocabulary shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("bundled organ list is valid")
    }

    /// One label per line; blank lines ignored. Must yield exactly
    /// [`VOCABULARY_SIZE`] unique labels.
    pub fn parse(text: &str) -> Result<Self, ReportError> {
        let mut labels = Vec::new();
        let mut lookup = HashMap::new();
        for line in text.lines() {
            let label = normalize_label(line);
            if label.is_empty() {
                continue;
            }
            if lookup.insert(label.clone(), labels.len()).is_some() {
                return Err(ReportError::Vocabulary(format!("duplicate label {label:?}")));
            }
            labels.push(label);
        }
        if labels.len() != VOCABULARY_SIZE {
            return Err(ReportError::Vocabulary(format!(
                "expected {VOCABULARY_SIZE} labels, found {}",
                labels.len()
            )));
        }
        Ok(Self { labels, lookup })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The canonical spelling of `label`, if it is in the vocabulary.
    pub fn resolve(&self, label: &str) -> Option<&str> {
        self.lookup
            .get(&normalize_label(label))
            .map(|&i| self.labels[i].as_str())
    }

    pub fn contains(&self, label: &str) -> bool {
        self.resolve(label).is_some()
    }

    /// Render as a Python-style list literal, the form the prompts use.
    pub fn as_list_literal(&self) -> String {
        let quoted: Vec<String> = self.labels.iter().map(|l| format!("'{l}'")).collect();
        format!("[{}]", quoted.join(", "))
    }
}
