//! Annotated report corpus: data model, Doccano ingestion, validation,
//! label statistics and stratified splitting.

mod doccano;
mod split;
mod stats;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use doccano::{parse_doccano, write_doccano, IngestOptions, IngestWarning, OverlapPolicy};
pub use split::{split, Fraction, SplitAssignment, SplitCorpora, SplitName, SplitSpec};
pub use stats::rows_sum_to_total;
pub use stats::{label_distribution, LabelDistribution};

use crate::span::{char_len, Span};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(
        "document `{id}`: span [{start}, {end}, {label}] out of bounds for text of {len} chars"
    )]
    SpanOutOfBounds {
        id: String,
        start: usize,
        end: usize,
        label: String,
        len: usize,
    },
    #[error("document `{id}`: overlapping spans {first:?} and {second:?}")]
    OverlappingSpans {
        id: String,
        first: Span,
        second: Span,
    },
    #[error("document `{id}`: unknown label `{label}`")]
    UnknownLabel { id: String, label: String },
    #[error("document `{id}`: empty text")]
    EmptyText { id: String },
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Report category a document was sampled from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    BreastPathology,
    LungPathology,
    LungSymptomatology,
}

impl Category {
    pub const ALL: [Category; 3] = [
        Category::BreastPathology,
        Category::LungPathology,
        Category::LungSymptomatology,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::BreastPathology => "breast_pathology",
            Category::LungPathology => "lung_pathology",
            Category::LungSymptomatology => "lung_symptomatology",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

/// A clinical report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    /// `None` when the export carries no category field.
    pub category: Option<Category>,
    pub text: String,
}

/// A report with its gold entity spans, sorted by `(start, end)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotatedDocument {
    pub document: Document,
    pub spans: Vec<Span>,
}

impl AnnotatedDocument {
    pub fn id(&self) -> &str {
        &self.document.id
    }

    pub fn text(&self) -> &str {
        &self.document.text
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<AnnotatedDocument>,
}

impl Corpus {
    pub fn new(documents: Vec<AnnotatedDocument>) -> Self {
        Corpus { documents }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&AnnotatedDocument> {
        self.documents.iter().find(|d| d.id() == id)
    }

    /// Id → position lookup table.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id(), i))
            .collect()
    }

    pub fn span_count(&self) -> usize {
        self.documents.iter().map(|d| d.spans.len()).sum()
    }
}

/// A broken corpus invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DuplicateId {
        id: String,
    },
    EmptyText {
        id: String,
    },
    EmptySpan {
        id: String,
        span: Span,
    },
    SpanOutOfBounds {
        id: String,
        span: Span,
        len: usize,
    },
    UnsortedSpans {
        id: String,
    },
    OverlappingSpans {
        id: String,
        first: Span,
        second: Span,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { id } => write!(f, "duplicate document id `{id}`"),
            Violation::EmptyText { id } => write!(f, "document `{id}`: empty text"),
            Violation::EmptySpan { id, span } => {
                write!(f, "document `{id}`: empty span {span:?}")
            }
            Violation::SpanOutOfBounds { id, span, len } => write!(
                f,
                "document `{id}`: span [{}, {}, {}] exceeds text length {len}",
                span.start, span.end, span.label
            ),
            Violation::UnsortedSpans { id } => write!(f, "document `{id}`: spans not sorted"),
            Violation::OverlappingSpans { id, first, second } => write!(
                f,
                "document `{id}`: spans [{}, {}, {}] and [{}, {}, {}] overlap",
                first.start, first.end, first.label, second.start, second.end, second.label
            ),
        }
    }
}

/// Check every corpus invariant. An empty result means the corpus is valid.
pub fn validate(corpus: &Corpus) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for doc in &corpus.documents {
        let id = doc.id();
        let count = seen.entry(id).or_insert(0);
        *count += 1;
        if *count > 1 {
            violations.push(Violation::DuplicateId { id: id.to_string() });
        }
        if doc.text().is_empty() {
            violations.push(Violation::EmptyText { id: id.to_string() });
        }
        let len = char_len(doc.text());
        for span in &doc.spans {
            if span.is_empty() {
                violations.push(Violation::EmptySpan {
                    id: id.to_string(),
                    span: *span,
                });
            } else if span.end > len {
                violations.push(Violation::SpanOutOfBounds {
                    id: id.to_string(),
                    span: *span,
                    len,
                });
            }
        }
        if doc
            .spans
            .windows(2)
            .any(|w| (w[0].start, w[0].end) > (w[1].start, w[1].end))
        {
            violations.push(Violation::UnsortedSpans { id: id.to_string() });
        }
        let mut sorted = doc.spans.clone();
        sorted.sort();
        // Compare each span with the furthest-reaching earlier one so that a
        // long span covering several later ones is reported against each.
        let mut reach: Option<Span> = None;
        for span in sorted {
            if let Some(prev) = reach {
                if span.start < prev.end {
                    violations.push(Violation::OverlappingSpans {
                        id: id.to_string(),
                        first: prev,
                        second: span,
                    });
                }
                if span.end > prev.end {
                    reach = Some(span);
                }
            } else {
                reach = Some(span);
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Label;

    fn doc(id: &str, text: &str, spans: Vec<Span>) -> AnnotatedDocument {
        AnnotatedDocument {
            document: Document {
                id: id.into(),
                category: None,
                text: text.into(),
            },
            spans,
        }
    }

    #[test]
    fn well_formed_corpus_has_no_violations() {
        let corpus = Corpus::new(vec![
            doc("a", "Mama derecha", vec![Span::new(0, 12, Label::Pat)]),
            doc("b", "TAC", vec![Span::new(0, 3, Label::Met)]),
        ]);
        assert!(validate(&corpus).is_empty());
    }

    #[test]
    fn one_violation_per_duplicate() {
        let corpus = Corpus::new(vec![
            doc("a", "x", vec![]),
            doc("a", "y", vec![]),
            doc("b", "z", vec![]),
            doc("a", "w", vec![]),
        ]);
        let v = validate(&corpus);
        assert_eq!(
            v,
            vec![
                Violation::DuplicateId { id: "a".into() },
                Violation::DuplicateId { id: "a".into() }
            ]
        );
    }

    #[test]
    fn overlap_reported_once() {
        let corpus = Corpus::new(vec![doc(
            "a",
            "carcinoma ductal",
            vec![Span::new(0, 9, Label::Pat), Span::new(5, 16, Label::Pat)],
        )]);
        let v = validate(&corpus);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::OverlappingSpans { .. }));
    }

    #[test]
    fn validate_does_not_mutate() {
        let corpus = Corpus::new(vec![doc("a", "abc", vec![Span::new(0, 9, Label::Met)])]);
        let before = corpus.clone();
        let v = validate(&corpus);
        assert_eq!(v.len(), 1);
        assert_eq!(corpus, before);
    }
}
