use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::Serialize;
use serde_json::Value;

use super::{AnnotatedDocument, Category, Corpus, CorpusError, Document};
use crate::label::Label;
use crate::span::{char_len, Span};

/// What to do when two gold spans of one document overlap.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OverlapPolicy {
    #[default]
    Abort,
    /// Keep the longer span; on equal length keep the one starting first.
    KeepLonger,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IngestOptions {
    pub overlaps: OverlapPolicy,
    pub ignore_unknown_labels: bool,
}

/// Recoverable issue found while ingesting under a permissive policy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IngestWarning {
    UnknownLabel {
        id: String,
        label: String,
    },
    DroppedOverlap {
        id: String,
        kept: Span,
        dropped: Span,
    },
}

impl std::fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IngestWarning::UnknownLabel { id, label } => {
                write!(
                    f,
                    "document `{id}`: dropped span with unknown label `{label}`"
                )
            }
            IngestWarning::DroppedOverlap { id, kept, dropped } => write!(
                f,
                "document `{id}`: dropped [{}, {}, {}] overlapping kept [{}, {}, {}]",
                dropped.start, dropped.end, dropped.label, kept.start, kept.end, kept.label
            ),
        }
    }
}

/// Parse a Doccano span-annotation export (one JSON object per line with
/// `id`, `text` and `label` = list of `[start, end, name]`).
///
/// An optional top-level `category` field is read when present. Blank lines
/// are skipped.
pub fn parse_doccano<R: BufRead>(
    reader: R,
    options: &IngestOptions,
) -> Result<(Corpus, Vec<IngestWarning>), CorpusError> {
    let mut documents = Vec::new();
    let mut warnings = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_record(&line, line_no, options, &mut warnings)?;
        if !ids.insert(doc.document.id.clone()) {
            return Err(CorpusError::DuplicateId(doc.document.id));
        }
        documents.push(doc);
    }
    Ok((Corpus::new(documents), warnings))
}

fn malformed(line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::Malformed {
        line,
        reason: reason.into(),
    }
}

fn parse_record(
    line: &str,
    line_no: usize,
    options: &IngestOptions,
    warnings: &mut Vec<IngestWarning>,
) -> Result<AnnotatedDocument, CorpusError> {
    let value: Value = serde_json::from_str(line).map_err(|e| malformed(line_no, e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| malformed(line_no, "record is not a JSON object"))?;

    let id = match obj.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(malformed(line_no, "`id` must be a string or a number")),
        None => return Err(malformed(line_no, "missing `id`")),
    };
    let text = match obj.get("text") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(malformed(line_no, "`text` must be a string")),
        None => return Err(malformed(line_no, "missing `text`")),
    };
    if text.is_empty() {
        return Err(CorpusError::EmptyText { id });
    }
    let category = match obj.get("category") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.parse::<Category>().map_err(|e| malformed(line_no, e))?),
        Some(_) => return Err(malformed(line_no, "`category` must be a string")),
    };
    let raw_spans = match obj.get("label") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items.clone(),
        Some(_) => return Err(malformed(line_no, "`label` must be a list")),
    };

    let len = char_len(&text);
    let mut spans = Vec::with_capacity(raw_spans.len());
    for item in &raw_spans {
        let triple = item.as_array().filter(|t| t.len() == 3).ok_or_else(|| {
            malformed(
                line_no,
                format!("span {item} is not a [start, end, label] triple"),
            )
        })?;
        let start = triple[0].as_u64().ok_or_else(|| {
            malformed(
                line_no,
                format!("span {item}: start is not a non-negative integer"),
            )
        })? as usize;
        let end = triple[1].as_u64().ok_or_else(|| {
            malformed(
                line_no,
                format!("span {item}: end is not a non-negative integer"),
            )
        })? as usize;
        let name = triple[2]
            .as_str()
            .ok_or_else(|| malformed(line_no, format!("span {item}: label is not a string")))?;
        if start >= end || end > len {
            return Err(CorpusError::SpanOutOfBounds {
                id,
                start,
                end,
                label: name.to_string(),
                len,
            });
        }
        match name.parse::<Label>() {
            Ok(label) => spans.push(Span::new(start, end, label)),
            Err(_) if options.ignore_unknown_labels => warnings.push(IngestWarning::UnknownLabel {
                id: id.clone(),
                label: name.to_string(),
            }),
            Err(_) => {
                return Err(CorpusError::UnknownLabel {
                    id,
                    label: name.to_string(),
                })
            }
        }
    }
    spans.sort();
    spans.dedup();
    let spans = resolve_overlaps(&id, spans, options.overlaps, warnings)?;

    Ok(AnnotatedDocument {
        document: Document { id, category, text },
        spans,
    })
}

fn resolve_overlaps(
    id: &str,
    sorted: Vec<Span>,
    policy: OverlapPolicy,
    warnings: &mut Vec<IngestWarning>,
) -> Result<Vec<Span>, CorpusError> {
    let mut kept: Vec<Span> = Vec::with_capacity(sorted.len());
    for span in sorted {
        match kept.last_mut() {
            Some(last) if span.start < last.end => match policy {
                OverlapPolicy::Abort => {
                    return Err(CorpusError::OverlappingSpans {
                        id: id.to_string(),
                        first: *last,
                        second: span,
                    })
                }
                OverlapPolicy::KeepLonger => {
                    let (keep, drop) = if span.len() > last.len() {
                        (span, *last)
                    } else {
                        (*last, span)
                    };
                    warnings.push(IngestWarning::DroppedOverlap {
                        id: id.to_string(),
                        kept: keep,
                        dropped: drop,
                    });
                    *last = keep;
                }
            },
            _ => kept.push(span),
        }
    }
    Ok(kept)
}

#[derive(Serialize)]
struct Record<'a> {
    id: &'a str,
    text: &'a str,
    label: Vec<(usize, usize, &'static str)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    category: Option<&'static str>,
}

/// Write the canonical serialization: one Doccano record per line, spans
/// sorted, ids as strings.
pub fn write_doccano<W: Write>(corpus: &Corpus, mut out: W) -> std::io::Result<()> {
    for doc in &corpus.documents {
        let mut spans = doc.spans.clone();
        spans.sort();
        let record = Record {
            id: &doc.document.id,
            text: &doc.document.text,
            label: spans
                .iter()
                .map(|s| (s.start, s.end, s.label.as_str()))
                .collect(),
            category: doc.document.category.map(Category::as_str),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
