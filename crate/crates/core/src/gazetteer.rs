//! Dictionary tagger: a hierarchical term list compiled into an
//! Aho-Corasick automaton over normalized text.
//!
//! Normalization lowercases, strips combining marks after canonical
//! decomposition (`á` → `a`) and collapses whitespace runs. Matches must
//! start and end on word boundaries of the normalized text. Overlapping
//! matches are resolved leftmost-longest; equal `(start, end)` candidates
//! go to the label ranked first in [`Label::PRIORITY`].

use std::collections::{HashMap, HashSet};
use std::io::Read;

use aho_corasick::{AhoCorasick, MatchKind};
use serde::Deserialize;
use unicode_normalization::char::{decompose_canonical, is_combining_mark};

use crate::label::Label;
use crate::preprocess::{Direction, PreprocessedDocument, Projected};
use crate::span::Span;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DictionaryEntry {
    pub surface: String,
    pub label: Label,
    /// Hierarchy from the label down, e.g. `["TTO", "quimioterapia"]`.
    pub category_path: Vec<String>,
}

impl DictionaryEntry {
    pub fn normalized(&self) -> String {
        normalize_term(&self.surface)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dictionary {
    pub entries: Vec<DictionaryEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum GazetteerError {
    #[error("dictionary line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("dictionary line {line}: unknown label `{label}`")]
    UnknownLabel { line: u64, label: String },
    #[error("dictionary line {line}: empty surface")]
    EmptySurface { line: u64 },
    #[error("dictionary line {line}: category path `{path}` does not start with label {label}")]
    PathMismatch {
        line: u64,
        label: Label,
        path: String,
    },
    #[error("cannot build matcher: {0}")]
    Build(#[from] aho_corasick::BuildError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DictionaryWarning {
    /// A later row normalized to an already loaded `(surface, label)`.
    Merged {
        line: u64,
        surface: String,
        label: Label,
    },
}

#[derive(Deserialize)]
struct Row {
    surface: String,
    label: String,
    #[serde(default)]
    category_path: String,
}

/// Read a UTF-8 CSV with header `surface,label,category_path`
/// (`/`-separated path; an empty path defaults to the label).
pub fn load_dictionary<R: Read>(
    input: R,
) -> Result<(Dictionary, Vec<DictionaryWarning>), GazetteerError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut dict = Dictionary::default();
    let mut warnings = Vec::new();
    let mut seen: HashSet<(String, Label)> = HashSet::new();
    let headers = reader
        .headers()
        .map_err(|e| GazetteerError::Malformed {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    for record in reader.records() {
        let malformed = |e: csv::Error| GazetteerError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        };
        let record = record.map_err(malformed)?;
        let line = record.position().map_or(0, |p| p.line());
        let row: Row =
            record
                .deserialize(Some(&headers))
                .map_err(|e| GazetteerError::Malformed {
                    line,
                    reason: e.to_string(),
                })?;
        let label: Label = row
            .label
            .parse()
            .map_err(|_| GazetteerError::UnknownLabel {
                line,
                label: row.label.clone(),
            })?;
        let normalized = normalize_term(&row.surface);
        if normalized.is_empty() {
            return Err(GazetteerError::EmptySurface { line });
        }
        let category_path: Vec<String> = if row.category_path.is_empty() {
            vec![label.as_str().to_string()]
        } else {
            row.category_path
                .split('/')
                .map(|p| p.trim().to_string())
                .collect()
        };
        if category_path[0] != label.as_str() {
            return Err(GazetteerError::PathMismatch {
                line,
                label,
                path: row.category_path,
            });
        }
        if !seen.insert((normalized, label)) {
            warnings.push(DictionaryWarning::Merged {
                line,
                surface: row.surface,
                label,
            });
            continue;
        }
        dict.entries.push(DictionaryEntry {
            surface: row.surface,
            label,
            category_path,
        });
    }
    Ok((dict, warnings))
}

/// Normalized characters of `c`, in order.
fn fold_char(c: char, out: &mut impl FnMut(char)) {
    for lower in c.to_lowercase() {
        decompose_canonical(lower, |d| {
            if !is_combining_mark(d) {
                out(d)
            }
        });
    }
}

/// Lowercase, strip accents and collapse whitespace; idempotent.
pub fn normalize_term(text: &str) -> String {
    let folded = NormalizedText::new(text);
    folded.text.trim_matches(' ').to_string()
}

/// Normalized text with, for each normalized char, the original char it
/// came from.
struct NormalizedText {
    text: String,
    chars: Vec<char>,
    origin: Vec<usize>,
    /// Byte offset in `text` → char index, for automaton hits.
    char_at_byte: Vec<usize>,
}

impl NormalizedText {
    fn new(original: &str) -> Self {
        let mut chars = Vec::new();
        let mut origin = Vec::new();
        let mut in_space = false;
        for (i, c) in original.chars().enumerate() {
            if c.is_whitespace() {
                if !in_space {
                    chars.push(' ');
                    origin.push(i);
                }
                in_space = true;
                continue;
            }
            let before = chars.len();
            fold_char(c, &mut |d| {
                chars.push(d);
                origin.push(i);
            });
            if chars.len() > before {
                in_space = false;
            }
        }
        let text: String = chars.iter().collect();
        let mut char_at_byte = vec![0; text.len() + 1];
        for (ci, (bi, _)) in text.char_indices().enumerate() {
            char_at_byte[bi] = ci;
        }
        char_at_byte[text.len()] = chars.len();
        NormalizedText {
            text,
            chars,
            origin,
            char_at_byte,
        }
    }

    fn is_boundary(&self, pos: usize) -> bool {
        let word = |i: usize| self.chars.get(i).is_some_and(|c| c.is_alphanumeric());
        pos == 0 || pos == self.chars.len() || !(word(pos - 1) && word(pos))
    }

    /// Original-text range covering normalized chars `[start, end)`,
    /// including combining marks trailing the last one.
    fn original_range(&self, start: usize, end: usize, original: &[char]) -> (usize, usize) {
        let s = self.origin[start];
        let mut e = self.origin[end - 1] + 1;
        while e < original.len() && is_combining_mark(original[e]) {
            e += 1;
        }
        (s, e)
    }
}

/// A dictionary compiled for matching. Immutable and shareable across
/// threads.
#[derive(Clone, Debug)]
pub struct CompiledMatcher {
    automaton: Option<AhoCorasick>,
    /// Label of each distinct normalized surface, by pattern id.
    patterns: Vec<Label>,
}

impl CompiledMatcher {
    pub fn new(dict: &Dictionary) -> Result<Self, GazetteerError> {
        let mut best: HashMap<String, Label> = HashMap::new();
        for entry in &dict.entries {
            best.entry(entry.normalized())
                .and_modify(|l| {
                    if entry.label.priority_rank() < l.priority_rank() {
                        *l = entry.label;
                    }
                })
                .or_insert(entry.label);
        }
        let mut surfaces: Vec<(String, Label)> = best.into_iter().collect();
        surfaces.sort();
        if surfaces.is_empty() {
            return Ok(CompiledMatcher {
                automaton: None,
                patterns: Vec::new(),
            });
        }
        let automaton = AhoCorasick::builder()
            .match_kind(MatchKind::Standard)
            .build(surfaces.iter().map(|(s, _)| s))?;
        let patterns = surfaces.iter().map(|(_, l)| *l).collect();
        Ok(CompiledMatcher {
            automaton: Some(automaton),
            patterns,
        })
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns.len()
    }

    /// Every boundary-respecting occurrence, in normalized coordinates.
    fn candidates(&self, norm: &NormalizedText) -> Vec<(usize, usize, Label)> {
        let Some(ac) = &self.automaton else {
            return Vec::new();
        };
        ac.find_overlapping_iter(&norm.text)
            .filter_map(|m| {
                let label = self.patterns[m.pattern().as_usize()];
                let start = norm.char_at_byte[m.start()];
                let end = norm.char_at_byte[m.end()];
                (norm.is_boundary(start) && norm.is_boundary(end)).then_some((start, end, label))
            })
            .collect()
    }

    /// Tag `text`; spans are in its own character coordinates, sorted and
    /// non-overlapping.
    pub fn tag_text(&self, text: &str) -> Vec<Span> {
        let norm = NormalizedText::new(text);
        let original: Vec<char> = text.chars().collect();
        select_leftmost_longest(self.candidates(&norm))
            .into_iter()
            .map(|(s, e, label)| {
                let (s, e) = norm.original_range(s, e, &original);
                Span::new(s, e, label)
            })
            .collect()
    }

    /// Tag the clean text of a preprocessed document and project the spans
    /// back onto its original text. A span whose projection would overlap an
    /// earlier one is dropped.
    pub fn tag_preprocessed(&self, doc: &PreprocessedDocument) -> Vec<Span> {
        let mut out: Vec<Span> = Vec::new();
        for span in self.tag_text(&doc.clean_text) {
            let projected =
                crate::preprocess::project_labelled(&doc.offset_map, Direction::Backward, span);
            if let Ok(Projected::Span(s)) = projected {
                if out.last().is_none_or(|p| p.end <= s.start) {
                    out.push(s);
                }
            }
        }
        out
    }
}

/// Greedy selection: by start, then longest, then label priority; a
/// candidate overlapping an already chosen one is skipped.
pub(crate) fn select_leftmost_longest(
    mut candidates: Vec<(usize, usize, Label)>,
) -> Vec<(usize, usize, Label)> {
    candidates.sort_by_key(|&(s, e, l)| (s, std::cmp::Reverse(e), l.priority_rank()));
    let mut chosen: Vec<(usize, usize, Label)> = Vec::new();
    for c in candidates {
        if chosen.last().is_none_or(|p| p.1 <= c.0) {
            chosen.push(c);
        }
    }
    chosen
}
