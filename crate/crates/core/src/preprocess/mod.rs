//! Deterministic text pre-processing with an exact offset map back to the
//! original report.
//!
//! Passes always run in this order, each one individually switchable:
//!
//! 1. `nfc`: Unicode canonical composition.
//! 2. `spaces`: runs of spaces/tabs become one space.
//! 3. `dehyphenate`: `letter-\nlowercase` line-break hyphenation is joined.
//! 4. `newlines`: a single line break becomes a space, blank lines become
//!    one paragraph break (`\n\n`).
//! 5. `bullets`: leading `•`/`–` glyphs become `- `.
//! 6. `staging`: a TNM code glued to a word is split off
//!    (`estadiopT1` → `estadio pT1`, `pT1N0M0` untouched).
//!
//! The full pipeline is idempotent.

mod offset_map;
mod passes;

use std::fmt;
use std::str::FromStr;

pub use offset_map::{
    Direction, MapBuilder, OffsetMap, OffsetMapError, Projection, Segment, SegmentKind,
};
pub use passes::is_tnm_code;

use crate::corpus::AnnotatedDocument;
use crate::span::{Span, TextRange};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pass {
    Nfc,
    CollapseSpaces,
    JoinHyphenation,
    JoinLines,
    Bullets,
    SplitStaging,
}

impl Pass {
    pub const ALL: [Pass; 6] = [
        Pass::Nfc,
        Pass::CollapseSpaces,
        Pass::JoinHyphenation,
        Pass::JoinLines,
        Pass::Bullets,
        Pass::SplitStaging,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pass::Nfc => "nfc",
            Pass::CollapseSpaces => "spaces",
            Pass::JoinHyphenation => "dehyphenate",
            Pass::JoinLines => "newlines",
            Pass::Bullets => "bullets",
            Pass::SplitStaging => "staging",
        }
    }

    fn apply(self, chars: &[char]) -> (String, OffsetMap) {
        match self {
            Pass::Nfc => passes::nfc(chars),
            Pass::CollapseSpaces => passes::collapse_spaces(chars),
            Pass::JoinHyphenation => passes::join_hyphenation(chars),
            Pass::JoinLines => passes::join_lines(chars),
            Pass::Bullets => passes::normalize_bullets(chars),
            Pass::SplitStaging => passes::split_staging(chars),
        }
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pass::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Pass::ALL.iter().map(|p| p.name()).collect();
                format!("unknown pass `{s}` (known: {})", known.join(", "))
            })
    }
}

/// The set of enabled passes. Listing order is irrelevant; execution order
/// is always [`Pass::ALL`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PassConfig {
    enabled: [bool; 6],
}

impl PassConfig {
    pub fn all() -> Self {
        PassConfig { enabled: [true; 6] }
    }

    pub fn none() -> Self {
        PassConfig {
            enabled: [false; 6],
        }
    }

    pub fn only(passes: &[Pass]) -> Self {
        let mut c = Self::none();
        for p in passes {
            c.enabled[*p as usize] = true;
        }
        c
    }

    pub fn is_enabled(&self, pass: Pass) -> bool {
        self.enabled[pass as usize]
    }

    pub fn passes(&self) -> Vec<Pass> {
        Pass::ALL
            .iter()
            .copied()
            .filter(|p| self.is_enabled(*p))
            .collect()
    }
}

impl Default for PassConfig {
    fn default() -> Self {
        Self::all()
    }
}

impl FromStr for PassConfig {
    type Err = String;

    /// `all`, `none`, or a comma-separated list of pass names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "all" => Ok(Self::all()),
            "none" | "" => Ok(Self::none()),
            list => {
                let passes = list
                    .split(',')
                    .map(|p| p.trim().parse::<Pass>())
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Self::only(&passes))
            }
        }
    }
}

impl fmt::Display for PassConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.passes().iter().map(|p| p.name()).collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreprocessedDocument {
    pub id: String,
    pub clean_text: String,
    /// Original text → `clean_text`.
    pub offset_map: OffsetMap,
    pub passes: Vec<Pass>,
}

/// Where a gold span lands after projection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projected {
    Span(Span),
    /// The span covered only removed material.
    Dropped(Span),
}

impl PreprocessedDocument {
    /// Project an original-text span onto the clean text.
    pub fn span_to_clean(&self, span: Span) -> Result<Projected, OffsetMapError> {
        project_labelled(&self.offset_map, Direction::Forward, span)
    }

    /// Project a clean-text span back onto the original text.
    pub fn span_to_original(&self, span: Span) -> Result<Projected, OffsetMapError> {
        project_labelled(&self.offset_map, Direction::Backward, span)
    }
}

pub fn project_labelled(
    map: &OffsetMap,
    dir: Direction,
    span: Span,
) -> Result<Projected, OffsetMapError> {
    Ok(
        match map.project(dir, TextRange::new(span.start, span.end))? {
            Projection::Mapped(r) => Projected::Span(r.with_label(span.label)),
            Projection::Dropped { .. } => Projected::Dropped(span),
        },
    )
}

/// Run the enabled passes over `text`.
pub fn preprocess(text: &str, config: &PassConfig) -> PreprocessedDocument {
    let mut current: Vec<char> = text.chars().collect();
    let mut map = OffsetMap::identity(current.len());
    let mut applied = Vec::new();
    for pass in config.passes() {
        let (out, step) = pass.apply(&current);
        applied.push(pass);
        if step.is_identity() {
            continue;
        }
        map = map.compose(&step).expect("each pass maps its whole input");
        current = out.chars().collect();
    }
    PreprocessedDocument {
        id: String::new(),
        clean_text: current.into_iter().collect(),
        offset_map: map,
        passes: applied,
    }
}

pub fn preprocess_document(doc: &AnnotatedDocument, config: &PassConfig) -> PreprocessedDocument {
    let mut out = preprocess(doc.text(), config);
    out.id = doc.id().to_string();
    out
}
