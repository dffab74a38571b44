//! Tokenization and conversion between character spans and IOB2 tags.
//!
//! The 17 tags have a fixed order shared with the prediction interchange:
//! `O`, then `B-`/`I-` pairs for each label in alphabetical order.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use unicode_normalization::char::is_combining_mark;

use crate::label::Label;
use crate::span::{sorted_spans_disjoint, Span};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    O,
    B(Label),
    I(Label),
}

pub const TAG_COUNT: usize = 17;

impl Tag {
    /// All tags in canonical order.
    pub fn canonical() -> [Tag; TAG_COUNT] {
        let mut tags = [Tag::O; TAG_COUNT];
        for (i, label) in Label::ALPHABETICAL.iter().enumerate() {
            tags[1 + 2 * i] = Tag::B(*label);
            tags[2 + 2 * i] = Tag::I(*label);
        }
        tags
    }

    pub fn index(self) -> usize {
        match self {
            Tag::O => 0,
            Tag::B(l) => 1 + 2 * l.alphabetical_index(),
            Tag::I(l) => 2 + 2 * l.alphabetical_index(),
        }
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        (i < TAG_COUNT).then(|| Tag::canonical()[i])
    }

    pub fn label(self) -> Option<Label> {
        match self {
            Tag::O => None,
            Tag::B(l) | Tag::I(l) => Some(l),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::B(l) => write!(f, "B-{l}"),
            Tag::I(l) => write!(f, "I-{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown tag `{0}`")]
pub struct UnknownTag(pub String);

impl FromStr for Tag {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::O);
        }
        let parsed = match s.split_once('-') {
            Some(("B", l)) => l.parse().ok().map(Tag::B),
            Some(("I", l)) => l.parse().ok().map(Tag::I),
            _ => None,
        };
        parsed.ok_or_else(|| UnknownTag(s.to_string()))
    }
}

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

const CONNECTORS: [char; 3] = ['-', '/', '+'];

/// Split on whitespace; punctuation becomes single-character tokens except
/// `-`, `/` and `+` between two word characters (`HER-2`, `c/u`).
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    let flush = |tokens: &mut Vec<Token>, start: &mut Option<usize>, end: usize| {
        if let Some(s) = start.take() {
            tokens.push(Token {
                text: chars[s..end].iter().collect(),
                start: s,
                end,
            });
        }
    };
    for (i, &c) in chars.iter().enumerate() {
        let joins = is_word_char(c)
            || (CONNECTORS.contains(&c)
                && start.is_some()
                && is_word_char(chars[i - 1])
                && chars.get(i + 1).is_some_and(|n| is_word_char(*n)));
        if c.is_whitespace() {
            flush(&mut tokens, &mut start, i);
        } else if joins {
            start.get_or_insert(i);
        } else {
            flush(&mut tokens, &mut start, i);
            tokens.push(Token {
                text: c.to_string(),
                start: i,
                end: i + 1,
            });
        }
    }
    flush(&mut tokens, &mut start, chars.len());
    tokens
}

/// A tokenized document with one tag per token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedSequence {
    pub id: String,
    pub tokens: Vec<Token>,
    pub tags: Vec<Tag>,
}

impl TaggedSequence {
    /// True when no `I-X` follows `O` or a tag of another label.
    pub fn is_canonical(&self) -> bool {
        is_canonical(&self.tags)
    }

    pub fn spans(&self) -> Vec<Span> {
        tags_to_spans(&self.tokens, &self.tags)
    }
}

pub fn is_canonical(tags: &[Tag]) -> bool {
    let mut prev = Tag::O;
    tags.iter().all(|&t| {
        let ok = match t {
            Tag::I(l) => prev.label() == Some(l),
            _ => true,
        };
        prev = t;
        ok
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("spans {first:?} and {second:?} overlap")]
    OverlappingSpans { first: Span, second: Span },
    #[error("line {line}: expected `token<TAB>tag`, found {found} column(s)")]
    Columns { line: usize, found: usize },
    #[error("line {line}: {source}")]
    Tag { line: usize, source: UnknownTag },
    #[error("read error: {0}")]
    Io(String),
}

/// Diagnostics from [`spans_to_tags`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EncodeWarnings {
    /// Tokens tagged as inside a span that covers only part of them.
    pub partial_tokens: usize,
    /// Spans that received no token (whitespace-only, or every token they
    /// touch was claimed by a span with more overlap).
    pub lost_spans: usize,
}

/// Tag `tokens` from `spans`. A token belongs to the span it overlaps most
/// (ties to the earlier span); partially covered tokens are still tagged.
pub fn spans_to_tags(
    id: &str,
    tokens: &[Token],
    spans: &[Span],
) -> Result<(TaggedSequence, EncodeWarnings), CodecError> {
    let mut sorted = spans.to_vec();
    sorted.sort();
    if !sorted_spans_disjoint(&sorted) {
        let w = sorted.windows(2).find(|w| w[0].end > w[1].start).unwrap();
        return Err(CodecError::OverlappingSpans {
            first: w[0],
            second: w[1],
        });
    }
    let mut warnings = EncodeWarnings::default();
    let mut owner: Vec<Option<usize>> = vec![None; tokens.len()];
    let mut first = 0;
    for (t, tok) in tokens.iter().enumerate() {
        while first < sorted.len() && sorted[first].end <= tok.start {
            first += 1;
        }
        let mut best: Option<(usize, usize)> = None;
        for (k, span) in sorted.iter().enumerate().skip(first) {
            if span.start >= tok.end {
                break;
            }
            let overlap = span
                .end
                .min(tok.end)
                .saturating_sub(span.start.max(tok.start));
            if overlap > 0 && best.is_none_or(|(_, o)| overlap > o) {
                best = Some((k, overlap));
            }
        }
        if let Some((k, overlap)) = best {
            owner[t] = Some(k);
            if overlap < tok.end - tok.start {
                warnings.partial_tokens += 1;
            }
        }
    }
    let mut used = vec![false; sorted.len()];
    let mut prev = None;
    let tags = owner
        .iter()
        .map(|o| {
            let tag = match *o {
                None => Tag::O,
                Some(k) if prev == Some(k) => Tag::I(sorted[k].label),
                Some(k) => {
                    used[k] = true;
                    Tag::B(sorted[k].label)
                }
            };
            prev = *o;
            tag
        })
        .collect();
    warnings.lost_spans = used.iter().filter(|u| !**u).count();
    Ok((
        TaggedSequence {
            id: id.to_string(),
            tokens: tokens.to_vec(),
            tags,
        },
        warnings,
    ))
}

/// Decode tags into runs of token indices `[first, last]`. Total: an `I-X`
/// that cannot continue the current run opens a new one.
pub fn decode_runs(tags: &[Tag]) -> Vec<(usize, usize, Label)> {
    let mut runs: Vec<(usize, usize, Label)> = Vec::new();
    let mut open = false;
    for (i, &tag) in tags.iter().enumerate() {
        match tag {
            Tag::O => open = false,
            Tag::B(l) => {
                runs.push((i, i, l));
                open = true;
            }
            Tag::I(l) => match runs.last_mut() {
                Some(run) if open && run.2 == l => run.1 = i,
                _ => {
                    runs.push((i, i, l));
                    open = true;
                }
            },
        }
    }
    runs
}

/// Spans from first token start to last token end of every decoded run.
/// Extra tags or tokens beyond the shorter list are ignored.
pub fn tags_to_spans(tokens: &[Token], tags: &[Tag]) -> Vec<Span> {
    let n = tokens.len().min(tags.len());
    decode_runs(&tags[..n])
        .into_iter()
        .map(|(a, b, l)| Span::new(tokens[a].start, tokens[b].end, l))
        .collect()
}

/// A sequence read back from CoNLL: token texts and tags, no offsets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConllSequence {
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
}

impl From<&TaggedSequence> for ConllSequence {
    fn from(seq: &TaggedSequence) -> Self {
        ConllSequence {
            tokens: seq.tokens.iter().map(|t| t.text.clone()).collect(),
            tags: seq.tags.clone(),
        }
    }
}

/// Two tab-separated columns per token, a blank line between documents.
/// Documents without tokens produce no output.
pub fn export_conll<W: Write>(sequences: &[ConllSequence], mut out: W) -> std::io::Result<()> {
    let mut first = true;
    for seq in sequences.iter().filter(|s| !s.tokens.is_empty()) {
        if !first {
            writeln!(out)?;
        }
        first = false;
        for (tok, tag) in seq.tokens.iter().zip(&seq.tags) {
            writeln!(out, "{tok}\t{tag}")?;
        }
    }
    Ok(())
}

pub fn import_conll<R: BufRead>(input: R) -> Result<Vec<ConllSequence>, CodecError> {
    let mut out = Vec::new();
    let mut current = ConllSequence::default();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| CodecError::Io(e.to_string()))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            if !current.tokens.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 || cols[0].is_empty() {
            return Err(CodecError::Columns {
                line: i + 1,
                found: cols.len(),
            });
        }
        let tag = cols[1].parse().map_err(|source| CodecError::Tag {
            line: i + 1,
            source,
        })?;
        current.tokens.push(cols[0].to_string());
        current.tags.push(tag);
    }
    if !current.tokens.is_empty() {
        out.push(current);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn canonical_order() {
        let tags = Tag::canonical();
        assert_eq!(tags[0], Tag::O);
        assert_eq!(tags[1], Tag::B(Label::Antperson));
        assert_eq!(tags[2], Tag::I(Label::Antperson));
        assert_eq!(tags[16], Tag::I(Label::Tto));
        for (i, t) in tags.iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(t.to_string().parse::<Tag>().unwrap(), *t);
        }
        assert!("B-XYZ".parse::<Tag>().is_err());
        assert!("E-MET".parse::<Tag>().is_err());
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(texts(&tokenize("pT1N0M0.")), ["pT1N0M0", "."]);
        assert!(tokenize("").is_empty());
        let t = tokenize("Mama derecha");
        assert_eq!((t[0].start, t[0].end, t[1].start, t[1].end), (0, 4, 5, 12));
        assert_eq!(
            texts(&tokenize("HER-2 (+) c/u -x y-")),
            ["HER-2", "(", "+", ")", "c/u", "-", "x", "y", "-"]
        );
        assert_eq!(
            texts(&tokenize("evolucio\u{301}n,")),
            ["evolucio\u{301}n", ","]
        );
    }

    #[test]
    fn encode_examples() {
        let tokens = tokenize("Mama derecha");
        let (seq, w) = spans_to_tags("d", &tokens, &[Span::new(0, 12, Label::Pat)]).unwrap();
        assert_eq!(seq.tags, [Tag::B(Label::Pat), Tag::I(Label::Pat)]);
        assert_eq!(w, EncodeWarnings::default());
        let (seq, _) = spans_to_tags("d", &tokens, &[]).unwrap();
        assert_eq!(seq.tags, [Tag::O, Tag::O]);
        let (seq, w) = spans_to_tags("d", &tokens, &[Span::new(2, 4, Label::Met)]).unwrap();
        assert_eq!(seq.tags, [Tag::B(Label::Met), Tag::O]);
        assert_eq!(w.partial_tokens, 1);
        let overlapping = [Span::new(0, 5, Label::Met), Span::new(3, 8, Label::Pat)];
        assert!(spans_to_tags("d", &tokens, &overlapping).is_err());
    }

    #[test]
    fn adjacent_same_label_spans_stay_separate() {
        let tokens = tokenize("TAC RM");
        let spans = [Span::new(0, 3, Label::Met), Span::new(4, 6, Label::Met)];
        let (seq, _) = spans_to_tags("d", &tokens, &spans).unwrap();
        assert_eq!(seq.tags, [Tag::B(Label::Met), Tag::B(Label::Met)]);
        assert_eq!(seq.spans(), spans);
    }

    #[test]
    fn decode_examples() {
        let tokens = tokenize("Mama derecha");
        let tags = [Tag::B(Label::Pat), Tag::I(Label::Pat)];
        assert_eq!(
            tags_to_spans(&tokens, &tags),
            [Span::new(0, 12, Label::Pat)]
        );
        assert!(tags_to_spans(&tokens, &[Tag::O, Tag::O]).is_empty());
        assert_eq!(
            tags_to_spans(&tokens[..1], &[Tag::I(Label::Met)]),
            [Span::new(0, 4, Label::Met)]
        );
        let mixed = [Tag::B(Label::Pat), Tag::I(Label::Met)];
        assert_eq!(tags_to_spans(&tokens, &mixed).len(), 2);
    }

    #[test]
    fn conll_round_trip() {
        let seqs = vec![
            ConllSequence {
                tokens: vec!["Mama".into()],
                tags: vec![Tag::B(Label::Pat)],
            },
            ConllSequence {
                tokens: vec!["TAC".into(), ".".into()],
                tags: vec![Tag::B(Label::Met), Tag::O],
            },
        ];
        let mut buf = Vec::new();
        export_conll(&seqs, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "Mama\tB-PAT\n\nTAC\tB-MET\n.\tO\n"
        );
        assert_eq!(import_conll(&buf[..]).unwrap(), seqs);
        let mut empty = Vec::new();
        export_conll(&[], &mut empty).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn conll_errors() {
        assert!(matches!(
            import_conll("Mama\tB-XYZ\n".as_bytes()),
            Err(CodecError::Tag { line: 1, .. })
        ));
        assert!(matches!(
            import_conll("Mama B-PAT\n".as_bytes()),
            Err(CodecError::Columns { line: 1, found: 1 })
        ));
    }
}
