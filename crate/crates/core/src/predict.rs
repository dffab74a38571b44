//! Model-output interchange: parsing, subword → word aggregation with the
//! "average" strategy, entity assembly, and word-level accuracy and
//! cross-entropy loss.
//!
//! Interchange records are one JSON object per line:
//!
//! ```text
//! {"doc_id": "r1", "coords": "raw", "tag_order": ["O", "B-ANTPERSON", ...],
//!  "tokens": [{"start": 0, "end": 3, "word_id": 0, "probs": [17 reals]}]}
//! ```
//!
//! `coords` says whether offsets refer to the original text (`raw`) or to
//! the preprocessed text (`clean`).

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::label::Label;
use crate::preprocess::{Direction, OffsetMap, Projection};
use crate::span::{Span, TextRange};
use crate::tagcodec::{decode_runs, spans_to_tags, Tag, Token, TAG_COUNT};

/// Accepted distance of a probability sum from 1 before renormalizing.
pub const SUM_TOLERANCE: f64 = 1e-3;
/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coords {
    Raw,
    Clean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TokenPrediction {
    pub start: usize,
    pub end: usize,
    pub word_id: u64,
    pub probs: [f64; TAG_COUNT],
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub doc_id: String,
    pub coords: Coords,
    pub tokens: Vec<TokenPrediction>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedEntity {
    pub start: usize,
    pub end: usize,
    pub label: Label,
    pub score: f64,
}

impl PredictedEntity {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end, self.label)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PredictError {
    #[error("line {line}: invalid record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: tag_order differs from the canonical order")]
    TagOrder { line: usize },
    #[error("document `{doc}` token {token}: expected {TAG_COUNT} probabilities, found {found}")]
    VectorLength {
        doc: String,
        token: usize,
        found: usize,
    },
    #[error("document `{doc}` token {token}: probabilities sum to {sum}, not 1")]
    SumOutOfTolerance { doc: String, token: usize, sum: f64 },
    #[error("document `{doc}` token {token}: probability {value} is negative or not finite")]
    BadProbability {
        doc: String,
        token: usize,
        value: f64,
    },
    #[error("document `{doc}` token {token}: subtokens unsorted, overlapping or empty")]
    Unsorted { doc: String, token: usize },
    #[error("document `{doc}` token {token}: word_id decreases")]
    WordOrder { doc: String, token: usize },
    #[error("duplicate document `{0}`")]
    DuplicateDocument(String),
    #[error("document `{0}` uses clean coordinates but no offset map was given")]
    MissingOffsetMap(String),
    #[error("document `{doc}`: {predicted} predicted words but {gold} gold tags")]
    Alignment {
        doc: String,
        predicted: usize,
        gold: usize,
    },
    #[error("document `{0}` has no gold tags")]
    MissingGold(String),
    #[error("no tokens")]
    NoTokens,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct RawToken {
    start: usize,
    end: usize,
    word_id: u64,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    doc_id: String,
    coords: Coords,
    tag_order: Vec<String>,
    tokens: Vec<RawToken>,
}

fn canonical_tag_names() -> Vec<String> {
    Tag::canonical().iter().map(|t| t.to_string()).collect()
}

fn validate_record(raw: RawRecord) -> Result<PredictionSet, PredictError> {
    let doc = raw.doc_id;
    let mut tokens = Vec::with_capacity(raw.tokens.len());
    let mut prev: Option<(usize, u64)> = None;
    for (i, t) in raw.tokens.into_iter().enumerate() {
        if t.probs.len() != TAG_COUNT {
            return Err(PredictError::VectorLength {
                doc,
                token: i,
                found: t.probs.len(),
            });
        }
        if let Some(&bad) = t.probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(PredictError::BadProbability {
                doc,
                token: i,
                value: bad,
            });
        }
        let sum: f64 = t.probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(PredictError::SumOutOfTolerance { doc, token: i, sum });
        }
        if t.start >= t.end || prev.is_some_and(|(end, _)| t.start < end) {
            return Err(PredictError::Unsorted { doc, token: i });
        }
        if prev.is_some_and(|(_, w)| t.word_id < w) {
            return Err(PredictError::WordOrder { doc, token: i });
        }
        prev = Some((t.end, t.word_id));
        let mut probs = [0.0; TAG_COUNT];
        for (p, v) in probs.iter_mut().zip(&t.probs) {
            *p = v / sum;
        }
        tokens.push(TokenPrediction {
            start: t.start,
            end: t.end,
            word_id: t.word_id,
            probs,
        });
    }
    Ok(PredictionSet {
        doc_id: doc,
        coords: raw.coords,
        tokens,
    })
}

/// Parse and validate an interchange stream. Probability vectors within
/// [`SUM_TOLERANCE`] of 1 are renormalized.
pub fn parse_predictions<R: BufRead>(input: R) -> Result<Vec<PredictionSet>, PredictError> {
    let canonical = canonical_tag_names();
    let mut sets = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| PredictError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if raw.tag_order != canonical {
            return Err(PredictError::TagOrder { line: i + 1 });
        }
        if !seen.insert(raw.doc_id.clone()) {
            return Err(PredictError::DuplicateDocument(raw.doc_id));
        }
        sets.push(validate_record(raw)?);
    }
    Ok(sets)
}

pub fn write_predictions<W: Write>(sets: &[PredictionSet], mut out: W) -> Result<(), PredictError> {
    let tag_order = canonical_tag_names();
    for set in sets {
        let raw = RawRecord {
            doc_id: set.doc_id.clone(),
            coords: set.coords,
            tag_order: tag_order.clone(),
            tokens: set
                .tokens
                .iter()
                .map(|t| RawToken {
                    start: t.start,
                    end: t.end,
                    word_id: t.word_id,
                    probs: t.probs.to_vec(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &raw).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// One aggregated word.
#[derive(Clone, Debug, PartialEq)]
pub struct WordPrediction {
    pub range: TextRange,
    pub tag: Tag,
    pub score: f64,
    /// Mean of the subtoken probability vectors.
    pub probs: [f64; TAG_COUNT],
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax(probs: &[f64; TAG_COUNT]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate().skip(1) {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

/// Average the probability vectors of each word's subtokens and take the
/// argmax.
pub fn aggregate_average(set: &PredictionSet) -> Vec<WordPrediction> {
    set.tokens
        .chunk_by(|a, b| a.word_id == b.word_id)
        .map(|group| {
            let mut probs = [0.0; TAG_COUNT];
            for t in group {
                for (acc, p) in probs.iter_mut().zip(&t.probs) {
                    *acc += p;
                }
            }
            let n = group.len() as f64;
            for p in probs.iter_mut() {
                *p /= n;
            }
            let best = argmax(&probs);
            let start = group.iter().map(|t| t.start).min().unwrap_or(0);
            let end = group.iter().map(|t| t.end).max().unwrap_or(0);
            WordPrediction {
                range: TextRange::new(start, end),
                tag: Tag::from_index(best).expect("argmax within the tag set"),
                score: probs[best],
                probs,
            }
        })
        .collect()
}

/// Decode word tags into entities (B/I runs, orphan `I-` repaired) scored
/// by the mean of their word scores. With clean coordinates, entities are
/// projected back onto the original text through `map`; an entity whose
/// projection would overlap an earlier one is dropped.
pub fn assemble_entities(
    doc_id: &str,
    coords: Coords,
    words: &[WordPrediction],
    map: Option<&OffsetMap>,
) -> Result<Vec<PredictedEntity>, PredictError> {
    let map = match (coords, map) {
        (Coords::Clean, None) => return Err(PredictError::MissingOffsetMap(doc_id.into())),
        (Coords::Clean, Some(m)) => Some(m),
        (Coords::Raw, _) => None,
    };
    let tags: Vec<Tag> = words.iter().map(|w| w.tag).collect();
    let mut out: Vec<PredictedEntity> = Vec::new();
    for (a, b, label) in decode_runs(&tags) {
        let members = &words[a..=b];
        let score = members.iter().map(|w| w.score).sum::<f64>() / members.len() as f64;
        let mut range = TextRange::new(words[a].range.start, words[b].range.end);
        if let Some(m) = map {
            match m.project(Direction::Backward, range) {
                Ok(Projection::Mapped(r)) => range = r,
                _ => continue,
            }
        }
        if out.last().is_none_or(|p| p.end <= range.start) {
            out.push(PredictedEntity {
                start: range.start,
                end: range.end,
                label,
                score,
            });
        }
    }
    Ok(out)
}

/// Aggregate and assemble every set, in input order. `maps` supplies the
/// original → clean map of each document predicted in clean coordinates.
pub fn predict_entities(
    sets: &[PredictionSet],
    maps: &HashMap<String, OffsetMap>,
) -> Result<Vec<(String, Vec<PredictedEntity>)>, PredictError> {
    sets.par_iter()
        .map(|set| {
            let words = aggregate_average(set);
            let entities =
                assemble_entities(&set.doc_id, set.coords, &words, maps.get(&set.doc_id))?;
            Ok((set.doc_id.clone(), entities))
        })
        .collect()
}

/// Gold tag of each word: the words are encoded as tokens against the gold
/// spans, which must be in the same coordinates as the words.
pub fn gold_word_tags(words: &[WordPrediction], gold: &[Span]) -> Vec<Tag> {
    let tokens: Vec<Token> = words
        .iter()
        .map(|w| Token {
            text: String::new(),
            start: w.range.start,
            end: w.range.end,
        })
        .collect();
    match spans_to_tags("", &tokens, gold) {
        Ok((seq, _)) => seq.tags,
        Err(_) => {
            // Overlapping gold cannot be encoded; fall back to a greedy
            // non-overlapping subset.
            let mut kept: Vec<Span> = Vec::new();
            let mut sorted = gold.to_vec();
            sorted.sort();
            for s in sorted {
                if kept.last().is_none_or(|p| p.end <= s.start) {
                    kept.push(s);
                }
            }
            spans_to_tags("", &tokens, &kept)
                .expect("disjoint spans encode")
                .0
                .tags
        }
    }
}

/// Aggregated words of one document.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentWords {
    pub doc_id: String,
    pub words: Vec<WordPrediction>,
}

/// Per-document `(correct, total, summed loss)`, in `predicted` order.
fn word_tallies(
    predicted: &[DocumentWords],
    gold: &HashMap<String, Vec<Tag>>,
) -> Result<Vec<(usize, usize, f64)>, PredictError> {
    predicted
        .par_iter()
        .map(|doc| {
            let tags = gold
                .get(&doc.doc_id)
                .ok_or_else(|| PredictError::MissingGold(doc.doc_id.clone()))?;
            if tags.len() != doc.words.len() {
                return Err(PredictError::Alignment {
                    doc: doc.doc_id.clone(),
                    predicted: doc.words.len(),
                    gold: tags.len(),
                });
            }
            let mut correct = 0;
            let mut loss = 0.0;
            for (w, g) in doc.words.iter().zip(tags) {
                if w.tag == *g {
                    correct += 1;
                }
                loss -= w.probs[g.index()].max(PROB_FLOOR).ln();
            }
            Ok((correct, tags.len(), loss))
        })
        .collect()
}

/// Fraction of words whose aggregated tag equals the gold tag (`O`
/// included).
pub fn token_accuracy(
    predicted: &[DocumentWords],
    gold: &HashMap<String, Vec<Tag>>,
) -> Result<f64, PredictError> {
    let tallies = word_tallies(predicted, gold)?;
    let (correct, total) = tallies
        .iter()
        .fold((0, 0), |(c, t), &(dc, dt, _)| (c + dc, t + dt));
    if total == 0 {
        return Err(PredictError::NoTokens);
    }
    Ok(correct as f64 / total as f64)
}

/// Mean over words of `-ln p(gold)` under the averaged vector, with
/// probabilities floored at [`PROB_FLOOR`].
pub fn cross_entropy_loss(
    predicted: &[DocumentWords],
    gold: &HashMap<String, Vec<Tag>>,
) -> Result<f64, PredictError> {
    let tallies = word_tallies(predicted, gold)?;
    let total: usize = tallies.iter().map(|t| t.1).sum();
    if total == 0 {
        return Err(PredictError::NoTokens);
    }
    let sum: f64 = tallies.iter().map(|t| t.2).sum();
    Ok(sum / total as f64)
}

/// Predicted entities of one document, as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityDocument {
    pub id: String,
    pub entities: Vec<PredictedEntity>,
}

/// One `{"id", "entities": [{start, end, label, score}]}` object per line.
pub fn write_entities<W: Write>(docs: &[EntityDocument], mut out: W) -> std::io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_entities<R: BufRead>(input: R) -> Result<Vec<EntityDocument>, PredictError> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut doc: EntityDocument =
            serde_json::from_str(&line).map_err(|e| PredictError::Malformed {
                line: i + 1,
                reason: e.to_string(),
            })?;
        if !seen.insert(doc.id.clone()) {
            return Err(PredictError::DuplicateDocument(doc.id));
        }
        doc.entities.sort_by_key(|e| (e.start, e.end, e.label));
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(tag: Tag) -> [f64; TAG_COUNT] {
        let mut p = [0.0; TAG_COUNT];
        p[tag.index()] = 1.0;
        p
    }

    fn mix(pairs: &[(Tag, f64)]) -> [f64; TAG_COUNT] {
        let mut p = [0.0; TAG_COUNT];
        for (t, v) in pairs {
            p[t.index()] = *v;
        }
        p
    }

    fn tok(start: usize, end: usize, word_id: u64, probs: [f64; TAG_COUNT]) -> TokenPrediction {
        TokenPrediction {
            start,
            end,
            word_id,
            probs,
        }
    }

    fn set(tokens: Vec<TokenPrediction>) -> PredictionSet {
        PredictionSet {
            doc_id: "d".into(),
            coords: Coords::Raw,
            tokens,
        }
    }

    fn line(probs: &[f64]) -> String {
        let order = serde_json::to_string(&canonical_tag_names()).unwrap();
        format!(
            r#"{{"doc_id":"d","coords":"raw","tag_order":{order},"tokens":[{{"start":0,"end":3,"word_id":0,"probs":{}}}]}}"#,
            serde_json::to_string(probs).unwrap()
        )
    }

    #[test]
    fn parse_examples() {
        let sets = parse_predictions(line(&one_hot(Tag::O)).as_bytes()).unwrap();
        assert_eq!(sets.len(), 1);
        assert!(matches!(
            parse_predictions(line(&[0.0; 16]).as_bytes()),
            Err(PredictError::VectorLength { found: 16, .. })
        ));
        let mut p = one_hot(Tag::O);
        p[0] = 0.9;
        assert!(matches!(
            parse_predictions(line(&p).as_bytes()),
            Err(PredictError::SumOutOfTolerance { .. })
        ));
        p[0] = 0.9995;
        let sets = parse_predictions(line(&p).as_bytes()).unwrap();
        assert_eq!(sets[0].tokens[0].probs[0], 1.0);
        let reordered = line(&one_hot(Tag::O)).replacen("\"O\"", "\"X\"", 1);
        assert!(matches!(
            parse_predictions(reordered.as_bytes()),
            Err(PredictError::TagOrder { line: 1 })
        ));
    }

    #[test]
    fn write_then_parse() {
        let s = set(vec![
            tok(0, 2, 0, one_hot(Tag::B(Label::Met))),
            tok(2, 3, 0, mix(&[(Tag::O, 0.25), (Tag::I(Label::Met), 0.75)])),
        ]);
        let mut buf = Vec::new();
        write_predictions(std::slice::from_ref(&s), &mut buf).unwrap();
        assert_eq!(parse_predictions(&buf[..]).unwrap(), vec![s]);
    }

    #[test]
    fn structural_errors() {
        let bad = set(vec![
            tok(2, 4, 0, one_hot(Tag::O)),
            tok(3, 5, 1, one_hot(Tag::O)),
        ]);
        let mut buf = Vec::new();
        write_predictions(&[bad], &mut buf).unwrap();
        assert!(matches!(
            parse_predictions(&buf[..]),
            Err(PredictError::Unsorted { token: 1, .. })
        ));
        let bad = set(vec![
            tok(0, 1, 3, one_hot(Tag::O)),
            tok(2, 3, 1, one_hot(Tag::O)),
        ]);
        let mut buf = Vec::new();
        write_predictions(&[bad], &mut buf).unwrap();
        assert!(matches!(
            parse_predictions(&buf[..]),
            Err(PredictError::WordOrder { .. })
        ));
    }

    #[test]
    fn averaging_examples() {
        let met = Tag::B(Label::Met);
        let words = aggregate_average(&set(vec![
            tok(0, 2, 0, one_hot(met)),
            tok(2, 4, 0, one_hot(met)),
        ]));
        assert_eq!(words.len(), 1);
        assert_eq!((words[0].tag, words[0].score), (met, 1.0));
        assert_eq!(words[0].range, TextRange::new(0, 4));

        let words = aggregate_average(&set(vec![
            tok(0, 2, 0, mix(&[(met, 0.6), (Tag::O, 0.4)])),
            tok(2, 4, 0, mix(&[(met, 0.2), (Tag::O, 0.8)])),
        ]));
        assert_eq!(words[0].tag, Tag::O);
        assert!((words[0].score - 0.6).abs() < 1e-12);
        assert!(aggregate_average(&set(vec![])).is_empty());
    }

    #[test]
    fn ties_go_to_lower_index() {
        let p = mix(&[(Tag::B(Label::Tto), 0.5), (Tag::B(Label::Evol), 0.5)]);
        assert_eq!(Tag::from_index(argmax(&p)), Some(Tag::B(Label::Evol)));
    }

    fn word(start: usize, end: usize, tag: Tag, score: f64) -> WordPrediction {
        WordPrediction {
            range: TextRange::new(start, end),
            tag,
            score,
            probs: one_hot(tag),
        }
    }

    #[test]
    fn entity_examples() {
        let words = [
            word(0, 4, Tag::B(Label::Pat), 0.9),
            word(5, 12, Tag::I(Label::Pat), 0.7),
        ];
        let e = assemble_entities("d", Coords::Raw, &words, None).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!((e[0].start, e[0].end, e[0].label), (0, 12, Label::Pat));
        assert!((e[0].score - 0.8).abs() < 1e-12);
        let words = [word(0, 4, Tag::O, 0.9)];
        assert!(assemble_entities("d", Coords::Raw, &words, None)
            .unwrap()
            .is_empty());
        let words = [word(0, 3, Tag::I(Label::Met), 0.5)];
        let e = assemble_entities("d", Coords::Raw, &words, None).unwrap();
        assert_eq!(e[0].label, Label::Met);
        assert!(matches!(
            assemble_entities("d", Coords::Clean, &words, None),
            Err(PredictError::MissingOffsetMap(_))
        ));
    }

    #[test]
    fn clean_coordinates_are_projected_back() {
        let pre = crate::preprocess::preprocess("Mama  derecha", &Default::default());
        let words = [
            word(0, 4, Tag::B(Label::Pat), 1.0),
            word(5, 12, Tag::I(Label::Pat), 1.0),
        ];
        let e = assemble_entities("d", Coords::Clean, &words, Some(&pre.offset_map)).unwrap();
        assert_eq!((e[0].start, e[0].end), (0, 13));
    }

    fn docs(
        words: Vec<WordPrediction>,
        gold: Vec<Tag>,
    ) -> (Vec<DocumentWords>, HashMap<String, Vec<Tag>>) {
        (
            vec![DocumentWords {
                doc_id: "d".into(),
                words,
            }],
            HashMap::from([("d".to_string(), gold)]),
        )
    }

    #[test]
    fn accuracy_and_loss() {
        let met = Tag::B(Label::Met);
        let (p, g) = docs(
            vec![
                word(0, 1, met, 1.0),
                word(2, 3, Tag::O, 1.0),
                word(4, 5, Tag::O, 1.0),
                word(6, 7, met, 1.0),
            ],
            vec![met, Tag::O, Tag::O, Tag::O],
        );
        assert_eq!(token_accuracy(&p, &g).unwrap(), 0.75);
        let (p, g) = docs(vec![word(0, 1, met, 1.0)], vec![met]);
        assert_eq!(token_accuracy(&p, &g).unwrap(), 1.0);
        assert_eq!(cross_entropy_loss(&p, &g).unwrap(), 0.0);

        let half = mix(&[(met, 0.5), (Tag::O, 0.5)]);
        let w = |s| WordPrediction {
            range: TextRange::new(s, s + 1),
            tag: met,
            score: 0.5,
            probs: half,
        };
        let (p, g) = docs(vec![w(0), w(2)], vec![met, Tag::O]);
        assert!((cross_entropy_loss(&p, &g).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);

        let (p, g) = docs(vec![], vec![]);
        assert!(matches!(
            token_accuracy(&p, &g),
            Err(PredictError::NoTokens)
        ));
        let (p, g) = docs(vec![word(0, 1, met, 1.0)], vec![]);
        assert!(matches!(
            token_accuracy(&p, &g),
            Err(PredictError::Alignment { .. })
        ));
    }

    #[test]
    fn gold_tags_for_words() {
        let words = [word(0, 4, Tag::O, 1.0), word(5, 12, Tag::O, 1.0)];
        assert_eq!(
            gold_word_tags(&words, &[Span::new(0, 12, Label::Pat)]),
            [Tag::B(Label::Pat), Tag::I(Label::Pat)]
        );
    }
}
