//! Strict entity-level evaluation and the real / correct / incorrect
//! comparison used for hit-and-miss summaries.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::label::Label;
use crate::span::Span;

/// Pseudo-label for predictions on documents that carry no gold entity.
pub const NO_LABEL: &str = "NO_LABEL";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("predictions for unknown document `{0}`")]
    UnknownDocument(String),
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> Result<f64, EvalError> {
    for (name, value) in [("precision", precision), ("recall", recall)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(EvalError::OutOfRange { name, value });
        }
    }
    Ok(f1_unchecked(precision, recall))
}

fn f1_unchecked(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchResult {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    /// `(gold index, predicted index)` of every match.
    pub matched: Vec<(usize, usize)>,
}

/// A prediction matches a gold span iff start, end and label are equal;
/// each span is used at most once.
pub fn match_strict(gold: &[Span], pred: &[Span]) -> MatchResult {
    let mut free: HashMap<Span, Vec<usize>> = HashMap::new();
    for (i, g) in gold.iter().enumerate().rev() {
        free.entry(*g).or_default().push(i);
    }
    let mut matched = Vec::new();
    for (j, p) in pred.iter().enumerate() {
        if let Some(i) = free.get_mut(p).and_then(Vec::pop) {
            matched.push((i, j));
        }
    }
    let tp = matched.len() as u64;
    MatchResult {
        tp,
        fp: pred.len() as u64 - tp,
        fn_: gold.len() as u64 - tp,
        matched,
    }
}

/// Gold and predicted spans of one document.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalDocument {
    pub id: String,
    pub gold: Vec<Span>,
    pub pred: Vec<Span>,
}

/// Pair every gold document with its predictions (none when absent).
pub fn align_documents(
    gold: &Corpus,
    predictions: &[(String, Vec<Span>)],
) -> Result<Vec<EvalDocument>, EvalError> {
    let mut by_id: HashMap<&str, &Vec<Span>> = HashMap::new();
    let known: HashSet<&str> = gold.documents.iter().map(|d| d.id()).collect();
    for (id, spans) in predictions {
        if !known.contains(id.as_str()) {
            return Err(EvalError::UnknownDocument(id.clone()));
        }
        by_id.insert(id, spans);
    }
    Ok(gold
        .documents
        .iter()
        .map(|d| EvalDocument {
            id: d.id().to_string(),
            gold: d.spans.clone(),
            pred: by_id.get(d.id()).map(|s| s.to_vec()).unwrap_or_default(),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: Label,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl LabelMetrics {
    pub fn from_counts(label: Label, tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        LabelMetrics {
            label,
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1: f1_unchecked(precision, recall),
            support: tp + fn_,
        }
    }

    /// True when the label occurs in neither gold nor predictions.
    pub fn is_idle(&self) -> bool {
        self.support == 0 && self.fp == 0
    }
}

/// `[tp, fp, fn]` per label, indexed by [`Label::index`].
fn label_counts(docs: &[EvalDocument]) -> [[u64; 3]; 8] {
    let mut counts = [[0u64; 3]; 8];
    for doc in docs {
        let m = match_strict(&doc.gold, &doc.pred);
        let gold_hit: HashSet<usize> = m.matched.iter().map(|p| p.0).collect();
        let pred_hit: HashSet<usize> = m.matched.iter().map(|p| p.1).collect();
        for (i, g) in doc.gold.iter().enumerate() {
            counts[g.label.index()][if gold_hit.contains(&i) { 0 } else { 2 }] += 1;
        }
        for (j, p) in doc.pred.iter().enumerate() {
            if !pred_hit.contains(&j) {
                counts[p.label.index()][1] += 1;
            }
        }
    }
    counts
}

/// Strict metrics for each label, in [`Label::ALL`] order.
pub fn per_label_metrics(docs: &[EvalDocument]) -> Vec<LabelMetrics> {
    let counts = label_counts(docs);
    Label::ALL
        .iter()
        .map(|l| {
            let [tp, fp, fn_] = counts[l.index()];
            LabelMetrics::from_counts(*l, tp, fp, fn_)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalMetrics {
    /// Word-level accuracy when token predictions were available.
    pub accuracy: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub loss: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Micro-averaged metrics over the summed per-label counts.
pub fn global_metrics(
    per_label: &[LabelMetrics],
    accuracy: Option<f64>,
    loss: Option<f64>,
) -> GlobalMetrics {
    let tp = per_label.iter().map(|m| m.tp).sum();
    let fp = per_label.iter().map(|m| m.fp).sum();
    let fn_ = per_label.iter().map(|m| m.fn_).sum();
    let micro = LabelMetrics::from_counts(Label::Met, tp, fp, fn_);
    GlobalMetrics {
        accuracy,
        precision: micro.precision,
        recall: micro.recall,
        f1: micro.f1,
        loss,
        tp,
        fp,
        fn_,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// A label name or [`NO_LABEL`].
    pub name: String,
    pub real: u64,
    pub correct_predicted: u64,
    pub incorrect_predicted: u64,
    /// Correct detections beyond the gold count: predictions on documents
    /// without gold entities, or tallied overshoot.
    pub extra_detected: u64,
}

impl ComparisonRow {
    pub fn is_empty(&self) -> bool {
        self.real == 0
            && self.correct_predicted == 0
            && self.incorrect_predicted == 0
            && self.extra_detected == 0
    }
}

/// Per-label real / correct / incorrect counts. Hits are correct plus
/// extra detections; misses are incorrect predictions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    /// Build from externally tallied `(name, real, correct, incorrect)`
    /// rows. A correct count above the real count is split so that
    /// `correct_predicted <= real` and the surplus becomes
    /// `extra_detected`.
    pub fn from_tallies(rows: &[(&str, u64, u64, u64)]) -> Self {
        ComparisonReport {
            rows: rows
                .iter()
                .map(|&(name, real, correct, incorrect)| ComparisonRow {
                    name: name.to_string(),
                    real,
                    correct_predicted: correct.min(real),
                    incorrect_predicted: incorrect,
                    extra_detected: correct.saturating_sub(real),
                })
                .collect(),
        }
    }

    pub fn hits(&self) -> u64 {
        self.rows
            .iter()
            .map(|r| r.correct_predicted + r.extra_detected)
            .sum()
    }

    pub fn misses(&self) -> u64 {
        self.rows.iter().map(|r| r.incorrect_predicted).sum()
    }

    /// `(hits, hits + misses)`, or `None` when nothing was predicted.
    pub fn hit_ratio(&self) -> Option<(u64, u64)> {
        let total = self.hits() + self.misses();
        (total > 0).then(|| (self.hits(), total))
    }

    pub fn hit_fraction(&self) -> Option<f64> {
        self.hit_ratio().map(|(h, t)| h as f64 / t as f64)
    }

    pub fn row(&self, name: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Real = gold count, correct = strict matches, incorrect = unmatched
/// predictions, per label. Predictions on documents without any gold
/// entity cannot be checked and go to the [`NO_LABEL`] row as extra
/// detections. Rows appear in [`Label::ALL`] order, then `NO_LABEL`;
/// all-zero rows are omitted.
pub fn compare_report(docs: &[EvalDocument]) -> ComparisonReport {
    let (labelled, unlabelled): (Vec<_>, Vec<_>) =
        docs.iter().cloned().partition(|d| !d.gold.is_empty());
    let counts = label_counts(&labelled);
    let mut rows: Vec<ComparisonRow> = Label::ALL
        .iter()
        .map(|l| {
            let [tp, fp, fn_] = counts[l.index()];
            ComparisonRow {
                name: l.as_str().to_string(),
                real: tp + fn_,
                correct_predicted: tp,
                incorrect_predicted: fp,
                extra_detected: 0,
            }
        })
        .collect();
    rows.push(ComparisonRow {
        name: NO_LABEL.to_string(),
        real: 0,
        correct_predicted: 0,
        incorrect_predicted: 0,
        extra_detected: unlabelled.iter().map(|d| d.pred.len() as u64).sum(),
    });
    rows.retain(|r| !r.is_empty());
    ComparisonReport { rows }
}

/// Everything `evaluate` produces, as stored in `evaluation.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub documents: usize,
    pub per_label: Vec<LabelMetrics>,
    pub global: GlobalMetrics,
    pub comparison: ComparisonReport,
}

pub fn evaluate(docs: &[EvalDocument], accuracy: Option<f64>, loss: Option<f64>) -> Evaluation {
    let per_label = per_label_metrics(docs);
    let global = global_metrics(&per_label, accuracy, loss);
    Evaluation {
        documents: docs.len(),
        per_label,
        global,
        comparison: compare_report(docs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(start: usize, end: usize, label: Label) -> Span {
        Span::new(start, end, label)
    }

    #[test]
    fn matching_examples() {
        let m = match_strict(&[s(0, 4, Label::Met)], &[s(0, 4, Label::Met)]);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 0));
        let m = match_strict(&[s(0, 4, Label::Met)], &[s(0, 4, Label::Pat)]);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 1));
        let m = match_strict(
            &[s(0, 4, Label::Met)],
            &[s(0, 4, Label::Met), s(5, 8, Label::Pat)],
        );
        assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 0));
    }

    #[test]
    fn f1_examples() {
        assert!((f1(0.4762, 0.5263).unwrap() - 0.5).abs() < 5e-4);
        assert!((f1(0.7368, 0.8750).unwrap() - 0.7999).abs() < 5e-4);
        assert!((f1(0.6964, 0.75).unwrap() - 0.7222).abs() < 5e-4);
        assert_eq!(f1(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(f1(0.3, 0.3).unwrap(), 0.3);
        assert!(f1(1.2, 0.5).is_err());
        assert!(f1(0.5, -0.1).is_err());
    }

    #[test]
    fn global_examples() {
        let per_label = [LabelMetrics::from_counts(Label::Met, 3, 1, 1)];
        let g = global_metrics(&per_label, None, None);
        assert_eq!((g.precision, g.recall, g.f1), (0.75, 0.75, 0.75));
        let docs = [EvalDocument {
            id: "a".into(),
            gold: vec![s(0, 3, Label::Met)],
            pred: vec![],
        }];
        let g = global_metrics(&per_label_metrics(&docs), None, None);
        assert_eq!((g.precision, g.recall, g.f1), (0.0, 0.0, 0.0));
        let docs = [EvalDocument {
            id: "a".into(),
            gold: vec![s(0, 3, Label::Met)],
            pred: vec![s(0, 3, Label::Met)],
        }];
        let g = global_metrics(&per_label_metrics(&docs), None, None);
        assert_eq!((g.precision, g.recall, g.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn absent_label_is_all_zero() {
        let m = per_label_metrics(&[]);
        assert_eq!(m.len(), 8);
        assert!(m
            .iter()
            .all(|x| x.is_idle() && x.f1 == 0.0 && x.support == 0));
    }

    #[test]
    fn comparison_buckets_unlabelled_documents() {
        let docs = [
            EvalDocument {
                id: "a".into(),
                gold: vec![s(0, 3, Label::Met), s(4, 6, Label::Pat)],
                pred: vec![s(0, 3, Label::Met), s(4, 6, Label::Met)],
            },
            EvalDocument {
                id: "b".into(),
                gold: vec![],
                pred: vec![s(0, 2, Label::Tto)],
            },
        ];
        let r = compare_report(&docs);
        let names: Vec<_> = r.rows.iter().map(|x| x.name.as_str()).collect();
        assert_eq!(names, ["MET", "PAT", NO_LABEL]);
        assert_eq!(r.row("MET").unwrap().incorrect_predicted, 1);
        assert_eq!(r.row(NO_LABEL).unwrap().extra_detected, 1);
        assert_eq!(r.hit_ratio(), Some((2, 3)));
        assert_eq!(compare_report(&[]).hit_fraction(), None);
    }

    #[test]
    fn tallies_split_overshoot() {
        let r = ComparisonReport::from_tallies(&[("MUTAC", 96, 109, 2), ("PAT", 750, 747, 11)]);
        let m = r.row("MUTAC").unwrap();
        assert_eq!((m.correct_predicted, m.extra_detected), (96, 13));
        assert_eq!(r.hits(), 109 + 747);
        assert_eq!(r.misses(), 13);
    }
}
