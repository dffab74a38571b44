//! File-level steps shared by the command line and the end-to-end tests.
//! Per-document work runs on the rayon pool; outputs are sorted by document
//! id so they do not depend on the number of threads.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::corpus::{
    parse_doccano, AnnotatedDocument, Corpus, CorpusError, Document, IngestOptions, IngestWarning,
};
use crate::evaluate::{align_documents, evaluate, ComparisonReport, EvalError, Evaluation};
use crate::gazetteer::CompiledMatcher;
use crate::predict::{
    aggregate_average, cross_entropy_loss, gold_word_tags, predict_entities, token_accuracy,
    Coords, DocumentWords, EntityDocument, PredictError, PredictedEntity, PredictionSet,
};
use crate::preprocess::{
    preprocess, project_labelled, Direction, OffsetMap, PassConfig, Projected,
};
use crate::report::{emit_chart_data, ChartKind};
use crate::span::Span;
use crate::tagcodec::{
    spans_to_tags, tokenize, CodecError, ConllSequence, EncodeWarnings, Tag, Token,
};

/// Name of the evaluation file inside an evaluation directory.
pub const EVALUATION_FILE: &str = "evaluation.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Corpus { path: PathBuf, source: CorpusError },
    #[error("{path}: {source}")]
    Predict { path: PathBuf, source: PredictError },
    #[error(transparent)]
    PredictData(#[from] PredictError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("document `{id}`: {source}")]
    Codec { id: String, source: CodecError },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("document `{0}` is not in the corpus")]
    UnknownDocument(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>, PipelineError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Write through `f` into `path`, flushing at the end.
pub fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn read_corpus(
    path: &Path,
    options: &IngestOptions,
) -> Result<(Corpus, Vec<IngestWarning>), PipelineError> {
    parse_doccano(open(path)?, options).map_err(|source| PipelineError::Corpus {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionSet>, PipelineError> {
    crate::predict::parse_predictions(open(path)?).map_err(|source| PipelineError::Predict {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_entities(path: &Path) -> Result<Vec<EntityDocument>, PipelineError> {
    crate::predict::read_entities(open(path)?).map_err(|source| PipelineError::Predict {
        path: path.to_path_buf(),
        source,
    })
}

/// Original → clean map of every document.
pub fn clean_maps(corpus: &Corpus, passes: &PassConfig) -> HashMap<String, OffsetMap> {
    corpus
        .documents
        .par_iter()
        .map(|d| (d.id().to_string(), preprocess(d.text(), passes).offset_map))
        .collect()
}

/// Preprocess every document, projecting gold spans onto the clean text.
/// Returns the clean corpus and the spans that covered only removed text.
pub fn preprocess_corpus(corpus: &Corpus, passes: &PassConfig) -> (Corpus, Vec<(String, Span)>) {
    let results: Vec<(AnnotatedDocument, Vec<Span>)> = corpus
        .documents
        .par_iter()
        .map(|d| {
            let pre = preprocess(d.text(), passes);
            let mut spans = Vec::new();
            let mut dropped = Vec::new();
            for s in &d.spans {
                match pre.span_to_clean(*s) {
                    Ok(Projected::Span(p))
                        if spans.last().is_none_or(|q: &Span| q.end <= p.start) =>
                    {
                        spans.push(p)
                    }
                    _ => dropped.push(*s),
                }
            }
            let doc = AnnotatedDocument {
                document: Document {
                    id: d.id().to_string(),
                    category: d.document.category,
                    text: pre.clean_text,
                },
                spans,
            };
            (doc, dropped)
        })
        .collect();
    let mut dropped = Vec::new();
    let mut docs = Vec::new();
    for (doc, lost) in results {
        dropped.extend(lost.into_iter().map(|s| (doc.id().to_string(), s)));
        docs.push(doc);
    }
    (Corpus::new(docs), dropped)
}

/// Token/tag sequences of every document, plus summed encoder warnings.
pub fn corpus_to_conll(
    corpus: &Corpus,
) -> Result<(Vec<ConllSequence>, EncodeWarnings), PipelineError> {
    let mut total = EncodeWarnings::default();
    let mut out = Vec::new();
    for d in &corpus.documents {
        let tokens = tokenize(d.text());
        let (seq, w) =
            spans_to_tags(d.id(), &tokens, &d.spans).map_err(|source| PipelineError::Codec {
                id: d.id().to_string(),
                source,
            })?;
        total.partial_tokens += w.partial_tokens;
        total.lost_spans += w.lost_spans;
        out.push(ConllSequence::from(&seq));
    }
    Ok((out, total))
}

/// Rebuild documents from CoNLL sequences: tokens joined by single spaces,
/// ids `doc-1`, `doc-2`, ...
pub fn conll_to_corpus(sequences: &[ConllSequence]) -> Corpus {
    let docs = sequences
        .iter()
        .enumerate()
        .map(|(i, seq)| {
            let mut text = String::new();
            let mut tokens = Vec::with_capacity(seq.tokens.len());
            for t in &seq.tokens {
                if !text.is_empty() {
                    text.push(' ');
                }
                let start = text.chars().count();
                text.push_str(t);
                tokens.push(Token {
                    text: t.clone(),
                    start,
                    end: start + t.chars().count(),
                });
            }
            AnnotatedDocument {
                document: Document {
                    id: format!("doc-{}", i + 1),
                    category: None,
                    text,
                },
                spans: crate::tagcodec::tags_to_spans(&tokens, &seq.tags),
            }
        })
        .collect();
    Corpus::new(docs)
}

fn sorted_by_id(mut docs: Vec<EntityDocument>) -> Vec<EntityDocument> {
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    docs
}

/// Dictionary-tag every document (on the preprocessed text, projected
/// back). Scores are 1.
pub fn tag_corpus(
    matcher: &CompiledMatcher,
    corpus: &Corpus,
    passes: &PassConfig,
) -> Vec<EntityDocument> {
    let docs = corpus
        .documents
        .par_iter()
        .map(|d| {
            let pre = preprocess(d.text(), passes);
            EntityDocument {
                id: d.id().to_string(),
                entities: matcher
                    .tag_preprocessed(&pre)
                    .into_iter()
                    .map(|s| PredictedEntity {
                        start: s.start,
                        end: s.end,
                        label: s.label,
                        score: 1.0,
                    })
                    .collect(),
            }
        })
        .collect();
    sorted_by_id(docs)
}

fn maps_for(
    sets: &[PredictionSet],
    corpus: Option<&Corpus>,
    passes: &PassConfig,
) -> Result<HashMap<String, OffsetMap>, PipelineError> {
    let mut maps = HashMap::new();
    for set in sets.iter().filter(|s| s.coords == Coords::Clean) {
        let Some(doc) = corpus.and_then(|c| c.get(&set.doc_id)) else {
            if corpus.is_some() {
                return Err(PipelineError::UnknownDocument(set.doc_id.clone()));
            }
            return Err(PredictError::MissingOffsetMap(set.doc_id.clone()).into());
        };
        maps.insert(
            set.doc_id.clone(),
            preprocess(doc.text(), passes).offset_map,
        );
    }
    Ok(maps)
}

/// Entities from model predictions. `corpus` is needed only for sets in
/// clean coordinates.
pub fn entities_from_predictions(
    sets: &[PredictionSet],
    corpus: Option<&Corpus>,
    passes: &PassConfig,
) -> Result<Vec<EntityDocument>, PipelineError> {
    let maps = maps_for(sets, corpus, passes)?;
    let docs = predict_entities(sets, &maps)?
        .into_iter()
        .map(|(id, entities)| EntityDocument { id, entities })
        .collect();
    Ok(sorted_by_id(docs))
}

/// Word-level `(accuracy, loss)` of model predictions against the gold
/// spans, projected onto the clean text for sets in clean coordinates.
pub fn word_scores(
    sets: &[PredictionSet],
    corpus: &Corpus,
    passes: &PassConfig,
) -> Result<(f64, f64), PipelineError> {
    let per_doc: Vec<(DocumentWords, Vec<Tag>)> = sets
        .par_iter()
        .map(|set| {
            let doc = corpus
                .get(&set.doc_id)
                .ok_or_else(|| PipelineError::UnknownDocument(set.doc_id.clone()))?;
            let gold: Vec<Span> = match set.coords {
                Coords::Raw => doc.spans.clone(),
                Coords::Clean => {
                    let map = preprocess(doc.text(), passes).offset_map;
                    doc.spans
                        .iter()
                        .filter_map(|s| match project_labelled(&map, Direction::Forward, *s) {
                            Ok(Projected::Span(p)) => Some(p),
                            _ => None,
                        })
                        .collect()
                }
            };
            let words = aggregate_average(set);
            let tags = gold_word_tags(&words, &gold);
            Ok((
                DocumentWords {
                    doc_id: set.doc_id.clone(),
                    words,
                },
                tags,
            ))
        })
        .collect::<Result<_, PipelineError>>()?;
    let (words, gold): (Vec<_>, HashMap<_, _>) = per_doc
        .into_iter()
        .map(|(w, t)| {
            let id = w.doc_id.clone();
            (w, (id, t))
        })
        .unzip();
    Ok((
        token_accuracy(&words, &gold)?,
        cross_entropy_loss(&words, &gold)?,
    ))
}

/// Strict evaluation of entity predictions against the gold corpus.
pub fn evaluate_entities(
    gold: &Corpus,
    predicted: &[EntityDocument],
    word_scores: Option<(f64, f64)>,
) -> Result<Evaluation, PipelineError> {
    let preds: Vec<(String, Vec<Span>)> = predicted
        .iter()
        .map(|d| {
            (
                d.id.clone(),
                d.entities.iter().map(PredictedEntity::span).collect(),
            )
        })
        .collect();
    let docs = align_documents(gold, &preds)?;
    Ok(evaluate(
        &docs,
        word_scores.map(|s| s.0),
        word_scores.map(|s| s.1),
    ))
}

pub fn write_evaluation(dir: &Path, eval: &Evaluation) -> Result<(), PipelineError> {
    let path = dir.join(EVALUATION_FILE);
    write_file(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, eval)?;
        w.write_all(b"\n")
    })
}

pub fn read_evaluation(dir: &Path) -> Result<Evaluation, PipelineError> {
    let path = dir.join(EVALUATION_FILE);
    serde_json::from_reader(open(&path)?).map_err(|source| PipelineError::Json { path, source })
}

/// Write `charts.json` plus one CSV per chart into `dir`; returns notices
/// about omitted charts.
pub fn write_charts(dir: &Path, report: &ComparisonReport) -> Result<Vec<String>, PipelineError> {
    let (charts, notices) = emit_chart_data(report);
    write_file(&dir.join("charts.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &charts)?;
        w.write_all(b"\n")
    })?;
    for chart in &charts {
        let name = match chart.kind {
            ChartKind::Pie => "hits_pie.csv",
            ChartKind::GroupedBar => "comparison_bar.csv",
        };
        let csv = chart.to_csv();
        write_file(&dir.join(name), |w| w.write_all(csv.as_bytes()))?;
    }
    Ok(notices)
}
