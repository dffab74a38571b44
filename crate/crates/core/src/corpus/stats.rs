use std::collections::HashMap;

use super::{Corpus, CorpusError, SplitAssignment, SplitName};

/// Gold span counts per label, one row per split plus a `complete` row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelDistribution {
    /// `(row name, counts indexed by Label::index())`; the last row is
    /// always `complete`.
    pub rows: Vec<(String, [u64; 8])>,
}

impl LabelDistribution {
    pub fn row(&self, name: &str) -> Option<&[u64; 8]> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub fn complete(&self) -> &[u64; 8] {
        &self.rows.last().expect("complete row always present").1
    }

    /// True when the complete row equals the column sums of the split rows.
    pub fn is_consistent(&self) -> bool {
        rows_sum_to_total(
            &self.rows[..self.rows.len() - 1]
                .iter()
                .map(|(_, c)| c.to_vec())
                .collect::<Vec<_>>(),
            self.complete(),
        )
    }
}

/// Column-sum identity check on a table given as raw rows.
pub fn rows_sum_to_total(parts: &[Vec<u64>], total: &[u64]) -> bool {
    if parts.is_empty() {
        return true;
    }
    (0..total.len()).all(|col| parts.iter().map(|r| r[col]).sum::<u64>() == total[col])
}

/// Count gold spans per label, optionally broken down by split.
pub fn label_distribution(
    corpus: &Corpus,
    assignment: Option<&SplitAssignment>,
) -> Result<LabelDistribution, CorpusError> {
    let mut complete = [0u64; 8];
    for doc in &corpus.documents {
        for span in &doc.spans {
            complete[span.label.index()] += 1;
        }
    }
    let Some(assignment) = assignment else {
        return Ok(LabelDistribution {
            rows: vec![("complete".to_string(), complete)],
        });
    };

    let mut owner: HashMap<&str, SplitName> = HashMap::new();
    for name in SplitName::ALL {
        for id in assignment.ids(name) {
            if let Some(prev) = owner.insert(id.as_str(), name) {
                return Err(CorpusError::InvalidSplit(format!(
                    "document `{id}` assigned to both {prev} and {name}"
                )));
            }
        }
    }
    let mut per_split = [[0u64; 8]; 3];
    for doc in &corpus.documents {
        let split = owner.get(doc.id()).ok_or_else(|| {
            CorpusError::InvalidSplit(format!("document `{}` assigned to no split", doc.id()))
        })?;
        for span in &doc.spans {
            per_split[split.index()][span.label.index()] += 1;
        }
    }
    let corpus_ids = corpus.index();
    if let Some(stray) = owner.keys().find(|id| !corpus_ids.contains_key(*id)) {
        return Err(CorpusError::InvalidSplit(format!(
            "split lists unknown document `{stray}`"
        )));
    }

    let mut rows: Vec<_> = SplitName::ALL
        .iter()
        .map(|n| (n.as_str().to_string(), per_split[n.index()]))
        .collect();
    rows.push(("complete".to_string(), complete));
    Ok(LabelDistribution { rows })
}
