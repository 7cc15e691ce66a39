//! Lexical retrieval: BM25, MaxP aggregation, n-gram and exact quote search.

mod analyzer;
mod index;
mod ngram;
pub mod trec;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{CaseDocument, Passage};

pub use analyzer::{plain_words, Analyzer};
pub use index::{idf, term_weight, Bm25Params, InvertedIndex, UnitKind, INDEX_MAGIC, INDEX_VERSION};
pub use ngram::{exact_match_search, ngram_search, normalize_quote_marks, NgramIndex};

/// A retrievable unit: a passage or a whole document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub id: String,
    pub text: String,
}

impl Unit {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Unit {
            id: id.into(),
            text: text.into(),
        }
    }
}

impl From<&Passage> for Unit {
    fn from(p: &Passage) -> Self {
        Unit::new(p.passage_id.clone(), p.text.clone())
    }
}

impl From<&CaseDocument> for Unit {
    fn from(d: &CaseDocument) -> Self {
        Unit::new(d.doc_id.clone(), d.text.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub unit_id: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub k: usize,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn empty(query_id: impl Into<String>, k: usize) -> Self {
        RankedList {
            query_id: query_id.into(),
            k,
            entries: Vec::new(),
        }
    }

    /// Sorts `(unit_id, score)` pairs by score descending, then unit id
    /// ascending, and keeps the first `k`.
    pub fn from_scores(query_id: impl Into<String>, mut scored: Vec<(String, f64)>, k: usize) -> Self {
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        RankedList {
            query_id: query_id.into(),
            k,
            entries: scored
                .into_iter()
                .enumerate()
                .map(|(i, (unit_id, score))| RankedEntry {
                    unit_id,
                    score,
                    rank: i + 1,
                })
                .collect(),
        }
    }

    pub fn unit_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.unit_id.as_str())
    }
}

/// Passage id to owning document id for a set of passages.
pub fn passage_doc_map<'a>(passages: impl IntoIterator<Item = &'a Passage>) -> HashMap<String, String> {
    passages
        .into_iter()
        .map(|p| (p.passage_id.clone(), p.doc_id.clone()))
        .collect()
}

/// MaxP: each document takes the best score among its passages in the
/// ranking. Passages missing from `passage_to_doc` map to themselves.
pub fn aggregate_maxp(ranking: &RankedList, passage_to_doc: &HashMap<String, String>, k: usize) -> RankedList {
    let mut best: HashMap<&str, f64> = HashMap::new();
    for e in &ranking.entries {
        let doc = passage_to_doc
            .get(&e.unit_id)
            .map_or(e.unit_id.as_str(), String::as_str);
        best.entry(doc)
            .and_modify(|s| *s = s.max(e.score))
            .or_insert(e.score);
    }
    let scored = best.into_iter().map(|(d, s)| (d.to_owned(), s)).collect();
    RankedList::from_scores(ranking.query_id.clone(), scored, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(entries: &[(&str, f64)]) -> RankedList {
        RankedList::from_scores(
            "q",
            entries.iter().map(|(u, s)| (u.to_string(), *s)).collect(),
            100,
        )
    }

    #[test]
    fn maxp_takes_best_passage() {
        let run = list(&[("A#0", 3.0), ("A#1", 9.0), ("B#0", 7.0)]);
        let map: HashMap<String, String> = [("A#0", "A"), ("A#1", "A"), ("B#0", "B")]
            .into_iter()
            .map(|(p, d)| (p.to_owned(), d.to_owned()))
            .collect();
        let docs = aggregate_maxp(&run, &map, 10);
        assert_eq!(docs.unit_ids().collect::<Vec<_>>(), ["A", "B"]);
        assert_eq!(docs.entries[0].score, 9.0);
    }

    #[test]
    fn maxp_ties_by_doc_id() {
        let run = list(&[("Z#0", 5.0), ("B#0", 5.0)]);
        let map: HashMap<String, String> = [("Z#0", "Z"), ("B#0", "B")]
            .into_iter()
            .map(|(p, d)| (p.to_owned(), d.to_owned()))
            .collect();
        assert_eq!(aggregate_maxp(&run, &map, 10).unit_ids().collect::<Vec<_>>(), ["B", "Z"]);
    }

    #[test]
    fn maxp_identity_for_single_passage_docs() {
        let run = list(&[("a", 4.0), ("b", 2.0), ("c", 2.0), ("d", 1.0)]);
        let map: HashMap<String, String> = run.unit_ids().map(|u| (u.to_owned(), u.to_owned())).collect();
        assert_eq!(aggregate_maxp(&run, &map, run.k), run);
    }

    #[test]
    fn from_scores_truncates_and_ranks() {
        let l = RankedList::from_scores("q", vec![("b".into(), 1.0), ("a".into(), 1.0), ("c".into(), 2.0)], 2);
        assert_eq!(l.unit_ids().collect::<Vec<_>>(), ["c", "a"]);
        assert_eq!(l.entries.iter().map(|e| e.rank).collect::<Vec<_>>(), [1, 2]);
    }
}
