use std::collections::{HashMap, HashSet};

use super::analyzer::plain_words;
use super::{RankedList, Unit};
use crate::error::{Error, Result};

/// Removes double curly and straight quotation marks and straightens single
/// curly quotes.
pub fn normalize_quote_marks(text: &str) -> String {
    text.chars()
        .filter(|c| !matches!(c, '\u{201c}' | '\u{201d}' | '"'))
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' => '\'',
            c => c,
        })
        .collect()
}

/// Ids of units whose text contains `quote` verbatim once quotation marks
/// are normalized on both sides. Results are in ascending id order.
pub fn exact_match_search(units: &[Unit], quote: &str) -> Result<Vec<String>> {
    let needle = normalize_quote_marks(quote);
    if needle.trim().is_empty() {
        return Err(Error::InvalidInput("empty quote".to_owned()));
    }
    let mut hits: Vec<String> = units
        .iter()
        .filter(|u| normalize_quote_marks(&u.text).contains(&needle))
        .map(|u| u.id.clone())
        .collect();
    hits.sort();
    Ok(hits)
}

/// Word n-gram postings over units, for quote retrieval.
#[derive(Clone, Debug)]
pub struct NgramIndex {
    n: usize,
    units: Vec<Unit>,
    postings: HashMap<String, Vec<u32>>,
}

fn ngrams(words: &[String], n: usize) -> impl Iterator<Item = String> + '_ {
    words.windows(n).map(|w| w.join(" "))
}

impl NgramIndex {
    pub fn build(mut units: Vec<Unit>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("n-gram size must be positive".to_owned()));
        }
        units.sort_by(|a, b| a.id.cmp(&b.id));
        let mut postings: HashMap<String, Vec<u32>> = HashMap::new();
        for (i, unit) in units.iter().enumerate() {
            let words = plain_words(&unit.text);
            let grams: HashSet<String> = ngrams(&words, n).collect();
            for g in grams {
                postings.entry(g).or_default().push(i as u32);
            }
        }
        Ok(NgramIndex { n, units, postings })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    /// Scores each unit by the number of distinct quote n-grams it contains.
    /// Quotes shorter than `n` words fall back to exact matching, scoring
    /// each hit 1.
    pub fn search(&self, query_id: &str, quote: &str, k: usize) -> Result<RankedList> {
        let words = plain_words(quote);
        if words.len() < self.n {
            let hits = exact_match_search(&self.units, quote)?;
            return Ok(RankedList::from_scores(
                query_id,
                hits.into_iter().map(|h| (h, 1.0)).collect(),
                k,
            ));
        }
        let grams: HashSet<String> = ngrams(&words, self.n).collect();
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for g in &grams {
            for &u in self.postings.get(g).into_iter().flatten() {
                *counts.entry(u).or_default() += 1;
            }
        }
        let scored = counts
            .into_iter()
            .map(|(u, c)| (self.units[u as usize].id.clone(), f64::from(c)))
            .collect();
        Ok(RankedList::from_scores(query_id, scored, k))
    }
}

/// One-shot n-gram search without a prebuilt index.
pub fn ngram_search(units: &[Unit], query_id: &str, quote: &str, n: usize, k: usize) -> Result<RankedList> {
    NgramIndex::build(units.to_vec(), n)?.search(query_id, quote, k)
}
