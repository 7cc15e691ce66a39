//! BM25 inverted index.
//!
//! Units are sorted by id at build time, so internal unit numbers follow
//! ascending id order and every tie-break on unit number is a tie-break on id.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analyzer::Analyzer;
use super::{RankedEntry, RankedList, Unit};
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 8] = b"CBIDX\0\0\0";
pub const INDEX_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Passage,
    Document,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Robertson/Sparck-Jones idf, floored at zero.
pub fn idf(unit_count: usize, df: usize) -> f64 {
    let n = unit_count as f64;
    let df = df as f64;
    ((n - df + 0.5) / (df + 0.5)).ln().max(0.0)
}

/// One term's contribution for a unit.
pub fn term_weight(idf: f64, tf: f64, unit_len: f64, avg_len: f64, params: &Bm25Params) -> f64 {
    idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * unit_len / avg_len))
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvertedIndex {
    kind: UnitKind,
    analyzer: Analyzer,
    unit_ids: Vec<String>,
    unit_lengths: Vec<u32>,
    total_length: u64,
    terms: Vec<String>,
    lookup: HashMap<String, u32>,
    offsets: Vec<usize>,
    post_units: Vec<u32>,
    post_tfs: Vec<u32>,
}

type ShardPostings = (Vec<u32>, BTreeMap<String, Vec<(u32, u32)>>);

fn index_shard(units: &[Unit], base: u32, analyzer: &Analyzer) -> ShardPostings {
    let mut lengths = Vec::with_capacity(units.len());
    let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
    let mut counts: HashMap<String, u32> = HashMap::new();
    for (i, unit) in units.iter().enumerate() {
        counts.clear();
        let mut len = 0u32;
        analyzer.for_each_token(&unit.text, |t| {
            len += 1;
            match counts.get_mut(t) {
                Some(c) => *c += 1,
                None => {
                    counts.insert(t.to_owned(), 1);
                }
            }
        });
        lengths.push(len);
        for (term, tf) in counts.drain() {
            postings.entry(term).or_default().push((base + i as u32, tf));
        }
    }
    for list in postings.values_mut() {
        list.sort_unstable();
    }
    (lengths, postings)
}

impl InvertedIndex {
    /// Builds an index over `units`, processing `shards` contiguous slices in
    /// parallel and merging their postings.
    pub fn build(mut units: Vec<Unit>, kind: UnitKind, analyzer: Analyzer, shards: usize) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty unit set".to_owned()));
        }
        if units.len() > u32::MAX as usize {
            return Err(Error::InvalidInput("too many units".to_owned()));
        }
        units.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = units.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidInput(format!("duplicate unit id `{}`", w[0].id)));
        }
        let shard_size = units.len().div_ceil(shards.max(1));
        let parts: Vec<ShardPostings> = units
            .par_chunks(shard_size)
            .enumerate()
            .map(|(s, chunk)| index_shard(chunk, (s * shard_size) as u32, &analyzer))
            .collect();

        let mut unit_lengths = Vec::with_capacity(units.len());
        let mut merged: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        for (lengths, postings) in parts {
            unit_lengths.extend(lengths);
            for (term, list) in postings {
                merged.entry(term).or_default().extend(list);
            }
        }
        let total_length = unit_lengths.iter().map(|&l| u64::from(l)).sum();
        let mut terms = Vec::with_capacity(merged.len());
        let mut offsets = Vec::with_capacity(merged.len() + 1);
        let mut post_units = Vec::new();
        let mut post_tfs = Vec::new();
        offsets.push(0);
        for (term, list) in merged {
            terms.push(term);
            for (u, tf) in list {
                post_units.push(u);
                post_tfs.push(tf);
            }
            offsets.push(post_units.len());
        }
        let unit_ids = units.into_iter().map(|u| u.id).collect();
        Ok(Self::assemble(kind, analyzer, unit_ids, unit_lengths, total_length, terms, offsets, post_units, post_tfs))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: UnitKind,
        analyzer: Analyzer,
        unit_ids: Vec<String>,
        unit_lengths: Vec<u32>,
        total_length: u64,
        terms: Vec<String>,
        offsets: Vec<usize>,
        post_units: Vec<u32>,
        post_tfs: Vec<u32>,
    ) -> Self {
        let lookup = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        InvertedIndex {
            kind,
            analyzer,
            unit_ids,
            unit_lengths,
            total_length,
            terms,
            lookup,
            offsets,
            post_units,
            post_tfs,
        }
    }

    pub fn kind(&self) -> UnitKind {
        self.kind
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn unit_count(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn unit_id(&self, unit: usize) -> &str {
        &self.unit_ids[unit]
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn unit_position(&self, id: &str) -> Option<usize> {
        self.unit_ids.binary_search_by(|u| u.as_str().cmp(id)).ok()
    }

    pub fn unit_length(&self, unit: usize) -> u32 {
        self.unit_lengths[unit]
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    pub fn average_length(&self) -> f64 {
        self.total_length as f64 / self.unit_ids.len() as f64
    }

    /// `(unit, tf)` pairs for a term, sorted by unit.
    pub fn postings(&self, term: &str) -> impl Iterator<Item = (u32, u32)> + '_ {
        let range = self
            .lookup
            .get(term)
            .map(|&t| self.offsets[t as usize]..self.offsets[t as usize + 1])
            .unwrap_or(0..0);
        self.post_units[range.clone()]
            .iter()
            .copied()
            .zip(self.post_tfs[range].iter().copied())
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.lookup
            .get(&*term)
            .map_or(0, |&t| self.offsets[t as usize + 1] - self.offsets[t as usize])
    }

    /// Distinct analyzed query terms in first-occurrence order with their
    /// query frequencies. Scores weight each term by its query frequency.
    pub fn query_terms(&self, query: &str) -> Vec<(String, u32)> {
        let mut terms: Vec<(String, u32)> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        self.analyzer.for_each_token(query, |t| match seen.get(t) {
            Some(&i) => terms[i].1 += 1,
            None => {
                seen.insert(t.to_owned(), terms.len());
                terms.push((t.to_owned(), 1));
            }
        });
        terms
    }

    /// BM25 top-`k`. Units with a positive score are ranked by score
    /// descending, ties by ascending unit id.
    pub fn search(&self, query_id: &str, query: &str, k: usize, params: &Bm25Params) -> RankedList {
        let n = self.unit_count();
        let avg = self.average_length();
        let mut acc = vec![0.0f64; n];
        let mut touched: Vec<u32> = Vec::new();
        for (term, qtf) in self.query_terms(query) {
            let Some(&t) = self.lookup.get(&term) else { continue };
            let range = self.offsets[t as usize]..self.offsets[t as usize + 1];
            let w = idf(n, range.len());
            if w <= 0.0 {
                continue;
            }
            let qtf = f64::from(qtf);
            for (&u, &tf) in self.post_units[range.clone()].iter().zip(&self.post_tfs[range]) {
                let slot = &mut acc[u as usize];
                if *slot == 0.0 {
                    touched.push(u);
                }
                *slot += qtf * term_weight(w, f64::from(tf), f64::from(self.unit_lengths[u as usize]), avg, params);
            }
        }
        let scored: Vec<(u32, f64)> = touched.into_iter().map(|u| (u, acc[u as usize])).collect();
        self.ranked(query_id, scored, k)
    }

    /// BM25 scores of `query` for the given units only, in the given order.
    pub fn score_units(&self, query: &str, units: &[usize], params: &Bm25Params) -> Vec<f64> {
        let n = self.unit_count();
        let avg = self.average_length();
        let mut scores = vec![0.0; units.len()];
        for (term, qtf) in self.query_terms(query) {
            let Some(&t) = self.lookup.get(&term) else { continue };
            let range = self.offsets[t as usize]..self.offsets[t as usize + 1];
            let w = idf(n, range.len());
            if w <= 0.0 {
                continue;
            }
            let list = &self.post_units[range.clone()];
            for (slot, &u) in scores.iter_mut().zip(units) {
                if let Ok(p) = list.binary_search(&(u as u32)) {
                    let tf = self.post_tfs[range.start + p];
                    *slot += f64::from(qtf) * term_weight(w, f64::from(tf), f64::from(self.unit_lengths[u]), avg, params);
                }
            }
        }
        scores
    }

    pub(crate) fn ranked(&self, query_id: &str, mut scored: Vec<(u32, f64)>, k: usize) -> RankedList {
        let order = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if k == 0 {
            scored.clear();
        } else if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        RankedList {
            query_id: query_id.to_owned(),
            k,
            entries: scored
                .into_iter()
                .enumerate()
                .map(|(i, (u, score))| RankedEntry {
                    unit_id: self.unit_ids[u as usize].clone(),
                    score,
                    rank: i + 1,
                })
                .collect(),
        }
    }

    /// Versioned little-endian binary layout:
    ///
    /// ```text
    /// magic[8] version:u32 kind:u8 analyzer:u8
    /// units:u32 { id_len:u32 id[id_len] length:u32 }*
    /// terms:u32 { term_len:u32 term[term_len] df:u32 { unit:u32 tf:u32 }*df }*
    /// ```
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_u32::<LittleEndian>(INDEX_VERSION)?;
        w.write_u8(match self.kind {
            UnitKind::Passage => 0,
            UnitKind::Document => 1,
        })?;
        w.write_u8(self.analyzer.flags())?;
        w.write_u32::<LittleEndian>(self.unit_ids.len() as u32)?;
        for (id, &len) in self.unit_ids.iter().zip(&self.unit_lengths) {
            write_str(&mut w, id)?;
            w.write_u32::<LittleEndian>(len)?;
        }
        w.write_u32::<LittleEndian>(self.terms.len() as u32)?;
        for (t, term) in self.terms.iter().enumerate() {
            write_str(&mut w, term)?;
            let range = self.offsets[t]..self.offsets[t + 1];
            w.write_u32::<LittleEndian>(range.len() as u32)?;
            for i in range {
                w.write_u32::<LittleEndian>(self.post_units[i])?;
                w.write_u32::<LittleEndian>(self.post_tfs[i])?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Loads and validates a serialized index.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let fmt = |m: &str| Error::IndexFormat(m.to_owned());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| fmt("truncated header"))?;
        if &magic != INDEX_MAGIC {
            return Err(fmt("bad magic"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|_| fmt("truncated header"))?;
        if version != INDEX_VERSION {
            return Err(Error::IndexFormat(format!(
                "unsupported version {version} (expected {INDEX_VERSION})"
            )));
        }
        let kind = match r.read_u8().map_err(|_| fmt("truncated header"))? {
            0 => UnitKind::Passage,
            1 => UnitKind::Document,
            _ => return Err(fmt("bad unit kind")),
        };
        let analyzer = Analyzer::from_flags(r.read_u8().map_err(|_| fmt("truncated header"))?)
            .ok_or_else(|| fmt("bad analyzer flags"))?;
        let n_units = read_count(&mut r, 8)?;
        if n_units == 0 {
            return Err(fmt("index has no units"));
        }
        let mut unit_ids: Vec<String> = Vec::with_capacity(n_units);
        let mut unit_lengths = Vec::with_capacity(n_units);
        for _ in 0..n_units {
            let id = read_str(&mut r)?;
            if unit_ids.last().is_some_and(|prev| prev.as_str() >= id.as_str()) {
                return Err(fmt("unit ids not strictly ascending"));
            }
            unit_ids.push(id);
            unit_lengths.push(r.read_u32::<LittleEndian>().map_err(|_| fmt("truncated units"))?);
        }
        let n_terms = read_count(&mut r, 8)?;
        let mut terms: Vec<String> = Vec::with_capacity(n_terms);
        let mut offsets = Vec::with_capacity(n_terms + 1);
        let mut post_units = Vec::new();
        let mut post_tfs = Vec::new();
        let mut tf_sums = vec![0u64; n_units];
        offsets.push(0);
        for _ in 0..n_terms {
            let term = read_str(&mut r)?;
            if terms.last().is_some_and(|prev| prev.as_str() >= term.as_str()) {
                return Err(fmt("terms not strictly ascending"));
            }
            terms.push(term);
            let df = read_count(&mut r, 8)?;
            if df == 0 {
                return Err(fmt("empty postings list"));
            }
            let mut prev: Option<u32> = None;
            for _ in 0..df {
                let u = r.read_u32::<LittleEndian>().map_err(|_| fmt("truncated postings"))?;
                let tf = r.read_u32::<LittleEndian>().map_err(|_| fmt("truncated postings"))?;
                if u as usize >= n_units || prev.is_some_and(|p| p >= u) || tf == 0 {
                    return Err(fmt("invalid posting"));
                }
                prev = Some(u);
                tf_sums[u as usize] += u64::from(tf);
                post_units.push(u);
                post_tfs.push(tf);
            }
            offsets.push(post_units.len());
        }
        if !r.is_empty() {
            return Err(fmt("trailing bytes"));
        }
        if tf_sums
            .iter()
            .zip(&unit_lengths)
            .any(|(&sum, &len)| sum != u64::from(len))
        {
            return Err(fmt("unit lengths disagree with postings"));
        }
        let total_length = unit_lengths.iter().map(|&l| u64::from(l)).sum();
        Ok(Self::assemble(kind, analyzer, unit_ids, unit_lengths, total_length, terms, offsets, post_units, post_tfs))
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// Reads a count and checks that at least `count * min_bytes` bytes remain.
fn read_count(r: &mut &[u8], min_bytes: usize) -> Result<usize> {
    let n = r
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::IndexFormat("truncated count".to_owned()))? as usize;
    if n.saturating_mul(min_bytes) > r.len() {
        return Err(Error::IndexFormat("count exceeds remaining data".to_owned()));
    }
    Ok(n)
}

fn read_str(r: &mut &[u8]) -> Result<String> {
    let len = read_count(r, 1)?;
    let (head, tail) = r.split_at(len);
    let s = std::str::from_utf8(head)
        .map_err(|_| Error::IndexFormat("invalid utf-8".to_owned()))?
        .to_owned();
    *r = tail;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn units(texts: &[&str]) -> Vec<Unit> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Unit::new(format!("u{i}"), *t))
            .collect()
    }

    fn build(texts: &[&str]) -> InvertedIndex {
        InvertedIndex::build(units(texts), UnitKind::Document, Analyzer::default(), 2).unwrap()
    }

    #[test]
    fn one_word_documents() {
        let idx = build(&["alpha", "beta", "gamma"]);
        assert_eq!(idx.unit_count(), 3);
        assert!(idx.vocabulary_size() <= 3);
        assert_eq!(idx.average_length(), 1.0);
    }

    #[test]
    fn unique_term_ranks_its_unit_first() {
        let idx = build(&["common words", "common rare words", "common words again"]);
        let run = idx.search("q", "rare", 10, &Bm25Params::default());
        assert_eq!(run.entries.len(), 1);
        assert_eq!(run.entries[0].unit_id, "u1");
        assert_eq!(run.entries[0].rank, 1);
    }

    #[test]
    fn empty_query_gives_empty_list() {
        let idx = build(&["a b", "c"]);
        assert!(idx.search("q", " ,; ", 10, &Bm25Params::default()).entries.is_empty());
        assert!(idx.search("q", "zzz", 10, &Bm25Params::default()).entries.is_empty());
    }

    #[test]
    fn rejects_empty_and_duplicate_units() {
        assert!(InvertedIndex::build(vec![], UnitKind::Passage, Analyzer::default(), 1).is_err());
        let dup = vec![Unit::new("a", "x"), Unit::new("a", "y")];
        assert!(InvertedIndex::build(dup, UnitKind::Passage, Analyzer::default(), 1).is_err());
    }

    #[test]
    fn shard_count_does_not_change_index() {
        let texts: Vec<String> = (0..50).map(|i| format!("t{} t{} shared", i % 7, i % 3)).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let a = InvertedIndex::build(units(&refs), UnitKind::Passage, Analyzer::default(), 1).unwrap();
        let b = InvertedIndex::build(units(&refs), UnitKind::Passage, Analyzer::default(), 4).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn serialization_round_trip_and_version_check() {
        let idx = build(&["the court held", "the statute", "held held"]);
        let bytes = idx.to_bytes();
        let back = InvertedIndex::from_bytes(&bytes).unwrap();
        assert_eq!(back, idx);
        let mut wrong = bytes.clone();
        wrong[8] = 2;
        assert!(matches!(InvertedIndex::from_bytes(&wrong), Err(Error::IndexFormat(m)) if m.contains("version")));
        assert!(InvertedIndex::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(InvertedIndex::from_bytes(b"nonsense").is_err());
    }

    #[test]
    fn score_units_matches_search() {
        let idx = build(&["a b c", "b c d", "c d e", "x y"]);
        let params = Bm25Params::default();
        let run = idx.search("q", "b d", 10, &params);
        let scores = idx.score_units("b d", &[0, 1, 2, 3], &params);
        for e in &run.entries {
            let u = idx.unit_position(&e.unit_id).unwrap();
            assert_eq!(scores[u], e.score);
        }
        assert_eq!(scores[3], 0.0);
    }
}
