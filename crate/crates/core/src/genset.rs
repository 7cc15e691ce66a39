//! Generation instances: a document prefix, the paragraph that follows it,
//! and salient text of the cases that paragraph cites.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::citation::{CitationKey, CitationKind, CitationParser};
use crate::corpus::{chunk_document, tokenize_words, CaseDocument, Passage, DEFAULT_STRIDE, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::query::CitationIndex;
use crate::retrieval::{Analyzer, Bm25Params, InvertedIndex, Unit, UnitKind};

pub const DEFAULT_SALIENT_K: usize = 2;
pub const DEFAULT_WORD_BUDGET: usize = 6000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GensetConfig {
    pub seed: u64,
    pub salient_k: usize,
    /// Upper bound on the total words of reference text per instance.
    pub word_budget: usize,
    pub bm25: Bm25Params,
}

impl Default for GensetConfig {
    fn default() -> Self {
        GensetConfig {
            seed: 0,
            salient_k: DEFAULT_SALIENT_K,
            word_budget: DEFAULT_WORD_BUDGET,
            bm25: Bm25Params::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub key: CitationKey,
    pub doc_id: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationInstance {
    pub instance_id: String,
    pub doc_id: String,
    /// 1-based index of the gold paragraph.
    pub t: usize,
    pub paragraph_count: usize,
    pub prefix: String,
    pub gold: String,
    pub cited_keys: Vec<CitationKey>,
    pub references: Vec<Reference>,
    pub prompt_with_refs: String,
    pub prompt_without_refs: String,
    pub salience: String,
}

impl GenerationInstance {
    pub fn prefix_paragraphs(&self) -> Vec<&str> {
        self.prefix.split('\n').collect()
    }
}

/// Distinct keys of the full case citations in `text`, in order of first
/// appearance.
pub fn case_keys(text: &str, parser: &CitationParser) -> Vec<CitationKey> {
    let mut keys: Vec<CitationKey> = Vec::new();
    for c in parser.find_case_citations(text) {
        if let Some(k) = c.key {
            if c.kind == CitationKind::Case && !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    keys
}

fn case_citation_count(text: &str, parser: &CitationParser) -> usize {
    parser.find_case_citations(text).len()
}

/// 1-based paragraph indices `t` with ⌊2N/3⌋ ≤ t ≤ N−2 whose paragraph
/// holds at least two case citations.
pub fn select_reference_paragraphs(doc: &CaseDocument, parser: &CitationParser) -> Vec<usize> {
    let n = doc.paragraph_count();
    if n < 3 {
        return Vec::new();
    }
    let lo = (2 * n / 3).max(1);
    (lo..=n - 2)
        .filter(|&t| case_citation_count(doc.paragraph(t - 1), parser) >= 2)
        .collect()
}

/// Ranks each cited document's passages against the gold paragraph.
pub struct SalienceEngine {
    index: InvertedIndex,
    passages: HashMap<String, Vec<(usize, Passage)>>,
}

impl SalienceEngine {
    pub fn new(docs: &[CaseDocument], analyzer: Analyzer, shards: usize) -> Result<Self> {
        let mut all = Vec::new();
        for doc in docs {
            all.extend(chunk_document(doc, DEFAULT_WINDOW, DEFAULT_STRIDE)?);
        }
        let index = InvertedIndex::build(all.iter().map(Unit::from).collect(), UnitKind::Passage, analyzer, shards)?;
        let mut passages: HashMap<String, Vec<(usize, Passage)>> = HashMap::new();
        for p in all {
            let pos = index.unit_position(&p.passage_id).expect("indexed passage");
            passages.entry(p.doc_id.clone()).or_default().push((pos, p));
        }
        Ok(SalienceEngine { index, passages })
    }

    /// Top `k` passages of `doc` by BM25 against `query`, merged where they
    /// overlap and returned in document order as word ranges.
    pub fn salient_ranges(&self, doc_id: &str, query: &str, k: usize, params: &Bm25Params) -> Vec<(usize, usize)> {
        let Some(passages) = self.passages.get(doc_id) else {
            return Vec::new();
        };
        let units: Vec<usize> = passages.iter().map(|(u, _)| *u).collect();
        let scores = self.index.score_units(query, &units, params);
        let mut order: Vec<usize> = (0..passages.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut picked: Vec<(usize, usize)> = order
            .into_iter()
            .take(k.max(1))
            .map(|i| (passages[i].1.word_start, passages[i].1.word_end))
            .collect();
        picked.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::new();
        for (s, e) in picked {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        merged
    }
}

fn words_text(text: &str, ranges: &[(usize, usize)], budget: usize) -> String {
    let words = tokenize_words(text);
    let mut left = budget;
    let mut pieces = Vec::new();
    for &(s, e) in ranges {
        if left == 0 {
            break;
        }
        let e = e.min(s + left);
        if s < e {
            pieces.push(&text[words[s].start..words[e - 1].end]);
            left -= e - s;
        }
    }
    pieces.join("\n")
}

pub fn render_prompt(instance: &GenerationInstance, with_refs: bool) -> String {
    render(&instance.prefix, &instance.references, with_refs)
}

fn render(prefix: &str, references: &[Reference], with_refs: bool) -> String {
    let mut out = String::new();
    if with_refs {
        out.push_str("Here are some reference articles for legal cases:\n");
        for r in references {
            out.push_str(&format!("# Reference case {}\n{}\n", r.key, r.text));
        }
        out.push('\n');
    }
    out.push_str("Here is the text I've written so far:\n# Paragrah\n");
    out.push_str(prefix);
    out.push_str("\n\nContinue to write it following the style of my writeup. Your answer contains 100 to 400 words. ");
    if with_refs {
        let keys: Vec<String> = references.iter().map(|r| r.key.to_string()).collect();
        out.push_str(&format!(
            "You must explicitly use the reference cases and mention their reference ids, i.e. {}. ",
            keys.join(", ")
        ));
    }
    out.push_str("Wrap your answer with <answer></answer>. Make your answer concise and avoid redundant languages.");
    out
}

/// Builds the instance for gold paragraph `t` (1-based).
pub fn build_generation_instance(
    doc: &CaseDocument,
    t: usize,
    corpus: &HashMap<&str, &CaseDocument>,
    index: &CitationIndex,
    engine: &SalienceEngine,
    parser: &CitationParser,
    config: &GensetConfig,
) -> Result<GenerationInstance> {
    let n = doc.paragraph_count();
    if t < 2 || t > n {
        return Err(Error::InvalidInput(format!("paragraph {t} out of range for {}", doc.doc_id)));
    }
    let gold = doc.paragraph(t - 1).to_owned();
    let prefix = doc.text[..doc.paragraphs[t - 1].0].trim_end_matches('\n').to_owned();
    let cited_keys = case_keys(&gold, parser);

    let mut targets: Vec<(CitationKey, &CaseDocument)> = Vec::new();
    for k in &cited_keys {
        if let Some(d) = index.resolve(k).and_then(|id| corpus.get(id)) {
            if !targets.iter().any(|(_, seen)| seen.doc_id == d.doc_id) {
                targets.push((k.clone(), d));
            }
        }
    }
    if targets.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no cited case of paragraph {t} is in the corpus",
            doc.doc_id
        )));
    }
    let share = config.word_budget / targets.len();
    let references: Vec<Reference> = targets
        .into_iter()
        .map(|(key, d)| {
            let ranges = engine.salient_ranges(&d.doc_id, &gold, config.salient_k, &config.bm25);
            Reference {
                key,
                doc_id: d.doc_id.clone(),
                text: words_text(&d.text, &ranges, share),
            }
        })
        .collect();
    Ok(GenerationInstance {
        instance_id: format!("{}:{t}", doc.doc_id),
        doc_id: doc.doc_id.clone(),
        t,
        paragraph_count: n,
        prompt_with_refs: render(&prefix, &references, true),
        prompt_without_refs: render(&prefix, &references, false),
        prefix,
        gold,
        cited_keys,
        references,
        salience: "bm25".to_owned(),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GensetReport {
    pub documents: usize,
    pub instances: usize,
    pub skipped: BTreeMap<String, usize>,
}

/// One instance per document with an eligible paragraph citing at least two
/// cases present in the corpus. The paragraph is drawn with a per-document
/// stream of a seeded generator, so results do not depend on thread count.
pub fn build_generation_set(
    docs: &[CaseDocument],
    index: &CitationIndex,
    engine: &SalienceEngine,
    parser: &CitationParser,
    config: &GensetConfig,
) -> (Vec<GenerationInstance>, GensetReport) {
    let corpus: HashMap<&str, &CaseDocument> = docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let results: Vec<std::result::Result<GenerationInstance, &'static str>> = docs
        .par_iter()
        .enumerate()
        .map(|(i, doc)| {
            let eligible: Vec<usize> = select_reference_paragraphs(doc, parser)
                .into_iter()
                .filter(|&t| {
                    case_keys(doc.paragraph(t - 1), parser)
                        .iter()
                        .filter(|k| index.resolve(k).is_some_and(|d| corpus.contains_key(d)))
                        .count()
                        >= 2
                })
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let &t = eligible.choose(&mut rng).ok_or("no-eligible-paragraph")?;
            build_generation_instance(doc, t, &corpus, index, engine, parser, config).map_err(|_| "no-resolvable-reference")
        })
        .collect();
    let mut report = GensetReport {
        documents: docs.len(),
        ..Default::default()
    };
    let mut instances = Vec::new();
    for r in results {
        match r {
            Ok(inst) => instances.push(inst),
            Err(reason) => *report.skipped.entry(reason.to_owned()).or_default() += 1,
        }
    }
    report.instances = instances.len();
    (instances, report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    /// Case citations per 100 words in each positional decile.
    pub decile_densities: [f64; 10],
    pub decile_words: [usize; 10],
    pub decile_citations: [usize; 10],
}

/// Paragraph `i` of `N` goes to decile ⌊10·i/N⌋.
pub fn citation_density_profile(docs: &[CaseDocument], parser: &CitationParser) -> DensityProfile {
    let mut words = [0usize; 10];
    let mut cites = [0usize; 10];
    for doc in docs {
        let n = doc.paragraph_count();
        for i in 0..n {
            let para = doc.paragraph(i);
            let bucket = i * 10 / n;
            words[bucket] += tokenize_words(para).len();
            cites[bucket] += case_citation_count(para, parser);
        }
    }
    let mut densities = [0.0; 10];
    for b in 0..10 {
        if words[b] > 0 {
            densities[b] = cites[b] as f64 / words[b] as f64 * 100.0;
        }
    }
    DensityProfile {
        decile_densities: densities,
        decile_words: words,
        decile_citations: cites,
    }
}
