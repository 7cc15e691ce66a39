//! Retrieval queries: a window of context around a citation with the citing
//! sentence masked out, plus relevance judgments.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::citation::{
    citation_sentence_bounds, extract_direct_quotes, CitationKey, CitationKind, CitationParser, ParsedText,
    QuoteSpan,
};
use crate::corpus::{tokenize_words, CaseDocument, Passage};
use crate::retrieval::trec::Qrels;

pub const DEFAULT_WINDOW_WORDS: usize = 300;

/// Marker standing in for the masked sentence in `display_text`.
pub const REDACTION_MARKER: &str = "REDACTED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataView {
    SingleRemoved,
    AllRemoved,
}

impl DataView {
    pub const ALL: [DataView; 2] = [DataView::SingleRemoved, DataView::AllRemoved];

    pub fn code(self) -> &'static str {
        match self {
            DataView::SingleRemoved => "sr",
            DataView::AllRemoved => "ar",
        }
    }
}

impl fmt::Display for DataView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataView::SingleRemoved => "single-removed",
            DataView::AllRemoved => "all-removed",
        })
    }
}

impl std::str::FromStr for DataView {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "single-removed" | "sr" => Ok(DataView::SingleRemoved),
            "all-removed" | "ar" => Ok(DataView::AllRemoved),
            _ => Err(format!("unknown view `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Direct,
    Indirect,
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryKind::Direct => "direct",
            QueryKind::Indirect => "indirect",
        })
    }
}

impl std::str::FromStr for QueryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "direct" => Ok(QueryKind::Direct),
            "indirect" => Ok(QueryKind::Indirect),
            _ => Err(format!("unknown query kind `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryMetadata {
    /// Key used for relevance judgments: the first target key present in
    /// the corpus.
    pub qrels_key: CitationKey,
    pub relevant_doc: String,
    /// Byte range of the window in the source document.
    pub window_start: usize,
    pub window_end: usize,
    pub left_words: usize,
    pub sentence_words: usize,
    pub right_words: usize,
    /// Short forms outside the masked sentence that still refer to the
    /// target case.
    pub residual_short_forms: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub query_id: String,
    pub doc_id: String,
    pub view: DataView,
    pub kind: QueryKind,
    pub window_words: usize,
    pub masked_text: String,
    pub display_text: String,
    pub target_keys: Vec<CitationKey>,
    pub left_context: String,
    pub central_sentence: String,
    pub right_context: String,
    pub metadata: QueryMetadata,
}

impl RetrievalQuery {
    /// The unmasked window `l ∘ s ∘ r`.
    pub fn window_text(&self) -> String {
        format!("{}{}{}", self.left_context, self.central_sentence, self.right_context)
    }
}

/// Why a citation did not produce a query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    NoSuchGroup,
    NotCaseCitation,
    UnresolvedShortForm,
    BoundaryNotFound,
    TargetNotInCorpus,
}

/// Reporter citation to document id, built from each document's own cite.
#[derive(Clone, Debug, Default)]
pub struct CitationIndex {
    map: HashMap<CitationKey, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexConflict {
    pub key: CitationKey,
    pub kept: String,
    pub dropped: String,
}

impl CitationIndex {
    /// Every citation in a document's `reporter_cite` maps to it. When two
    /// documents claim the same key the first one wins.
    pub fn build(docs: &[CaseDocument], parser: &CitationParser) -> (Self, Vec<IndexConflict>) {
        let mut map: HashMap<CitationKey, String> = HashMap::new();
        let mut conflicts = Vec::new();
        for doc in docs {
            for span in parser.find_case_citations(&doc.reporter_cite) {
                let Some(key) = span.key else { continue };
                match map.get(&key) {
                    Some(kept) if kept != &doc.doc_id => conflicts.push(IndexConflict {
                        key,
                        kept: kept.clone(),
                        dropped: doc.doc_id.clone(),
                    }),
                    Some(_) => {}
                    None => {
                        map.insert(key, doc.doc_id.clone());
                    }
                }
            }
        }
        (CitationIndex { map }, conflicts)
    }

    pub fn resolve(&self, key: &CitationKey) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    /// First key that names a document in the corpus.
    pub fn resolve_first<'a>(&self, keys: &'a [CitationKey]) -> Option<(&'a CitationKey, &str)> {
        keys.iter().find_map(|k| self.resolve(k).map(|d| (k, d)))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// A document with its citations and quotes parsed once.
#[derive(Clone, Debug)]
pub struct DocumentContext<'a> {
    pub doc: &'a CaseDocument,
    pub parsed: ParsedText,
    pub quotes: Vec<QuoteSpan>,
}

impl<'a> DocumentContext<'a> {
    pub fn new(doc: &'a CaseDocument, parser: &CitationParser) -> Self {
        let parsed = parser.parse(&doc.text);
        let quotes = extract_direct_quotes(&doc.text, &parsed);
        DocumentContext { doc, parsed, quotes }
    }
}

/// Replaces `text[a..b]` and the whitespace around it by `repl` padded with
/// single spaces, dropping padding at the text edges.
fn splice(text: &str, a: usize, b: usize, repl: &str) -> String {
    let a = text[..a].trim_end().len();
    let b = text.len() - text[b..].trim_start().len();
    let mut out = String::with_capacity(text.len());
    out.push_str(&text[..a]);
    let left_pad = a > 0;
    let right_pad = b < text.len();
    if repl.is_empty() {
        if left_pad && right_pad {
            out.push(' ');
        }
    } else {
        if left_pad {
            out.push(' ');
        }
        out.push_str(repl);
        if right_pad {
            out.push(' ');
        }
    }
    out.push_str(&text[b..]);
    out
}

/// Masks a text under a data view.
///
/// `sentence` is removed except for statute citations inside it, its first
/// removed piece becoming `marker`. Then, until a re-parse finds nothing
/// more: single-removed drops full citations whose key is in `targets`;
/// all-removed drops every case citation and short form. Statutes are never
/// touched.
pub fn mask_text(
    text: &str,
    sentence: Option<(usize, usize)>,
    view: DataView,
    targets: &[CitationKey],
    parser: &CitationParser,
    marker: &str,
) -> String {
    let mut out = text.to_owned();
    if let Some((s, e)) = sentence {
        let statutes: Vec<(usize, usize)> = parser
            .find_statute_citations(text)
            .into_iter()
            .filter(|c| c.start >= s && c.end <= e)
            .map(|c| (c.start, c.end))
            .collect();
        let mut gaps = Vec::new();
        let mut cursor = s;
        for (a, b) in statutes {
            if a > cursor && !text[cursor..a].trim().is_empty() {
                gaps.push((cursor, a));
            }
            cursor = b;
        }
        if cursor < e && !text[cursor..e].trim().is_empty() {
            gaps.push((cursor, e));
        }
        for (i, &(a, b)) in gaps.iter().enumerate().rev() {
            out = splice(&out, a, b, if i == 0 { marker } else { "" });
        }
    }
    loop {
        let parsed = parser.parse(&out);
        let doomed: Vec<(usize, usize)> = parsed
            .citations
            .iter()
            .filter(|c| match view {
                DataView::SingleRemoved => {
                    c.kind == CitationKind::Case && c.key.as_ref().is_some_and(|k| targets.contains(k))
                }
                DataView::AllRemoved => true,
            })
            .map(|c| (c.start, c.end))
            .collect();
        if doomed.is_empty() {
            return out;
        }
        for &(a, b) in doomed.iter().rev() {
            out = splice(&out, a, b, "");
        }
    }
}

/// Masked and display text of a built query under `view`.
pub fn apply_view(query: &RetrievalQuery, view: DataView, parser: &CitationParser) -> (String, String) {
    let window = query.window_text();
    let s = query.left_context.len();
    let sentence = Some((s, s + query.central_sentence.len()));
    (
        mask_text(&window, sentence, view, &query.target_keys, parser, ""),
        mask_text(&window, sentence, view, &query.target_keys, parser, REDACTION_MARKER),
    )
}

/// Direct iff a quote inside `window` is paired with a citation whose key is
/// one of `targets`.
pub fn classify(quotes: &[QuoteSpan], window: (usize, usize), targets: &[CitationKey]) -> QueryKind {
    let direct = quotes.iter().any(|q| {
        q.start >= window.0
            && q.end <= window.1
            && q.paired_citation
                .as_ref()
                .and_then(|c| c.key.as_ref())
                .is_some_and(|k| targets.contains(k))
    });
    if direct {
        QueryKind::Direct
    } else {
        QueryKind::Indirect
    }
}

pub fn classify_query(query: &RetrievalQuery, ctx: &DocumentContext<'_>) -> QueryKind {
    classify(
        &ctx.quotes,
        (query.metadata.window_start, query.metadata.window_end),
        &query.target_keys,
    )
}

/// Builds the query for citation group `group` of a document.
///
/// The window takes ⌊w/2⌋ words left of the citing sentence and the rest to
/// its right, each side truncated at the document edge. The sentence itself
/// is always kept whole.
pub fn build_query(
    ctx: &DocumentContext<'_>,
    group: usize,
    window_words: usize,
    view: DataView,
    index: &CitationIndex,
    parser: &CitationParser,
) -> Result<RetrievalQuery, SkipReason> {
    let g = ctx.parsed.groups.get(group).ok_or(SkipReason::NoSuchGroup)?;
    let members = &ctx.parsed.citations[g.members()];
    if members.iter().all(|c| c.kind == CitationKind::Statute) {
        return Err(SkipReason::NotCaseCitation);
    }
    if g.keys.is_empty() {
        return Err(SkipReason::UnresolvedShortForm);
    }
    let (qrels_key, relevant_doc) = index.resolve_first(&g.keys).ok_or(SkipReason::TargetNotInCorpus)?;
    let (s, e) = citation_sentence_bounds(&ctx.doc.text, &ctx.parsed, g.first)
        .map_err(|_| SkipReason::BoundaryNotFound)?;

    let text = &ctx.doc.text;
    let words = tokenize_words(text);
    let left_all = words.partition_point(|w| w.end <= s);
    let right_first = words.partition_point(|w| w.start < e);
    let left_n = (window_words / 2).min(left_all);
    let right_n = (window_words - window_words / 2).min(words.len() - right_first);
    let ws = if left_n > 0 { words[left_all - left_n].start } else { s };
    let we = if right_n > 0 { words[right_first + right_n - 1].end } else { e };

    let targets = g.keys.clone();
    let residual = match view {
        DataView::SingleRemoved => ctx
            .parsed
            .citations
            .iter()
            .filter(|c| c.kind == CitationKind::ShortForm)
            .filter(|c| c.start >= ws && c.end <= we && (c.end <= s || c.start >= e))
            .filter(|c| c.key.as_ref().is_some_and(|k| targets.contains(k)))
            .count(),
        DataView::AllRemoved => 0,
    };
    let kind = classify(&ctx.quotes, (ws, we), &targets);
    let mut query = RetrievalQuery {
        query_id: format!("{}:{}:{}", ctx.doc.doc_id, group, view.code()),
        doc_id: ctx.doc.doc_id.clone(),
        view,
        kind,
        window_words,
        masked_text: String::new(),
        display_text: String::new(),
        target_keys: targets,
        left_context: text[ws..s].to_owned(),
        central_sentence: text[s..e].to_owned(),
        right_context: text[e..we].to_owned(),
        metadata: QueryMetadata {
            qrels_key: qrels_key.clone(),
            relevant_doc: relevant_doc.to_owned(),
            window_start: ws,
            window_end: we,
            left_words: left_n,
            sentence_words: tokenize_words(&text[s..e]).len(),
            right_words: right_n,
            residual_short_forms: residual,
        },
    };
    let (masked, display) = apply_view(&query, view, parser);
    query.masked_text = masked;
    query.display_text = display;
    Ok(query)
}

/// One query per window length for the same citation.
pub fn sweep_query_length(
    ctx: &DocumentContext<'_>,
    group: usize,
    lengths: &[usize],
    view: DataView,
    index: &CitationIndex,
    parser: &CitationParser,
) -> Result<Vec<RetrievalQuery>, SkipReason> {
    lengths
        .iter()
        .map(|&w| build_query(ctx, group, w, view, index, parser))
        .collect()
}

pub fn default_sweep_lengths() -> Vec<usize> {
    (1..=10).map(|i| i * 100).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub documents: usize,
    /// Citation groups considered as central citations.
    pub candidates: usize,
    pub emitted: usize,
    pub direct: usize,
    pub indirect: usize,
    pub skipped: BTreeMap<String, usize>,
    /// Share of candidates whose citing sentence could not be delimited.
    pub boundary_failure_rate: f64,
}

fn skip_label(reason: &SkipReason) -> String {
    serde_json::to_value(reason)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Builds queries for every citation group of every document in every
/// requested view. Output order follows document order, then group, then
/// view.
pub fn build_queries(
    docs: &[CaseDocument],
    index: &CitationIndex,
    parser: &CitationParser,
    window_words: usize,
    views: &[DataView],
) -> (Vec<RetrievalQuery>, ConstructionReport) {
    let per_doc: Vec<(Vec<RetrievalQuery>, Vec<SkipReason>, usize)> = docs
        .par_iter()
        .map(|doc| {
            let ctx = DocumentContext::new(doc, parser);
            let mut queries = Vec::new();
            let mut skips = Vec::new();
            for g in 0..ctx.parsed.groups.len() {
                let mut built = Vec::new();
                for &view in views {
                    match build_query(&ctx, g, window_words, view, index, parser) {
                        Ok(q) => built.push(q),
                        Err(r) => {
                            skips.push(r);
                            built.clear();
                            break;
                        }
                    }
                }
                queries.extend(built);
            }
            (queries, skips, ctx.parsed.groups.len())
        })
        .collect();

    let mut report = ConstructionReport {
        documents: docs.len(),
        ..Default::default()
    };
    let mut queries = Vec::new();
    let mut boundary_failures = 0;
    for (qs, skips, candidates) in per_doc {
        report.candidates += candidates;
        for r in &skips {
            if *r == SkipReason::BoundaryNotFound {
                boundary_failures += 1;
            }
            *report.skipped.entry(skip_label(r)).or_default() += 1;
        }
        queries.extend(qs);
    }
    report.emitted = queries.len();
    report.direct = queries.iter().filter(|q| q.kind == QueryKind::Direct).count();
    report.indirect = report.emitted - report.direct;
    if report.candidates > 0 {
        report.boundary_failure_rate = boundary_failures as f64 / report.candidates as f64;
    }
    (queries, report)
}

/// Document-level judgments: each query's relevant document.
pub fn emit_qrels(queries: &[RetrievalQuery]) -> Qrels {
    let mut qrels = Qrels::new();
    for q in queries {
        qrels
            .entry(q.query_id.clone())
            .or_default()
            .insert(q.metadata.relevant_doc.clone());
    }
    qrels
}

/// Passage-level judgments: every passage of a relevant document is relevant.
pub fn passage_qrels(doc_qrels: &Qrels, passages: &[Passage]) -> Qrels {
    let mut by_doc: HashMap<&str, Vec<&str>> = HashMap::new();
    for p in passages {
        by_doc.entry(p.doc_id.as_str()).or_default().push(&p.passage_id);
    }
    doc_qrels
        .iter()
        .map(|(qid, docs)| {
            let units = docs
                .iter()
                .flat_map(|d| by_doc.get(d.as_str()).into_iter().flatten())
                .map(|p| p.to_string())
                .collect();
            (qid.clone(), units)
        })
        .filter(|(_, units): &(String, std::collections::BTreeSet<String>)| !units.is_empty())
        .collect()
}
