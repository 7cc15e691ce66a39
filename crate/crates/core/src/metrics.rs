//! Retrieval metrics, ROUGE and citation metrics for generated text.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::citation::{CitationKey, CitationParser};
use crate::error::{Error, Result};
use crate::genset::GenerationInstance;
use crate::retrieval::plain_words;
use crate::retrieval::trec::Qrels;
use crate::retrieval::RankedList;

/// |top-k ∩ positives| / |positives|.
pub fn recall_at_k(run: &RankedList, positives: &BTreeSet<String>, k: usize) -> f64 {
    if positives.is_empty() {
        return 0.0;
    }
    let hits = run
        .entries
        .iter()
        .take(k)
        .filter(|e| positives.contains(&e.unit_id))
        .count();
    hits as f64 / positives.len() as f64
}

/// Binary-gain nDCG: a hit at rank i adds 1/log2(i+1); the ideal list puts
/// every positive first.
pub fn ndcg_at_k(run: &RankedList, positives: &BTreeSet<String>, k: usize) -> f64 {
    let ideal: f64 = (1..=positives.len().min(k)).map(|i| 1.0 / ((i + 1) as f64).log2()).sum();
    if ideal == 0.0 {
        return 0.0;
    }
    let dcg: f64 = run
        .entries
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, e)| positives.contains(&e.unit_id))
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    dcg / ideal
}

/// Per-query values and their averages for a set of named metrics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<String>,
    pub per_query: BTreeMap<String, BTreeMap<String, f64>>,
    pub averages: BTreeMap<String, f64>,
    pub scored: usize,
    /// Queries judged but absent from the run; they score zero.
    pub missing: Vec<String>,
    /// Items left out of the averages, with the reason.
    pub skipped: BTreeMap<String, String>,
    pub degenerate: usize,
}

impl MetricReport {
    fn finish(&mut self) {
        self.scored = self.per_query.len();
        self.averages = self
            .metrics
            .iter()
            .map(|m| {
                let values: Vec<f64> = self.per_query.values().filter_map(|v| v.get(m).copied()).collect();
                let mean = if values.is_empty() {
                    0.0
                } else {
                    values.iter().sum::<f64>() / values.len() as f64
                };
                (m.clone(), mean)
            })
            .collect();
    }

    /// Aligned plain-text summary.
    pub fn to_table(&self) -> String {
        let width = self.metrics.iter().map(String::len).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>10}", "metric", "average");
        for m in &self.metrics {
            let _ = writeln!(out, "{:<width$}  {:>10.4}", m, self.averages.get(m).copied().unwrap_or(0.0));
        }
        let _ = writeln!(
            out,
            "scored {}  missing {}  skipped {}  degenerate {}",
            self.scored,
            self.missing.len(),
            self.skipped.len(),
            self.degenerate
        );
        out
    }
}

pub fn retrieval_metric_names(ks: &[usize], ndcg_k: usize) -> Vec<String> {
    let mut names: Vec<String> = ks.iter().map(|k| format!("R@{k}")).collect();
    names.push(format!("nDCG@{ndcg_k}"));
    names
}

/// Scores every judged query. Queries with no positives are skipped; run
/// queries without judgments are ignored.
pub fn evaluate_run(runs: &[RankedList], qrels: &Qrels, ks: &[usize], ndcg_k: usize) -> MetricReport {
    let by_id: HashMap<&str, &RankedList> = runs.iter().map(|r| (r.query_id.as_str(), r)).collect();
    let mut report = MetricReport {
        metrics: retrieval_metric_names(ks, ndcg_k),
        ..Default::default()
    };
    let empty = RankedList::empty("", 0);
    for (qid, positives) in qrels {
        if positives.is_empty() {
            report.skipped.insert(qid.clone(), "no positive judgments".to_owned());
            continue;
        }
        let run = match by_id.get(qid.as_str()) {
            Some(r) => *r,
            None => {
                report.missing.push(qid.clone());
                &empty
            }
        };
        let mut values = BTreeMap::new();
        for &k in ks {
            values.insert(format!("R@{k}"), recall_at_k(run, positives, k));
        }
        values.insert(format!("nDCG@{ndcg_k}"), ndcg_at_k(run, positives, ndcg_k));
        report.per_query.insert(qid.clone(), values);
    }
    report.finish();
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RougeVariant {
    R1,
    R2,
    RL,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Candidate or reference had no words.
    pub degenerate: bool,
}

fn prf(overlap: usize, cand: usize, reference: usize) -> RougeScore {
    if overlap == 0 || cand == 0 || reference == 0 {
        return RougeScore::default();
    }
    let p = overlap as f64 / cand as f64;
    let r = overlap as f64 / reference as f64;
    RougeScore {
        precision: p,
        recall: r,
        f1: 2.0 * p * r / (p + r),
        degenerate: false,
    }
}

fn ngram_counts(words: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for w in words.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE over case-folded, punctuation-stripped words, no stemming.
pub fn rouge(candidate: &str, reference: &str, variant: RougeVariant) -> RougeScore {
    let c = plain_words(candidate);
    let r = plain_words(reference);
    if c.is_empty() || r.is_empty() {
        return RougeScore {
            degenerate: true,
            ..Default::default()
        };
    }
    match variant {
        RougeVariant::R1 | RougeVariant::R2 => {
            let n = if variant == RougeVariant::R1 { 1 } else { 2 };
            let cc = ngram_counts(&c, n);
            let rc = ngram_counts(&r, n);
            let overlap = cc.iter().map(|(g, &k)| k.min(rc.get(g).copied().unwrap_or(0))).sum();
            prf(overlap, c.len().saturating_sub(n - 1), r.len().saturating_sub(n - 1))
        }
        RougeVariant::RL => prf(lcs_len(&c, &r), c.len(), r.len()),
    }
}

pub fn rouge_f(candidate: &str, reference: &str, variant: RougeVariant) -> f64 {
    rouge(candidate, reference, variant).f1
}

/// An exact fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub numerator: usize,
    pub denominator: usize,
}

impl Fraction {
    pub fn new(numerator: usize, denominator: usize) -> Self {
        Fraction { numerator, denominator }
    }

    /// Zero when the denominator is zero.
    pub fn value(self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            self.numerator as f64 / self.denominator as f64
        }
    }

    /// Equality as rationals.
    pub fn equals(self, numerator: usize, denominator: usize) -> bool {
        self.numerator * denominator == numerator * self.denominator
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CitationVerdict {
    Matched,
    PrefixGrounded,
    Hallucinated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CitationReport {
    /// Distinct generated keys, in order of first appearance.
    pub generated: Vec<CitationKey>,
    pub relevant: Vec<CitationKey>,
    pub verdicts: Vec<CitationVerdict>,
    pub cr: Fraction,
    pub cp: Fraction,
    pub cfp: Fraction,
    /// No citation was generated; all three metrics are zero.
    pub degenerate: bool,
}

/// A generated citation and the surface forms it was written in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratedCitation {
    pub key: CitationKey,
    pub surfaces: Vec<String>,
}

/// True when `needle` occurs in `haystack` not flanked by digits.
fn contains_citation(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    haystack.match_indices(needle).any(|(i, _)| {
        let before = haystack[..i].chars().next_back();
        let after = haystack[i + needle.len()..].chars().next();
        !before.is_some_and(|c| c.is_ascii_digit()) && !after.is_some_and(|c| c.is_ascii_digit())
    })
}

/// Citations found in generated text, deduplicated by key.
pub fn extract_generated(text: &str, parser: &CitationParser) -> Vec<GeneratedCitation> {
    let mut out: Vec<GeneratedCitation> = Vec::new();
    for c in parser.parse(text).citations {
        let Some(key) = c.key.clone() else { continue };
        let surface = parser.core_surface(&c.raw).unwrap_or(&c.raw).to_owned();
        match out.iter_mut().find(|g| g.key == key) {
            Some(g) => {
                if !g.surfaces.contains(&surface) {
                    g.surfaces.push(surface);
                }
            }
            None => out.push(GeneratedCitation {
                key,
                surfaces: vec![surface],
            }),
        }
    }
    out
}

/// CR, CP and CFP for generated citations against the relevant set.
///
/// A citation outside `relevant` is grounded when its canonical form or one
/// of its surface forms occurs in one of `grounding` (the prefix paragraphs,
/// plus reference texts if requested by the caller); otherwise it is a
/// hallucination.
pub fn citation_report_from_citations(
    generated: &[GeneratedCitation],
    relevant: &[CitationKey],
    grounding: &[&str],
) -> Result<CitationReport> {
    if relevant.is_empty() {
        return Err(Error::InvalidInput("empty relevant citation set".to_owned()));
    }
    let mut relevant_set: Vec<CitationKey> = Vec::new();
    for k in relevant {
        if !relevant_set.contains(k) {
            relevant_set.push(k.clone());
        }
    }
    let mut keys: Vec<CitationKey> = Vec::new();
    let mut verdicts = Vec::new();
    for g in generated {
        if keys.contains(&g.key) {
            continue;
        }
        keys.push(g.key.clone());
        let canonical = g.key.to_string();
        let verdict = if relevant_set.contains(&g.key) {
            CitationVerdict::Matched
        } else if grounding.iter().any(|p| {
            contains_citation(p, &canonical) || g.surfaces.iter().any(|s| contains_citation(p, s))
        }) {
            CitationVerdict::PrefixGrounded
        } else {
            CitationVerdict::Hallucinated
        };
        verdicts.push(verdict);
    }
    let m = keys.len();
    let matched = verdicts.iter().filter(|v| **v == CitationVerdict::Matched).count();
    let hallucinated = verdicts.iter().filter(|v| **v == CitationVerdict::Hallucinated).count();
    let degenerate = m == 0;
    Ok(CitationReport {
        cr: if degenerate {
            Fraction::new(0, relevant_set.len())
        } else {
            Fraction::new(matched, relevant_set.len())
        },
        cp: Fraction::new(matched, m),
        cfp: Fraction::new(hallucinated, m),
        generated: keys,
        relevant: relevant_set,
        verdicts,
        degenerate,
    })
}

/// As [`citation_report_from_citations`] for bare keys, whose only surface
/// form is the canonical one.
pub fn citation_report_from_keys(
    generated: &[CitationKey],
    relevant: &[CitationKey],
    grounding: &[&str],
) -> Result<CitationReport> {
    let cites: Vec<GeneratedCitation> = generated
        .iter()
        .map(|k| GeneratedCitation {
            key: k.clone(),
            surfaces: vec![k.to_string()],
        })
        .collect();
    citation_report_from_citations(&cites, relevant, grounding)
}

pub fn citation_report(
    generated_text: &str,
    relevant: &[CitationKey],
    grounding: &[&str],
    parser: &CitationParser,
) -> Result<CitationReport> {
    citation_report_from_citations(&extract_generated(generated_text, parser), relevant, grounding)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationScoring {
    /// Also treat citations found in the reference texts as grounded.
    pub include_references_in_substring_check: bool,
    /// How CR, CP and CFP are averaged; ROUGE is always macro-averaged.
    pub averaging: Averaging,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub instance_id: String,
    pub system: String,
    pub output_text: String,
}

pub const GENERATION_METRICS: [&str; 6] = ["R1", "R2", "RL", "CR", "CP", "CFP"];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub systems: BTreeMap<String, MetricReport>,
    /// Generation records naming an unknown instance.
    pub unmatched: Vec<String>,
}

/// Scores generations per system against their instances.
pub fn score_generation_run(
    instances: &[GenerationInstance],
    generations: &[GenerationRecord],
    scoring: &GenerationScoring,
    parser: &CitationParser,
) -> GenerationReport {
    let by_id: HashMap<&str, &GenerationInstance> = instances.iter().map(|i| (i.instance_id.as_str(), i)).collect();
    let mut report = GenerationReport::default();
    let mut sums: BTreeMap<String, [usize; 6]> = BTreeMap::new();
    for g in generations {
        let Some(inst) = by_id.get(g.instance_id.as_str()) else {
            report.unmatched.push(g.instance_id.clone());
            continue;
        };
        let sys = report.systems.entry(g.system.clone()).or_insert_with(|| MetricReport {
            metrics: GENERATION_METRICS.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        });
        let mut values = BTreeMap::new();
        let r1 = rouge(&g.output_text, &inst.gold, RougeVariant::R1);
        if r1.degenerate {
            sys.degenerate += 1;
        }
        values.insert("R1".to_owned(), r1.f1);
        values.insert("R2".to_owned(), rouge_f(&g.output_text, &inst.gold, RougeVariant::R2));
        values.insert("RL".to_owned(), rouge_f(&g.output_text, &inst.gold, RougeVariant::RL));
        let mut grounding: Vec<&str> = inst.prefix_paragraphs();
        if scoring.include_references_in_substring_check {
            grounding.extend(inst.references.iter().map(|r| r.text.as_str()));
        }
        match citation_report(&g.output_text, &inst.cited_keys, &grounding, parser) {
            Ok(c) => {
                if c.degenerate {
                    sys.degenerate += 1;
                }
                values.insert("CR".to_owned(), c.cr.value());
                values.insert("CP".to_owned(), c.cp.value());
                values.insert("CFP".to_owned(), c.cfp.value());
                let s = sums.entry(g.system.clone()).or_default();
                for (slot, f) in s.chunks_mut(2).zip([c.cr, c.cp, c.cfp]) {
                    slot[0] += f.numerator;
                    slot[1] += f.denominator;
                }
            }
            Err(e) => {
                sys.skipped.insert(g.instance_id.clone(), format!("citation metrics: {e}"));
            }
        }
        sys.per_query.insert(g.instance_id.clone(), values);
    }
    for (name, sys) in report.systems.iter_mut() {
        sys.missing = instances
            .iter()
            .filter(|i| !sys.per_query.contains_key(&i.instance_id))
            .map(|i| i.instance_id.clone())
            .collect();
        sys.finish();
        if scoring.averaging == Averaging::Micro {
            if let Some(s) = sums.get(name) {
                for (i, m) in ["CR", "CP", "CFP"].iter().enumerate() {
                    sys.averages.insert(m.to_string(), Fraction::new(s[2 * i], s[2 * i + 1]).value());
                }
            }
        }
    }
    report
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub metric: String,
    pub with_refs: f64,
    pub without_refs: f64,
    /// Relative change in percent; absent when the baseline is zero.
    pub gain_pct: Option<f64>,
}

/// Per-metric relative change of one system over another.
pub fn paired_gains(with_refs: &MetricReport, without_refs: &MetricReport) -> Vec<GainRow> {
    with_refs
        .metrics
        .iter()
        .map(|m| {
            let w = with_refs.averages.get(m).copied().unwrap_or(0.0);
            let wo = without_refs.averages.get(m).copied().unwrap_or(0.0);
            GainRow {
                metric: m.clone(),
                with_refs: w,
                without_refs: wo,
                gain_pct: (wo != 0.0).then(|| (w - wo) / wo * 100.0),
            }
        })
        .collect()
}
