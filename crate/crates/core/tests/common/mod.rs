#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use casebench::retrieval::{Analyzer, Unit};

/// Full-scan BM25: every unit is scored term by term straight from its
/// token list.
pub fn naive_bm25(units: &[Unit], query: &str, k1: f64, b: f64) -> Vec<(String, f64)> {
    let analyzer = Analyzer::default();
    let docs: Vec<Vec<String>> = units.iter().map(|u| analyzer.tokens(&u.text)).collect();
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let q = analyzer.tokens(query);
    let mut distinct: Vec<String> = Vec::new();
    for t in &q {
        if !distinct.contains(t) {
            distinct.push(t.clone());
        }
    }
    let mut out = Vec::new();
    for (u, d) in units.iter().zip(&docs) {
        let mut score = 0.0;
        for t in &distinct {
            let df = docs.iter().filter(|x| x.contains(t)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5)).ln();
            if idf <= 0.0 {
                continue;
            }
            let tf = d.iter().filter(|x| *x == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let qtf = q.iter().filter(|x| *x == t).count() as f64;
            let per_occurrence = idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avg));
            score += qtf * per_occurrence;
        }
        if score > 0.0 {
            out.push((u.id.clone(), score));
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out
}

pub fn naive_recall(ranked: &[String], positives: &BTreeSet<String>, k: usize) -> f64 {
    let mut hits = 0;
    for (i, id) in ranked.iter().enumerate() {
        if i < k && positives.contains(id) {
            hits += 1;
        }
    }
    hits as f64 / positives.len() as f64
}

pub fn naive_ndcg(ranked: &[String], positives: &BTreeSet<String>, k: usize) -> f64 {
    let mut dcg = 0.0;
    for rank in 1..=k.min(ranked.len()) {
        if positives.contains(&ranked[rank - 1]) {
            dcg += 1.0 / ((rank + 1) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for rank in 1..=k.min(positives.len()) {
        idcg += 1.0 / ((rank + 1) as f64).log2();
    }
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

pub fn doc_map(ids: &[&str]) -> HashMap<String, String> {
    ids.iter().map(|s| (s.to_string(), s.to_string())).collect()
}
