mod common;

use std::collections::{BTreeSet, HashMap};

use casebench::corpus::{chunk_document, mini_corpus};
use casebench::retrieval::trec::{read_qrels, read_run, write_qrels, write_run, Qrels};
use casebench::retrieval::{
    aggregate_maxp, exact_match_search, passage_doc_map, Analyzer, Bm25Params, InvertedIndex, NgramIndex, Unit,
    UnitKind,
};
use proptest::prelude::*;

fn build(units: Vec<Unit>, shards: usize) -> InvertedIndex {
    InvertedIndex::build(units, UnitKind::Passage, Analyzer::default(), shards).unwrap()
}

#[test]
fn five_doc_two_term_query_matches_full_scan() {
    let units = vec![
        Unit::new("d1", "summary judgment standard applies"),
        Unit::new("d2", "summary judgment summary judgment"),
        Unit::new("d3", "the pleading standard for pro se litigants"),
        Unit::new("d4", "fiduciary duty under ERISA"),
        Unit::new("d5", "nothing relevant here at all"),
    ];
    let idx = build(units.clone(), 2);
    let run = idx.search("q", "pleading fiduciary", 10, &Bm25Params::default());
    let oracle = common::naive_bm25(&units, "pleading fiduciary", 1.2, 0.75);
    assert_eq!(run.entries.len(), oracle.len());
    for (e, (id, s)) in run.entries.iter().zip(&oracle) {
        assert_eq!(&e.unit_id, id);
        assert!((e.score - s).abs() <= 1e-9 * s.abs());
    }
}

#[test]
fn reindexing_is_byte_identical() {
    let docs = mini_corpus().documents;
    let passages: Vec<Unit> = docs
        .iter()
        .flat_map(|d| chunk_document(d, 350, 175).unwrap())
        .map(|p| Unit::from(&p))
        .collect();
    let mut reversed = passages.clone();
    reversed.reverse();
    let a = build(passages, 1).to_bytes();
    let b = build(reversed, 3).to_bytes();
    assert_eq!(a, b);
    let loaded = InvertedIndex::from_bytes(&a).unwrap();
    assert_eq!(loaded.to_bytes(), a);
}

#[test]
fn maxp_over_mini_corpus_passages() {
    let docs = mini_corpus().documents;
    let passages: Vec<_> = docs.iter().flat_map(|d| chunk_document(d, 60, 30).unwrap()).collect();
    let idx = build(passages.iter().map(Unit::from).collect(), 2);
    let run = idx.search("q", "fiduciary plan assets officers", 1000, &Bm25Params::default());
    let map = passage_doc_map(&passages);
    let docs_run = aggregate_maxp(&run, &map, 10);
    let mut best: HashMap<&str, f64> = HashMap::new();
    for e in &run.entries {
        let d = map[&e.unit_id].as_str();
        let s = best.entry(d).or_insert(f64::MIN);
        *s = s.max(e.score);
    }
    let mut expected: Vec<(&str, f64)> = best.into_iter().collect();
    expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
    expected.truncate(10);
    let got: Vec<(&str, f64)> = docs_run.entries.iter().map(|e| (e.unit_id.as_str(), e.score)).collect();
    assert_eq!(got, expected);
}

#[test]
fn maxp_identity_on_single_passage_docs() {
    let units: Vec<Unit> = (0..20).map(|i| Unit::new(format!("d{i:02}"), format!("alpha beta{} gamma{}", i % 3, i % 5))).collect();
    let idx = build(units, 1);
    let run = idx.search("q", "beta1 gamma2", 100, &Bm25Params::default());
    let ids: Vec<&str> = idx.unit_ids().iter().map(String::as_str).collect();
    assert_eq!(aggregate_maxp(&run, &common::doc_map(&ids), run.k), run);
}

#[test]
fn trec_round_trip_through_files() {
    let units: Vec<Unit> = (0..10).map(|i| Unit::new(format!("u{i}"), format!("w{} w{}", i % 4, i % 7))).collect();
    let idx = build(units, 1);
    let runs = vec![
        idx.search("q1", "w1 w3", 5, &Bm25Params::default()),
        idx.search("q2", "w6", 5, &Bm25Params::default()),
    ];
    let mut buf = Vec::new();
    write_run(&mut buf, &runs, "bm25").unwrap();
    let back = read_run(&buf[..]).unwrap();
    for (a, b) in runs.iter().zip(&back) {
        assert_eq!(a.query_id, b.query_id);
        let ids_a: Vec<_> = a.unit_ids().collect();
        let ids_b: Vec<_> = b.unit_ids().collect();
        assert_eq!(ids_a, ids_b);
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert!((x.score - y.score).abs() < 1e-6);
        }
    }
    let mut qrels = Qrels::new();
    qrels.insert("q1".into(), BTreeSet::from(["u1".to_string(), "u3".to_string()]));
    let mut qbuf = Vec::new();
    write_qrels(&mut qbuf, &qrels).unwrap();
    assert_eq!(read_qrels(&qbuf[..]).unwrap(), qrels);
}

#[test]
fn exact_and_ngram_on_quotes_from_mini_corpus() {
    let docs = mini_corpus().documents;
    let units: Vec<Unit> = docs.iter().map(Unit::from).collect();
    let quote = "the plain language of Rule 56(c) mandates the entry of summary judgment";
    let hits = exact_match_search(&units, quote).unwrap();
    assert!(hits.contains(&"cb-001".to_string()));
    let altered = "[t]he plain language of Rule 56(c) mandates the entry of summary judgment";
    assert!(!exact_match_search(&units, altered).unwrap().contains(&"cb-001".to_string()));
    let idx = NgramIndex::build(units, 5).unwrap();
    let run = idx.search("q", altered, 10).unwrap();
    assert!(run.unit_ids().any(|u| u == "cb-001"));
}

#[test]
fn index_format_rejects_corruption() {
    let idx = build(vec![Unit::new("a", "x y"), Unit::new("b", "y z"), Unit::new("c", "z")], 1);
    let bytes = idx.to_bytes();
    for cut in 0..bytes.len() {
        assert!(InvertedIndex::from_bytes(&bytes[..cut]).is_err());
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(InvertedIndex::from_bytes(&extra).is_err());
}

fn corpus_strategy() -> impl Strategy<Value = (Vec<String>, String)> {
    let word = prop_oneof![
        8 => "[a-f]",
        2 => "[a-z]{2,5}",
        1 => Just("u.s".to_string()),
    ];
    let doc = prop::collection::vec(word.clone(), 0..25).prop_map(|w| w.join(" "));
    (
        prop::collection::vec(doc, 1..60),
        prop::collection::vec(word, 0..20).prop_map(|w| w.join(" ")),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bm25_equals_full_scan((texts, query) in corpus_strategy(), k in 1usize..80, shards in 1usize..5) {
        let units: Vec<Unit> = texts.iter().enumerate().map(|(i, t)| Unit::new(format!("u{i:03}"), t.clone())).collect();
        let idx = build(units.clone(), shards);
        let run = idx.search("q", &query, k, &Bm25Params::default());
        let mut oracle = common::naive_bm25(&units, &query, 1.2, 0.75);
        oracle.truncate(k);
        prop_assert_eq!(run.entries.len(), oracle.len());
        for (i, (e, (id, s))) in run.entries.iter().zip(&oracle).enumerate() {
            prop_assert_eq!(e.rank, i + 1);
            prop_assert!((e.score - s).abs() <= 1e-9 * s.abs());
            prop_assert_eq!(&e.unit_id, id);
        }
        for w in run.entries.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn serialization_round_trips((texts, _q) in corpus_strategy()) {
        let units: Vec<Unit> = texts.iter().enumerate().map(|(i, t)| Unit::new(format!("u{i}"), t.clone())).collect();
        let idx = build(units, 2);
        let back = InvertedIndex::from_bytes(&idx.to_bytes()).unwrap();
        prop_assert_eq!(back, idx);
    }
}
