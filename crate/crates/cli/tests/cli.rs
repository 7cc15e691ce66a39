use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use casebench::genset::GenerationInstance;
use casebench::metrics::GenerationRecord;
use casebench::query::{DataView, QueryKind, RetrievalQuery};
use casebench::retrieval::trec::{read_qrels, read_run};
use serde_json::Value;

fn cb(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_casebench"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Path, args: &[&str]) {
    let o = cb(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn manifest(out: &Path, cmd: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join(format!("{cmd}.manifest.json"))).unwrap()).unwrap()
}

#[test]
fn ingest_output_is_a_fixed_point() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["--mini-corpus", "ingest"]);
    let docs = a.path().join("documents.jsonl");
    ok(b.path(), &["ingest", docs.to_str().unwrap()]);
    assert_eq!(fs::read(&docs).unwrap(), fs::read(b.path().join("documents.jsonl")).unwrap());
    ok(a.path(), &["--mini-corpus", "chunk"]);
    ok(b.path(), &["--corpus", docs.to_str().unwrap(), "chunk"]);
    assert_eq!(
        fs::read(a.path().join("passages.jsonl")).unwrap(),
        fs::read(b.path().join("passages.jsonl")).unwrap()
    );
    assert_eq!(manifest(a.path(), "ingest")["counts"]["documents"], 31);
}

#[test]
fn cap_records_are_adapted() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("cap.jsonl");
    fs::write(
        &input,
        "{\"id\": 12, \"name_abbreviation\": \"A v. B\", \"citations\": [{\"type\": \"official\", \"cite\": \"1 F.3d 2\"}], \
         \"casebody\": {\"data\": {\"opinions\": [{\"type\": \"majority\", \"text\": \"First.\\nSecond.\"}]}}}\nnot json\n",
    )
    .unwrap();
    ok(dir.path(), &["ingest", "--cap", input.to_str().unwrap()]);
    let m = manifest(dir.path(), "ingest");
    assert_eq!(m["counts"]["documents"], 1);
    assert_eq!(m["counts"]["paragraphs"], 2);
    assert_eq!(m["failures"]["rejected_records"], 1);
}

#[test]
fn view_and_kind_filters() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["--mini-corpus", "build-queries", "--view", "single-removed", "--kind", "indirect"],
    );
    let queries: Vec<RetrievalQuery> = jsonl(&dir.path().join("queries.jsonl"));
    assert!(!queries.is_empty());
    assert!(queries.iter().all(|q| q.view == DataView::SingleRemoved && q.kind == QueryKind::Indirect));
    assert!(queries.iter().all(|q| q.query_id.ends_with(":sr")));
    let qrels = read_qrels(&fs::read(dir.path().join("qrels.txt")).unwrap()[..]).unwrap();
    assert_eq!(qrels.len(), queries.len());
    let pq = read_qrels(&fs::read(dir.path().join("qrels.passage.txt")).unwrap()[..]).unwrap();
    assert_eq!(pq.keys().collect::<Vec<_>>(), qrels.keys().collect::<Vec<_>>());
    let m = manifest(dir.path(), "build-queries");
    assert_eq!(m["counts"]["queries"], queries.len());
    assert!(m["failures"]["sentence_failure_rate"].is_f64());
}

#[test]
fn retrieval_artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--mini-corpus", "build-queries"]);
    ok(d, &["--mini-corpus", "index", "--unit", "document"]);
    let idx = d.join("index.document.bin");
    let queries = d.join("queries.jsonl");
    ok(d, &["search", "--index", idx.to_str().unwrap(), "--queries", queries.to_str().unwrap(), "--k", "5"]);
    let runs = read_run(&fs::read(d.join("run.trec")).unwrap()[..]).unwrap();
    assert!(runs.iter().all(|r| r.entries.len() <= 5));
    let run = d.join("run.trec");
    let qrels = d.join("qrels.txt");
    let o = cb(d, &["eval-retrieval", run.to_str().unwrap(), qrels.to_str().unwrap(), "--k", "1,5"]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("R@1 ") && table.contains("R@5 ") && table.contains("nDCG@10"));
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["metrics"], serde_json::json!(["R@1", "R@5", "nDCG@10"]));
}

#[test]
fn maxp_runs_rank_documents() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--mini-corpus", "build-queries", "--view", "all-removed"]);
    ok(d, &["--mini-corpus", "index"]);
    let idx = d.join("index.passage.bin");
    let queries = d.join("queries.jsonl");
    ok(d, &["search", "--index", idx.to_str().unwrap(), "--queries", queries.to_str().unwrap()]);
    let runs = read_run(&fs::read(d.join("run.trec")).unwrap()[..]).unwrap();
    assert!(runs.iter().flat_map(|r| &r.entries).all(|e| !e.unit_id.contains('#')));
    ok(d, &["search", "--no-maxp", "--index", idx.to_str().unwrap(), "--queries", queries.to_str().unwrap(), "--output", "p.trec"]);
    let runs = read_run(&fs::read(d.join("p.trec")).unwrap()[..]).unwrap();
    assert!(runs.iter().flat_map(|r| &r.entries).all(|e| e.unit_id.contains('#')));
}

#[test]
fn gold_generations_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--mini-corpus", "--seed", "3", "build-genset"]);
    let instances: Vec<GenerationInstance> = jsonl(&d.join("genset.jsonl"));
    let write = |name: &str, f: &dyn Fn(&GenerationInstance) -> String| {
        let body: String = instances
            .iter()
            .map(|i| {
                let r = GenerationRecord {
                    instance_id: i.instance_id.clone(),
                    system: "oracle".into(),
                    output_text: f(i),
                };
                serde_json::to_string(&r).unwrap() + "\n"
            })
            .collect();
        fs::write(d.join(name), body).unwrap();
    };
    write("with.jsonl", &|i| i.gold.clone());
    write("without.jsonl", &|i| i.gold.split_whitespace().take(20).collect::<Vec<_>>().join(" "));
    let genset = d.join("genset.jsonl");
    ok(
        d,
        &[
            "eval-generation",
            "--genset",
            genset.to_str().unwrap(),
            "--generations",
            d.join("with.jsonl").to_str().unwrap(),
            "--without-refs",
            d.join("without.jsonl").to_str().unwrap(),
        ],
    );
    let eval: Value = serde_json::from_str(&fs::read_to_string(d.join("generation_eval.json")).unwrap()).unwrap();
    let avg = &eval["with_refs"]["systems"]["oracle"]["averages"];
    for m in ["R1", "R2", "RL", "CR", "CP"] {
        assert_eq!(avg[m], 1.0, "{m}");
    }
    assert_eq!(avg["CFP"], 0.0);
    assert!(eval["gains"]["oracle"].as_array().unwrap().len() == 6);
}

#[test]
fn stats_counts_match_other_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = cb(d, &["--mini-corpus", "stats"]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    for unit in ["doc", "passage", "query"] {
        assert!(table.lines().any(|l| l.starts_with(unit)), "{table}");
    }
    ok(d, &["--mini-corpus", "chunk"]);
    ok(d, &["--mini-corpus", "build-queries"]);
    let stats = manifest(d, "stats");
    assert_eq!(stats["counts"]["passages"], manifest(d, "chunk")["counts"]["passages"]);
    assert_eq!(stats["counts"]["querys"], manifest(d, "build-queries")["counts"]["queries"]);
}

#[test]
fn quote_search_modes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--mini-corpus", "search-quotes", "--mode", "exact"]);
    ok(d, &["--mini-corpus", "search-quotes", "--mode", "ngram", "--n", "5"]);
    let exact = manifest(d, "search-quotes");
    assert!(exact["counts"]["quotes"].as_u64().unwrap() > 20);
    assert!(d.join("quotes.exact.trec").exists() && d.join("quotes.5gram.trec").exists());
    let runs = read_run(&fs::read(d.join("quotes.5gram.trec")).unwrap()[..]).unwrap();
    let quotes: Vec<Value> = jsonl(&d.join("quotes.jsonl"));
    for r in &runs {
        let q = quotes.iter().find(|q| q["query_id"] == r.query_id.as_str()).unwrap();
        assert!(r.entries.iter().all(|e| q["doc_id"] != e.unit_id.as_str()));
    }
}

#[test]
fn config_errors_name_the_key_and_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("bad.toml");
    for (body, key) in [
        ("[chunk]\nwindw = 3\n", "windw"),
        ("[chunk]\nstride = 0\n", "chunk.stride"),
        ("[bm25]\nk1 = -2.0\n", "bm25.k1"),
    ] {
        fs::write(&cfg, body).unwrap();
        let out = d.join("out");
        let o = cb(&out, &["--mini-corpus", "--config", cfg.to_str().unwrap(), "chunk"]);
        assert_eq!(o.status.code(), Some(1));
        assert!(String::from_utf8_lossy(&o.stderr).contains(key), "{body}");
        assert!(!out.exists());
    }
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("c.toml");
    fs::write(&cfg, "[chunk]\nwindow = 100\nstride = 50\n").unwrap();
    ok(d, &["--mini-corpus", "--config", cfg.to_str().unwrap(), "chunk", "--stride", "25"]);
    let m = manifest(d, "chunk");
    assert_eq!(m["config"]["chunk"]["window"], 100);
    assert_eq!(m["config"]["chunk"]["stride"], 25);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["--threads", "0", "--mini-corpus", "chunk"],
        &["--mini-corpus", "build-queries", "--view", "sideways"],
        &["chunk"],
    ] {
        let o = cb(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
    assert_eq!(cb(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad = d.join("bad.bin");
    fs::write(&bad, b"CBIDX\0\0\0garbage").unwrap();
    let q = d.join("q.jsonl");
    fs::write(&q, "").unwrap();
    let out = d.join("out");
    let o = cb(&out, &["search", "--index", bad.to_str().unwrap(), "--queries", q.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let o = cb(&out, &["--corpus", d.join("absent.jsonl").to_str().unwrap(), "chunk"]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(d.join("empty.jsonl"), "{\"id\": \"x\"}\n").unwrap();
    let o = cb(&out, &["--corpus", d.join("empty.jsonl").to_str().unwrap(), "chunk"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn thread_count_does_not_change_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, t) in [(a.path(), "1"), (b.path(), "3")] {
        ok(dir, &["--threads", t, "--mini-corpus", "build-genset"]);
        ok(dir, &["--threads", t, "--mini-corpus", "index"]);
    }
    for f in ["genset.jsonl", "index.passage.bin", "build-genset.manifest.json", "index.manifest.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
