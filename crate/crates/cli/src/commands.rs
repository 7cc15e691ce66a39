//! Subcommand implementations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use casebench::citation::{citation_sentence_bounds, default_parser, CitationKind, CitationParser, ReporterTable};
use casebench::corpus::{
    chunk_document, load_corpus, load_records, tokenize_words, CaseDocument, Passage, RawRecord, Rejection,
    MINI_CORPUS,
};
use casebench::genset::{build_generation_set, citation_density_profile, GenerationInstance, SalienceEngine};
use casebench::metrics::{
    evaluate_run, paired_gains, score_generation_run, GainRow, GenerationRecord, GenerationReport,
};
use casebench::query::{
    build_queries, emit_qrels, passage_qrels, CitationIndex, ConstructionReport, DataView, DocumentContext,
    QueryKind, RetrievalQuery,
};
use casebench::retrieval::trec::{read_qrels, read_run, write_qrels, write_run, Qrels};
use casebench::retrieval::{
    aggregate_maxp, exact_match_search, InvertedIndex, NgramIndex, RankedList, Unit, UnitKind,
};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{ConfigError, PipelineConfig};
use crate::output::{sha256_hex, InputRecord, Manifest, Staging};
use crate::{Cli, Command, GlobalArgs, QuoteMode, UnitArg};

/// Why a command failed, split by exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Data(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<casebench::Error> for Failure {
    fn from(e: casebench::Error) -> Self {
        Failure::Data(e.into())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Shared state of one command invocation.
struct Context {
    command: &'static str,
    cfg: PipelineConfig,
    parser: Option<CitationParser>,
    mini_corpus: bool,
    inputs: BTreeMap<String, InputRecord>,
    counts: BTreeMap<String, Value>,
    failures: BTreeMap<String, Value>,
    staging: Staging,
}

impl Context {
    fn parser(&self) -> &CitationParser {
        self.parser.as_ref().unwrap_or_else(|| default_parser())
    }

    fn read_input(&mut self, role: &str, path: &Path) -> Outcome<Vec<u8>> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.inputs.insert(
            role.to_owned(),
            InputRecord {
                name,
                sha256: sha256_hex(&bytes),
                bytes: bytes.len(),
            },
        );
        Ok(bytes)
    }

    fn count(&mut self, key: &str, value: impl Into<Value>) {
        self.counts.insert(key.to_owned(), value.into());
    }

    fn fail(&mut self, key: &str, value: impl Into<Value>) {
        self.failures.insert(key.to_owned(), value.into());
    }

    fn corpus_bytes(&mut self) -> Outcome<Vec<u8>> {
        if self.mini_corpus {
            let bytes = MINI_CORPUS.as_bytes().to_vec();
            self.inputs.insert(
                "corpus".to_owned(),
                InputRecord {
                    name: "mini-corpus".to_owned(),
                    sha256: sha256_hex(&bytes),
                    bytes: bytes.len(),
                },
            );
            return Ok(bytes);
        }
        let path = self
            .cfg
            .paths
            .corpus
            .clone()
            .ok_or_else(|| usage("no corpus: pass --corpus, --mini-corpus or set paths.corpus"))?;
        self.read_input("corpus", &path)
    }

    /// Loads the corpus, recording rejected records. An empty result is a
    /// data error.
    fn corpus(&mut self) -> Outcome<Vec<CaseDocument>> {
        let bytes = self.corpus_bytes()?;
        let loaded = load_corpus(&bytes[..])?;
        self.note_rejections(&loaded.rejected);
        if loaded.documents.is_empty() {
            return Err(Failure::Data(anyhow!("corpus has no valid documents")));
        }
        self.count("documents", loaded.documents.len());
        Ok(loaded.documents)
    }

    fn note_rejections(&mut self, rejected: &[Rejection]) {
        for r in rejected {
            eprintln!(
                "rejected record{}{}: {}",
                r.line.map(|l| format!(" at line {l}")).unwrap_or_default(),
                r.id.as_ref().map(|i| format!(" ({i})")).unwrap_or_default(),
                r.reason
            );
        }
        self.fail("rejected_records", rejected.len());
    }

    fn citation_index(&mut self, docs: &[CaseDocument]) -> CitationIndex {
        let (index, conflicts) = CitationIndex::build(docs, self.parser());
        for c in &conflicts {
            eprintln!("duplicate reporter citation {}: kept {}, dropped {}", c.key, c.kept, c.dropped);
        }
        self.fail("reporter_cite_conflicts", conflicts.len());
        index
    }

    fn passages(&self, docs: &[CaseDocument]) -> Outcome<Vec<Passage>> {
        let (w, s) = (self.cfg.chunk.window, self.cfg.chunk.stride);
        let per_doc: Result<Vec<Vec<Passage>>, casebench::Error> =
            docs.par_iter().map(|d| chunk_document(d, w, s)).collect();
        Ok(per_doc?.into_iter().flatten().collect())
    }

    fn finish(self, out_dir: &Path) -> Outcome {
        let mut staging = self.staging;
        let manifest = Manifest {
            command: self.command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config_sha256: self.cfg.hash(),
            config: self.cfg.parameters(),
            inputs: self.inputs,
            outputs: staging.hashes(),
            counts: self.counts,
            failures: self.failures,
        };
        let names: Vec<String> = staging.names().map(str::to_owned).collect();
        staging.add_json(&Manifest::file_name(self.command), &manifest)?;
        staging.commit(out_dir)?;
        for n in names {
            println!("{}", out_dir.join(n).display());
        }
        Ok(())
    }
}

fn parse_list<T>(key: &str, raw: &[String]) -> Outcome<Option<Vec<T>>>
where
    T: std::str::FromStr<Err = String>,
{
    if raw.is_empty() {
        return Ok(None);
    }
    raw.iter()
        .map(|s| s.trim().parse::<T>().map_err(|e| usage(format!("--{key}: {e}"))))
        .collect::<Outcome<Vec<T>>>()
        .map(Some)
}

fn positive_flag(name: &str, v: Option<usize>) -> Outcome<Option<usize>> {
    match v {
        Some(0) => Err(usage(format!("--{name} must be positive"))),
        other => Ok(other),
    }
}

fn load_config(global: &GlobalArgs) -> Outcome<PipelineConfig> {
    let mut cfg = match &global.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.genset.seed = seed;
    }
    if let Some(c) = &global.corpus {
        cfg.paths.corpus = Some(c.clone());
    }
    if let Some(r) = &global.reporters {
        cfg.paths.reporters = Some(r.clone());
    }
    if let Some(o) = &global.out_dir {
        cfg.paths.out_dir = Some(o.clone());
    }
    Ok(cfg)
}

/// Applies command flags to the configuration.
fn apply_overrides(cfg: &mut PipelineConfig, command: &Command) -> Outcome {
    match command {
        Command::Chunk { window, stride } => {
            if let Some(w) = positive_flag("window", *window)? {
                cfg.chunk.window = w;
            }
            if let Some(s) = positive_flag("stride", *stride)? {
                cfg.chunk.stride = s;
            }
        }
        Command::BuildQueries { view, kind, window } => {
            if let Some(v) = parse_list::<DataView>("view", view)? {
                cfg.query.views = v;
            }
            if let Some(k) = parse_list::<QueryKind>("kind", kind)? {
                cfg.query.kinds = k;
            }
            if let Some(w) = positive_flag("window", *window)? {
                cfg.query.window_words = w;
            }
        }
        Command::SweepLengths { lengths, view, kind } => {
            if !lengths.is_empty() {
                cfg.query.sweep_lengths = lengths.clone();
            }
            if let Some(v) = parse_list::<DataView>("view", view)? {
                cfg.query.views = v;
            }
            if let Some(k) = parse_list::<QueryKind>("kind", kind)? {
                cfg.query.kinds = k;
            }
        }
        Command::BuildGenset { salient_k, word_budget } => {
            if let Some(k) = positive_flag("salient-k", *salient_k)? {
                cfg.genset.salient_k = k;
            }
            if let Some(b) = positive_flag("word-budget", *word_budget)? {
                cfg.genset.word_budget = b;
            }
        }
        Command::Index { unit, shards } => {
            if let Some(u) = unit {
                cfg.index.unit = match u {
                    UnitArg::Passage => UnitKind::Passage,
                    UnitArg::Document => UnitKind::Document,
                };
            }
            if let Some(s) = positive_flag("shards", *shards)? {
                cfg.index.shards = s;
            }
        }
        Command::Search { k, maxp, no_maxp, tag, .. } => {
            if let Some(k) = positive_flag("k", *k)? {
                cfg.search.k = k;
            }
            if *maxp {
                cfg.search.maxp = true;
            }
            if *no_maxp {
                cfg.search.maxp = false;
            }
            if let Some(t) = tag {
                cfg.search.tag = t.clone();
            }
        }
        Command::SearchQuotes { n, k, .. } => {
            if let Some(n) = positive_flag("n", *n)? {
                cfg.ngram.n = n;
            }
            if let Some(k) = positive_flag("k", *k)? {
                cfg.ngram.k = k;
            }
        }
        Command::EvalRetrieval { k, ndcg_k, .. } => {
            if !k.is_empty() {
                cfg.metrics.ks = k.clone();
            }
            if let Some(n) = positive_flag("ndcg-k", *ndcg_k)? {
                cfg.metrics.ndcg_k = n;
            }
        }
        Command::EvalGeneration { include_references, micro, .. } => {
            if *include_references {
                cfg.metrics.include_references_in_substring_check = true;
            }
            if *micro {
                cfg.metrics.averaging = casebench::metrics::Averaging::Micro;
            }
        }
        Command::Ingest { .. } | Command::ParseCitations | Command::Density | Command::Stats => {}
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Outcome {
    let mut cfg = load_config(&cli.global)?;
    apply_overrides(&mut cfg, &cli.command)?;
    cfg.validate()?;
    let threads = positive_flag("threads", cli.global.threads)?;
    let out_dir = cfg.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let parser = match cfg.paths.reporters.clone() {
        Some(path) => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            Some(CitationParser::new(ReporterTable::from_json(&text)?))
        }
        None => None,
    };
    let mut ctx = Context {
        command: cli.command.name(),
        cfg,
        parser,
        mini_corpus: cli.global.mini_corpus,
        inputs: BTreeMap::new(),
        counts: BTreeMap::new(),
        failures: BTreeMap::new(),
        staging: Staging::default(),
    };
    if let Some(path) = ctx.cfg.paths.reporters.clone() {
        ctx.read_input("reporters", &path)?;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::Data(e.into()))?;
    pool.install(|| dispatch(&mut ctx, &cli.command))?;
    ctx.finish(&out_dir)
}

fn dispatch(ctx: &mut Context, command: &Command) -> Outcome {
    match command {
        Command::Ingest { input, cap } => ingest(ctx, input.as_deref(), *cap),
        Command::Chunk { .. } => chunk(ctx),
        Command::ParseCitations => parse_citations(ctx),
        Command::BuildQueries { .. } => build_query_set(ctx),
        Command::SweepLengths { .. } => sweep_lengths(ctx),
        Command::BuildGenset { .. } => build_genset(ctx),
        Command::Index { .. } => index(ctx),
        Command::Search { index, queries, output, .. } => search(ctx, index, queries, output),
        Command::SearchQuotes { mode, .. } => search_quotes(ctx, *mode),
        Command::EvalRetrieval { run, qrels, .. } => eval_retrieval(ctx, run, qrels),
        Command::EvalGeneration {
            genset,
            generations,
            without_refs,
            ..
        } => eval_generation(ctx, genset, generations, without_refs.as_deref()),
        Command::Density => density(ctx),
        Command::Stats => stats(ctx),
    }
}

fn read_jsonl<T: DeserializeOwned>(bytes: &[u8], what: &str) -> Outcome<Vec<T>> {
    let text = std::str::from_utf8(bytes).with_context(|| format!("{what} is not UTF-8"))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).with_context(|| format!("{what} line {}", i + 1))?;
        out.push(item);
    }
    Ok(out)
}

fn qrels_bytes(qrels: &Qrels) -> Outcome<Vec<u8>> {
    let mut buf = Vec::new();
    write_qrels(&mut buf, qrels)?;
    Ok(buf)
}

fn run_bytes(runs: &[RankedList], tag: &str) -> Outcome<Vec<u8>> {
    let mut buf = Vec::new();
    write_run(&mut buf, runs, tag)?;
    Ok(buf)
}

fn ingest(ctx: &mut Context, input: Option<&Path>, cap: bool) -> Outcome {
    let bytes = match input {
        Some(p) => ctx.read_input("records", p)?,
        None => ctx.corpus_bytes()?,
    };
    let loaded = if cap {
        let text = std::str::from_utf8(&bytes).context("input is not UTF-8")?;
        let mut records = Vec::new();
        let mut bad = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Value>(line).ok().as_ref().and_then(RawRecord::from_cap) {
                Some(r) => records.push((Some(i + 1), r)),
                None => bad.push(Rejection {
                    line: Some(i + 1),
                    id: None,
                    reason: "not a CAP case object".to_owned(),
                }),
            }
        }
        let mut loaded = load_records(records);
        loaded.rejected.extend(bad);
        loaded.rejected.sort_by_key(|r| r.line);
        loaded
    } else {
        load_corpus(&bytes[..])?
    };
    ctx.note_rejections(&loaded.rejected);
    if loaded.documents.is_empty() {
        return Err(Failure::Data(anyhow!("no valid records")));
    }
    ctx.count("documents", loaded.documents.len());
    ctx.count("paragraphs", loaded.documents.iter().map(|d| d.paragraph_count()).sum::<usize>());
    let records: Vec<RawRecord> = loaded.documents.iter().map(CaseDocument::to_record).collect();
    ctx.staging.add_jsonl("documents.jsonl", &records)?;
    ctx.staging.add_jsonl("rejections.jsonl", &loaded.rejected)?;
    Ok(())
}

fn chunk(ctx: &mut Context) -> Outcome {
    let docs = ctx.corpus()?;
    let passages = ctx.passages(&docs)?;
    ctx.count("passages", passages.len());
    ctx.staging.add_jsonl("passages.jsonl", &passages)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CitationRow {
    doc_id: String,
    start: usize,
    end: usize,
    kind: CitationKind,
    key: Option<String>,
}

fn parse_citations(ctx: &mut Context) -> Outcome {
    let docs = ctx.corpus()?;
    let parser = ctx.parser();
    let per_doc: Vec<(Vec<CitationRow>, usize, usize, usize)> = docs
        .par_iter()
        .map(|doc| {
            let c = DocumentContext::new(doc, parser);
            let mut rows = Vec::new();
            let mut sentences = 0;
            let mut failures = 0;
            let all = c.parsed.citations.iter().enumerate().map(|(i, s)| (Some(i), s));
            let statutes = c.parsed.statutes.iter().map(|s| (None, s));
            for (idx, span) in all.chain(statutes) {
                rows.push(CitationRow {
                    doc_id: doc.doc_id.clone(),
                    start: span.start,
                    end: span.end,
                    kind: span.kind,
                    key: span.key.as_ref().map(ToString::to_string),
                });
                if let (Some(i), false) = (idx, span.kind == CitationKind::Statute) {
                    sentences += 1;
                    if citation_sentence_bounds(&doc.text, &c.parsed, i).is_err() {
                        failures += 1;
                    }
                }
            }
            rows.sort_by_key(|r| (r.start, r.end));
            rows.dedup_by_key(|r| (r.start, r.end));
            let quotes = c.quotes.len();
            (rows, sentences, failures, quotes)
        })
        .collect();
    let mut rows = Vec::new();
    let (mut sentences, mut failures, mut quotes) = (0, 0, 0);
    for (r, s, f, q) in per_doc {
        rows.extend(r);
        sentences += s;
        failures += f;
        quotes += q;
    }
    let by_kind = |k: CitationKind| rows.iter().filter(|r| r.kind == k).count();
    let (case, statute, short) = (
        by_kind(CitationKind::Case),
        by_kind(CitationKind::Statute),
        by_kind(CitationKind::ShortForm),
    );
    let unresolved = rows.iter().filter(|r| r.kind == CitationKind::ShortForm && r.key.is_none()).count();
    ctx.count("case_citations", case);
    ctx.count("statute_citations", statute);
    ctx.count("short_form_citations", short);
    ctx.count("quotes", quotes);
    ctx.fail("unresolved_short_forms", unresolved);
    ctx.fail("sentence_boundary_failures", failures);
    let rate = if sentences == 0 { 0.0 } else { failures as f64 / sentences as f64 };
    ctx.fail("sentence_failure_rate", rate);
    ctx.staging.add_jsonl("citations.jsonl", &rows)?;
    Ok(())
}

fn record_construction(ctx: &mut Context, report: &ConstructionReport, queries: &[RetrievalQuery]) {
    ctx.count("candidates", report.candidates);
    ctx.count("queries", queries.len());
    ctx.count("direct", queries.iter().filter(|q| q.kind == QueryKind::Direct).count());
    ctx.count("indirect", queries.iter().filter(|q| q.kind == QueryKind::Indirect).count());
    for view in DataView::ALL {
        let n = queries.iter().filter(|q| q.view == view).count();
        ctx.count(&format!("view_{}", view.code()), n);
    }
    ctx.fail("skipped", serde_json::to_value(&report.skipped).unwrap_or_default());
    ctx.fail("sentence_failure_rate", report.boundary_failure_rate);
}

fn filtered_queries(ctx: &mut Context, docs: &[CaseDocument], index: &CitationIndex, window: usize) -> (Vec<RetrievalQuery>, ConstructionReport) {
    let (mut queries, report) = build_queries(docs, index, ctx.parser(), window, &ctx.cfg.query.views);
    let kinds = ctx.cfg.query.kinds.clone();
    queries.retain(|q| kinds.contains(&q.kind));
    (queries, report)
}

fn build_query_set(ctx: &mut Context) -> Outcome {
    let docs = ctx.corpus()?;
    let index = ctx.citation_index(&docs);
    let (queries, report) = filtered_queries(ctx, &docs, &index, ctx.cfg.query.window_words);
    record_construction(ctx, &report, &queries);
    let qrels = emit_qrels(&queries);
    let passages = ctx.passages(&docs)?;
    let pq = passage_qrels(&qrels, &passages);
    ctx.staging.add_jsonl("queries.jsonl", &queries)?;
    ctx.staging.add("qrels.txt", qrels_bytes(&qrels)?);
    ctx.staging.add("qrels.passage.txt", qrels_bytes(&pq)?);
    Ok(())
}

fn sweep_lengths(ctx: &mut Context) -> Outcome {
    let docs = ctx.corpus()?;
    let index = ctx.citation_index(&docs);
    let mut qrels = Qrels::new();
    let lengths = ctx.cfg.query.sweep_lengths.clone();
    let mut last_report = None;
    for &len in &lengths {
        let (queries, report) = filtered_queries(ctx, &docs, &index, len);
        for (qid, docs) in emit_qrels(&queries) {
            qrels.entry(qid).or_default().extend(docs);
        }
        ctx.count(&format!("queries_len{len}"), queries.len());
        ctx.staging.add_jsonl(&format!("queries.len{len}.jsonl"), &queries)?;
        last_report = Some(report);
    }
    if let Some(r) = last_report {
        ctx.fail("skipped", serde_json::to_value(&r.skipped).unwrap_or_default());
        ctx.fail("sentence_failure_rate", r.boundary_failure_rate);
    }
    ctx.staging.add("qrels.txt", qrels_bytes(&qrels)?);
    Ok(())
}

fn build_genset(ctx: &mut Context) -> Outcome {
    let docs = ctx.corpus()?;
    let index = ctx.citation_index(&docs);
    let engine = SalienceEngine::new(&docs, ctx.cfg.index.analyzer, ctx.cfg.index.shards)?;
    let (instances, report) = build_generation_set(&docs, &index, &engine, ctx.parser(), &ctx.cfg.genset_config());
    ctx.count("instances", instances.len());
    ctx.count("references", instances.iter().map(|i| i.references.len()).sum::<usize>());
    ctx.fail("skipped", serde_json::to_value(&report.skipped).unwrap_or_default());
    ctx.staging.add_jsonl("genset.jsonl", &instances)?;
    Ok(())
}

fn index(ctx: &mut Context) -> Outcome {
    let docs = ctx.corpus()?;
    let kind = ctx.cfg.index.unit;
    let units: Vec<Unit> = match kind {
        UnitKind::Passage => ctx.passages(&docs)?.iter().map(Unit::from).collect(),
        UnitKind::Document => docs.iter().map(Unit::from).collect(),
    };
    let idx = InvertedIndex::build(units, kind, ctx.cfg.index.analyzer, ctx.cfg.index.shards)?;
    ctx.count("units", idx.unit_count());
    ctx.count("vocabulary", idx.vocabulary_size());
    let name = match kind {
        UnitKind::Passage => "index.passage.bin",
        UnitKind::Document => "index.document.bin",
    };
    ctx.staging.add(name, idx.to_bytes());
    Ok(())
}

fn doc_of_passage(id: &str) -> String {
    id.rsplit_once('#').map_or(id, |(d, _)| d).to_owned()
}

fn search(ctx: &mut Context, index_path: &Path, queries_path: &Path, output: &str) -> Outcome {
    if output.is_empty() || output.contains(['/', '\\']) {
        return Err(usage("--output must be a plain file name"));
    }
    let bytes = ctx.read_input("index", index_path)?;
    let idx = InvertedIndex::from_bytes(&bytes)?;
    let qbytes = ctx.read_input("queries", queries_path)?;
    let queries: Vec<RetrievalQuery> = read_jsonl(&qbytes, "queries")?;
    let s = ctx.cfg.search.clone();
    let maxp = s.maxp && idx.kind() == UnitKind::Passage;
    let map: HashMap<String, String> = if maxp {
        idx.unit_ids().iter().map(|u| (u.clone(), doc_of_passage(u))).collect()
    } else {
        HashMap::new()
    };
    let bm25 = ctx.cfg.bm25;
    let runs: Vec<RankedList> = queries
        .par_iter()
        .map(|q| {
            if maxp {
                let passages = idx.search(&q.query_id, &q.masked_text, s.maxp_depth, &bm25);
                aggregate_maxp(&passages, &map, s.k)
            } else {
                idx.search(&q.query_id, &q.masked_text, s.k, &bm25)
            }
        })
        .collect();
    ctx.count("queries", runs.len());
    ctx.count("maxp", maxp);
    ctx.fail("empty_results", runs.iter().filter(|r| r.entries.is_empty()).count());
    ctx.staging.add(output, run_bytes(&runs, &s.tag)?);
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuoteQuery {
    pub query_id: String,
    pub doc_id: String,
    pub quote: String,
    pub target_key: String,
    pub relevant_doc: String,
}

/// Direct quotes whose attributed citation names a document in the corpus
/// other than the quoting one.
fn quote_queries(docs: &[CaseDocument], index: &CitationIndex, parser: &CitationParser) -> Vec<QuoteQuery> {
    docs.par_iter()
        .map(|doc| {
            let c = DocumentContext::new(doc, parser);
            let mut out = Vec::new();
            for (i, q) in c.quotes.iter().enumerate() {
                let Some(cite) = &q.paired_citation else { continue };
                let keys = c
                    .parsed
                    .citations
                    .iter()
                    .position(|s| s.start == cite.start && s.end == cite.end)
                    .and_then(|ci| c.parsed.group_of(ci))
                    .map(|g| c.parsed.groups[g].keys.clone())
                    .unwrap_or_else(|| cite.key.iter().cloned().collect());
                let Some((key, target)) = index.resolve_first(&keys) else { continue };
                if target == doc.doc_id || q.text.trim().is_empty() {
                    continue;
                }
                out.push(QuoteQuery {
                    query_id: format!("{}:q{}", doc.doc_id, i),
                    doc_id: doc.doc_id.clone(),
                    quote: q.text.clone(),
                    target_key: key.to_string(),
                    relevant_doc: target.to_owned(),
                });
            }
            out
        })
        .flatten()
        .collect()
}

fn without_source(run: RankedList, source: &str, k: usize) -> RankedList {
    let scores = run
        .entries
        .into_iter()
        .filter(|e| e.unit_id != source)
        .map(|e| (e.unit_id, e.score))
        .collect();
    RankedList::from_scores(run.query_id, scores, k)
}

fn search_quotes(ctx: &mut Context, mode: QuoteMode) -> Outcome {
    let docs = ctx.corpus()?;
    let index = ctx.citation_index(&docs);
    let quotes = quote_queries(&docs, &index, ctx.parser());
    let units: Vec<Unit> = docs.iter().map(Unit::from).collect();
    let (n, k) = (ctx.cfg.ngram.n, ctx.cfg.ngram.k);
    let (runs, tag): (Vec<RankedList>, String) = match mode {
        QuoteMode::Exact => {
            let runs = quotes
                .par_iter()
                .map(|q| {
                    let hits = exact_match_search(&units, &q.quote)?;
                    let scores = hits.into_iter().map(|h| (h, 1.0)).collect();
                    Ok(without_source(RankedList::from_scores(&q.query_id, scores, usize::MAX), &q.doc_id, k))
                })
                .collect::<Result<Vec<_>, casebench::Error>>()?;
            (runs, "exact".to_owned())
        }
        QuoteMode::Ngram => {
            let ngram = NgramIndex::build(units, n)?;
            let runs = quotes
                .par_iter()
                .map(|q| Ok(without_source(ngram.search(&q.query_id, &q.quote, k + 1)?, &q.doc_id, k)))
                .collect::<Result<Vec<_>, casebench::Error>>()?;
            (runs, format!("{n}gram"))
        }
    };
    let mut qrels = Qrels::new();
    for q in &quotes {
        qrels.entry(q.query_id.clone()).or_default().insert(q.relevant_doc.clone());
    }
    let found = runs
        .iter()
        .filter(|r| r.entries.iter().any(|e| qrels[&r.query_id].contains(&e.unit_id)))
        .count();
    ctx.count("quotes", quotes.len());
    ctx.count("retrieved_source", found);
    ctx.staging.add_jsonl("quotes.jsonl", &quotes)?;
    ctx.staging.add("quotes.qrels.txt", qrels_bytes(&qrels)?);
    ctx.staging.add(format!("quotes.{tag}.trec"), run_bytes(&runs, &tag)?);
    Ok(())
}

fn eval_retrieval(ctx: &mut Context, run: &Path, qrels: &Path) -> Outcome {
    let rbytes = ctx.read_input("run", run)?;
    let runs = read_run(&rbytes[..])?;
    let qbytes = ctx.read_input("qrels", qrels)?;
    let judgments = read_qrels(&qbytes[..])?;
    let report = evaluate_run(&runs, &judgments, &ctx.cfg.metrics.ks, ctx.cfg.metrics.ndcg_k);
    ctx.count("scored", report.scored);
    ctx.fail("missing", report.missing.len());
    ctx.fail("skipped", report.skipped.len());
    let judged: BTreeSet<&String> = judgments.keys().collect();
    ctx.fail("unjudged_run_queries", runs.iter().filter(|r| !judged.contains(&r.query_id)).count());
    let table = report.to_table();
    print!("{table}");
    ctx.staging.add_json("eval.json", &report)?;
    ctx.staging.add("eval.txt", table.into_bytes());
    Ok(())
}

#[derive(Serialize)]
struct GenerationEval<'a> {
    with_refs: &'a GenerationReport,
    without_refs: Option<&'a GenerationReport>,
    gains: BTreeMap<String, Vec<GainRow>>,
}

fn gains_table(gains: &BTreeMap<String, Vec<GainRow>>) -> String {
    let mut out = String::new();
    for (system, rows) in gains {
        out.push_str(&format!("{system}\n{:<8}{:>12}{:>12}{:>10}\n", "metric", "with", "without", "gain%"));
        for r in rows {
            let g = r.gain_pct.map_or_else(|| "-".to_owned(), |g| format!("{g:.1}"));
            out.push_str(&format!("{:<8}{:>12.4}{:>12.4}{:>10}\n", r.metric, r.with_refs, r.without_refs, g));
        }
    }
    out
}

fn eval_generation(ctx: &mut Context, genset: &Path, generations: &Path, without: Option<&Path>) -> Outcome {
    let gbytes = ctx.read_input("genset", genset)?;
    let instances: Vec<GenerationInstance> = read_jsonl(&gbytes, "genset")?;
    let scoring = ctx.cfg.scoring();
    let wbytes = ctx.read_input("generations", generations)?;
    let with: Vec<GenerationRecord> = read_jsonl(&wbytes, "generations")?;
    let with_report = score_generation_run(&instances, &with, &scoring, ctx.parser());
    let without_report = match without {
        Some(p) => {
            let bytes = ctx.read_input("generations_without_refs", p)?;
            let recs: Vec<GenerationRecord> = read_jsonl(&bytes, "generations without references")?;
            Some(score_generation_run(&instances, &recs, &scoring, ctx.parser()))
        }
        None => None,
    };
    let mut gains = BTreeMap::new();
    if let Some(wo) = &without_report {
        for (system, rep) in &with_report.systems {
            if let Some(base) = wo.systems.get(system) {
                gains.insert(system.clone(), paired_gains(rep, base));
            }
        }
    }
    ctx.count("instances", instances.len());
    ctx.count("systems", with_report.systems.len());
    ctx.fail("unmatched_generations", with_report.unmatched.len());
    let missing: usize = with_report.systems.values().map(|r| r.missing.len()).sum();
    ctx.fail("missing_generations", missing);
    let degenerate: usize = with_report.systems.values().map(|r| r.degenerate).sum();
    ctx.fail("degenerate", degenerate);
    let mut table = String::new();
    for (system, rep) in &with_report.systems {
        table.push_str(&format!("{system}\n{}", rep.to_table()));
    }
    table.push_str(&gains_table(&gains));
    print!("{table}");
    let eval = GenerationEval {
        with_refs: &with_report,
        without_refs: without_report.as_ref(),
        gains,
    };
    ctx.staging.add_json("generation_eval.json", &eval)?;
    ctx.staging.add("generation_eval.txt", table.into_bytes());
    Ok(())
}

fn density(ctx: &mut Context) -> Outcome {
    let docs = ctx.corpus()?;
    let profile = citation_density_profile(&docs, ctx.parser());
    ctx.count("words", profile.decile_words.iter().sum::<usize>());
    ctx.count("case_citations", profile.decile_citations.iter().sum::<usize>());
    ctx.staging.add_json("density.json", &profile)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub unit: String,
    pub count: usize,
    pub avg_words: f64,
}

fn stats_row(unit: &str, lengths: impl Iterator<Item = usize>) -> StatsRow {
    let (mut count, mut total) = (0usize, 0usize);
    for l in lengths {
        count += 1;
        total += l;
    }
    StatsRow {
        unit: unit.to_owned(),
        count,
        avg_words: if count == 0 { 0.0 } else { total as f64 / count as f64 },
    }
}

fn stats(ctx: &mut Context) -> Outcome {
    let docs = ctx.corpus()?;
    let passages = ctx.passages(&docs)?;
    let index = ctx.citation_index(&docs);
    let (queries, _) = filtered_queries(ctx, &docs, &index, ctx.cfg.query.window_words);
    let words = |s: &str| tokenize_words(s).len();
    let rows = vec![
        stats_row("doc", docs.iter().map(CaseDocument::word_count)),
        stats_row("passage", passages.iter().map(|p| p.word_end - p.word_start)),
        stats_row("query", queries.iter().map(|q| words(&q.masked_text))),
    ];
    let mut table = format!("{:<10}{:>10}{:>12}\n", "unit", "count", "avg_words");
    for r in &rows {
        table.push_str(&format!("{:<10}{:>10}{:>12.1}\n", r.unit, r.count, r.avg_words));
        ctx.count(&format!("{}s", r.unit), r.count);
    }
    print!("{table}");
    ctx.staging.add_json("stats.json", &rows)?;
    ctx.staging.add("stats.txt", table.into_bytes());
    Ok(())
}
