//! The `casebench` command line: turns a case-law corpus into retrieval
//! queries and generation instances, runs lexical retrieval, and scores runs
//! and generations.
//!
//! Every subcommand stages its outputs in memory and writes them, with a
//! `<command>.manifest.json`, only once it has succeeded.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::Failure;

#[derive(Debug, Parser)]
#[command(name = "casebench", version, about = "Case-law corpus to benchmark pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML configuration file. Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores). Never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for generation-set sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Corpus JSONL.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Use the bundled synthetic corpus.
    #[arg(long, global = true, conflicts_with = "corpus")]
    pub mini_corpus: bool,
    /// Reporter table JSON.
    #[arg(long, global = true)]
    pub reporters: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuoteMode {
    Exact,
    Ngram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitArg {
    Passage,
    Document,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize raw case records into documents.jsonl.
    Ingest {
        /// Record file (defaults to the configured corpus).
        input: Option<PathBuf>,
        /// Input lines are Caselaw Access Project case objects.
        #[arg(long)]
        cap: bool,
    },
    /// Split documents into overlapping word windows.
    Chunk {
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Dump every citation with its kind and normalized key.
    ParseCitations,
    /// Build masked queries and relevance judgments.
    BuildQueries {
        /// single-removed, all-removed (comma separated).
        #[arg(long, value_delimiter = ',')]
        view: Vec<String>,
        /// direct, indirect (comma separated).
        #[arg(long, value_delimiter = ',')]
        kind: Vec<String>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Build the same queries at several window lengths.
    SweepLengths {
        #[arg(long, value_delimiter = ',')]
        lengths: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        view: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        kind: Vec<String>,
    },
    /// Sample generation instances and render prompts.
    BuildGenset {
        #[arg(long)]
        salient_k: Option<usize>,
        #[arg(long)]
        word_budget: Option<usize>,
    },
    /// Build a BM25 index over passages or documents.
    Index {
        #[arg(long, value_enum)]
        unit: Option<UnitArg>,
        #[arg(long)]
        shards: Option<usize>,
    },
    /// Run BM25 for every query in a queries file.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        /// Aggregate passage scores to documents by their maximum.
        #[arg(long, overrides_with = "no_maxp")]
        maxp: bool,
        #[arg(long)]
        no_maxp: bool,
        #[arg(long)]
        tag: Option<String>,
        /// Run file name inside the output directory.
        #[arg(long, default_value = "run.trec")]
        output: String,
    },
    /// Retrieve cited cases from the direct quotes attributed to them.
    SearchQuotes {
        #[arg(long, value_enum, default_value = "ngram")]
        mode: QuoteMode,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Recall@k and nDCG for a TREC run.
    EvalRetrieval {
        run: PathBuf,
        qrels: PathBuf,
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long)]
        ndcg_k: Option<usize>,
    },
    /// ROUGE and citation metrics for generated paragraphs.
    EvalGeneration {
        #[arg(long)]
        genset: PathBuf,
        /// Generations made with reference texts in the prompt.
        #[arg(long)]
        generations: PathBuf,
        /// Generations of the same systems without reference texts.
        #[arg(long)]
        without_refs: Option<PathBuf>,
        /// Count citations found in reference texts as grounded.
        #[arg(long)]
        include_references: bool,
        #[arg(long)]
        micro: bool,
    },
    /// Case citations per 100 words by positional decile.
    Density,
    /// Document, passage and query counts with average lengths.
    Stats,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Chunk { .. } => "chunk",
            Command::ParseCitations => "parse-citations",
            Command::BuildQueries { .. } => "build-queries",
            Command::SweepLengths { .. } => "sweep-lengths",
            Command::BuildGenset { .. } => "build-genset",
            Command::Index { .. } => "index",
            Command::Search { .. } => "search",
            Command::SearchQuotes { .. } => "search-quotes",
            Command::EvalRetrieval { .. } => "eval-retrieval",
            Command::EvalGeneration { .. } => "eval-generation",
            Command::Density => "density",
            Command::Stats => "stats",
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status: 0 on success, 1 for usage or configuration errors,
/// 2 for data errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
