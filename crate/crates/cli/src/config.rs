//! Pipeline configuration: a TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use casebench::corpus::{DEFAULT_STRIDE, DEFAULT_WINDOW};
use casebench::genset::{GensetConfig, DEFAULT_SALIENT_K, DEFAULT_WORD_BUDGET};
use casebench::metrics::{Averaging, GenerationScoring};
use casebench::query::{default_sweep_lengths, DataView, QueryKind, DEFAULT_WINDOW_WORDS};
use casebench::retrieval::{Analyzer, Bm25Params, UnitKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    /// Reporter table JSON replacing the built-in one.
    pub reporters: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkSection {
    pub window: usize,
    pub stride: usize,
}

impl Default for ChunkSection {
    fn default() -> Self {
        ChunkSection {
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuerySection {
    pub window_words: usize,
    pub views: Vec<DataView>,
    pub kinds: Vec<QueryKind>,
    pub sweep_lengths: Vec<usize>,
}

impl Default for QuerySection {
    fn default() -> Self {
        QuerySection {
            window_words: DEFAULT_WINDOW_WORDS,
            views: DataView::ALL.to_vec(),
            kinds: vec![QueryKind::Direct, QueryKind::Indirect],
            sweep_lengths: default_sweep_lengths(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSection {
    pub unit: UnitKind,
    pub shards: usize,
    pub analyzer: Analyzer,
}

impl Default for IndexSection {
    fn default() -> Self {
        IndexSection {
            unit: UnitKind::Passage,
            shards: 4,
            analyzer: Analyzer::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub k: usize,
    /// Passages retrieved per query before MaxP aggregation.
    pub maxp_depth: usize,
    pub maxp: bool,
    pub tag: String,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            k: 1000,
            maxp_depth: 10_000,
            maxp: true,
            tag: "bm25".to_owned(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NgramSection {
    pub n: usize,
    pub k: usize,
}

impl Default for NgramSection {
    fn default() -> Self {
        NgramSection { n: 5, k: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GensetSection {
    pub seed: u64,
    pub salient_k: usize,
    pub word_budget: usize,
}

impl Default for GensetSection {
    fn default() -> Self {
        GensetSection {
            seed: 0,
            salient_k: DEFAULT_SALIENT_K,
            word_budget: DEFAULT_WORD_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub ks: Vec<usize>,
    pub ndcg_k: usize,
    pub include_references_in_substring_check: bool,
    pub averaging: Averaging,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            ks: vec![10, 100, 1000],
            ndcg_k: 10,
            include_references_in_substring_check: false,
            averaging: Averaging::Macro,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub chunk: ChunkSection,
    pub query: QuerySection,
    pub bm25: Bm25Params,
    pub index: IndexSection,
    pub search: SearchSection,
    pub ngram: NgramSection,
    pub genset: GensetSection,
    pub metrics: MetricsSection,
}

/// A rejected configuration, naming the key at fault.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.key.is_empty() {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config key `{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_owned(),
        message: message.into(),
    }
}

fn positive(key: &str, v: usize) -> Result<(), ConfigError> {
    if v == 0 {
        return Err(bad(key, "must be positive"));
    }
    Ok(())
}

fn positive_list(key: &str, vs: &[usize]) -> Result<(), ConfigError> {
    if vs.is_empty() {
        return Err(bad(key, "must not be empty"));
    }
    vs.iter().try_for_each(|&v| positive(key, v))
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_owned();
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field"))
                .unwrap_or_default()
                .to_owned();
            ConfigError { key, message: msg }
        })?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("chunk.window", self.chunk.window)?;
        positive("chunk.stride", self.chunk.stride)?;
        if self.chunk.stride > self.chunk.window {
            return Err(bad("chunk.stride", "must not exceed chunk.window"));
        }
        positive("query.window_words", self.query.window_words)?;
        if self.query.views.is_empty() {
            return Err(bad("query.views", "must not be empty"));
        }
        if self.query.kinds.is_empty() {
            return Err(bad("query.kinds", "must not be empty"));
        }
        positive_list("query.sweep_lengths", &self.query.sweep_lengths)?;
        if !(self.bm25.k1.is_finite() && self.bm25.k1 > 0.0) {
            return Err(bad("bm25.k1", "must be positive"));
        }
        if !(self.bm25.b > 0.0 && self.bm25.b <= 1.0) {
            return Err(bad("bm25.b", "must be in (0, 1]"));
        }
        positive("index.shards", self.index.shards)?;
        positive("search.k", self.search.k)?;
        positive("search.maxp_depth", self.search.maxp_depth)?;
        if self.search.tag.is_empty() || self.search.tag.contains(char::is_whitespace) {
            return Err(bad("search.tag", "must be a non-empty word"));
        }
        positive("ngram.n", self.ngram.n)?;
        positive("ngram.k", self.ngram.k)?;
        positive("genset.salient_k", self.genset.salient_k)?;
        positive("genset.word_budget", self.genset.word_budget)?;
        positive_list("metrics.ks", &self.metrics.ks)?;
        positive("metrics.ndcg_k", self.metrics.ndcg_k)?;
        Ok(())
    }

    pub fn genset_config(&self) -> GensetConfig {
        GensetConfig {
            seed: self.genset.seed,
            salient_k: self.genset.salient_k,
            word_budget: self.genset.word_budget,
            bm25: self.bm25,
        }
    }

    pub fn scoring(&self) -> GenerationScoring {
        GenerationScoring {
            include_references_in_substring_check: self.metrics.include_references_in_substring_check,
            averaging: self.metrics.averaging,
        }
    }

    /// The configuration without file locations. Artifacts depend on input
    /// content, not on where it lives, so this is what manifests record.
    pub fn parameters(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("paths");
        }
        v
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.parameters()).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let cfg = PipelineConfig::from_toml("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn sections_parse() {
        let cfg = PipelineConfig::from_toml(
            "[chunk]\nwindow = 100\nstride = 50\n[query]\nviews = [\"all-removed\"]\nkinds = [\"indirect\"]\n\
             [bm25]\nk1 = 0.9\nb = 0.4\n[index]\nunit = \"document\"\n[metrics]\naveraging = \"micro\"\n",
        )
        .unwrap();
        assert_eq!(cfg.chunk.window, 100);
        assert_eq!(cfg.query.views, [DataView::AllRemoved]);
        assert_eq!(cfg.query.kinds, [QueryKind::Indirect]);
        assert_eq!(cfg.bm25.k1, 0.9);
        assert_eq!(cfg.index.unit, UnitKind::Document);
        assert_eq!(cfg.metrics.averaging, Averaging::Micro);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = PipelineConfig::from_toml("[chunk]\nwindw = 3\n").unwrap_err();
        assert_eq!(err.key, "windw");
        assert!(err.to_string().contains("windw"));
        let err = PipelineConfig::from_toml("colour = 1\n").unwrap_err();
        assert_eq!(err.key, "colour");
    }

    #[test]
    fn non_positive_values_are_named() {
        for (text, key) in [
            ("[chunk]\nstride = 0\n", "chunk.stride"),
            ("[chunk]\nwindow = 10\nstride = 20\n", "chunk.stride"),
            ("[bm25]\nk1 = -1.0\n", "bm25.k1"),
            ("[bm25]\nb = 0.0\n", "bm25.b"),
            ("[metrics]\nks = [10, 0]\n", "metrics.ks"),
            ("[genset]\nword_budget = 0\n", "genset.word_budget"),
            ("[query]\nviews = []\n", "query.views"),
        ] {
            let err = PipelineConfig::from_toml(text).unwrap().validate().unwrap_err();
            assert_eq!(err.key, key, "{text}");
        }
    }

    #[test]
    fn negative_integers_fail_to_parse() {
        assert!(PipelineConfig::from_toml("[chunk]\nwindow = -5\n").is_err());
    }

    #[test]
    fn hash_ignores_paths() {
        let mut a = PipelineConfig::default();
        let b = a.clone();
        a.paths.out_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        a.genset.seed = 7;
        assert_ne!(a.hash(), b.hash());
    }
}
