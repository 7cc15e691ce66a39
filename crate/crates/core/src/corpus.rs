//! Case records, normalized documents and passage chunking.
//!
//! Input records are JSON lines of the form
//! `{"id", "name", "cite", "opinions": [{"type", "text"}]}`. Opinions are
//! concatenated in record order. Inside an opinion a single newline is a line
//! wrap and collapses to a space, while a blank line marks a paragraph break.
//! The normalized document text separates paragraphs with exactly one `\n`.
//!
//! All offsets in this crate are UTF-8 byte offsets into the document text.

use std::collections::HashSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 350;
pub const DEFAULT_STRIDE: usize = 175;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawOpinion {
    #[serde(rename = "type", default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub cite: Option<String>,
    #[serde(default)]
    pub opinions: Vec<RawOpinion>,
}

impl RawRecord {
    /// Maps one case object from a Caselaw Access Project bulk export onto the
    /// record shape. CAP separates paragraphs with a single newline, so each
    /// newline becomes a paragraph break here.
    pub fn from_cap(case: &Value) -> Option<RawRecord> {
        let id = match case.get("id")? {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return None,
        };
        let name = case
            .get("name_abbreviation")
            .or_else(|| case.get("name"))
            .and_then(Value::as_str)
            .map(str::to_owned);
        let citations = case.get("citations").and_then(Value::as_array);
        let cite = citations.and_then(|cites| {
            cites
                .iter()
                .find(|c| c.get("type").and_then(Value::as_str) == Some("official"))
                .or_else(|| cites.first())
                .and_then(|c| c.get("cite"))
                .and_then(Value::as_str)
                .map(str::to_owned)
        });
        let body = case.get("casebody")?;
        let body = body.get("data").unwrap_or(body);
        let opinions = body
            .get("opinions")
            .and_then(Value::as_array)
            .map(|ops| {
                ops.iter()
                    .map(|op| RawOpinion {
                        kind: op.get("type").and_then(Value::as_str).map(str::to_owned),
                        text: op
                            .get("text")
                            .and_then(Value::as_str)
                            .map(|t| t.replace('\n', "\n\n")),
                    })
                    .collect()
            })
            .unwrap_or_default();
        Some(RawRecord {
            id: Some(id),
            name,
            cite,
            opinions,
        })
    }
}

/// A character range of the document text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WordSpan {
    pub start: usize,
    pub end: usize,
}

impl WordSpan {
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseDocument {
    pub doc_id: String,
    pub title: String,
    pub reporter_cite: String,
    pub text: String,
    pub paragraphs: Vec<(usize, usize)>,
}

impl CaseDocument {
    pub fn paragraph_count(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn paragraph(&self, index: usize) -> &str {
        let (start, end) = self.paragraphs[index];
        &self.text[start..end]
    }

    /// Index of the paragraph containing byte offset `pos`.
    pub fn paragraph_at(&self, pos: usize) -> Option<usize> {
        let idx = self.paragraphs.partition_point(|&(_, end)| end <= pos);
        match self.paragraphs.get(idx) {
            Some(&(start, _)) if start <= pos => Some(idx),
            _ => None,
        }
    }

    pub fn word_count(&self) -> usize {
        tokenize_words(&self.text).len()
    }

    /// Record form that `normalize_record` maps back onto this document.
    pub fn to_record(&self) -> RawRecord {
        let text = self
            .paragraphs
            .iter()
            .map(|&(s, e)| &self.text[s..e])
            .collect::<Vec<_>>()
            .join("\n\n");
        RawRecord {
            id: Some(self.doc_id.clone()),
            name: Some(self.title.clone()),
            cite: Some(self.reporter_cite.clone()),
            opinions: vec![RawOpinion {
                kind: Some("combined".to_owned()),
                text: Some(text),
            }],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub doc_id: String,
    pub word_start: usize,
    pub word_end: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based input line, when the record came from a stream.
    pub line: Option<usize>,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadedCorpus {
    pub documents: Vec<CaseDocument>,
    pub rejected: Vec<Rejection>,
}

/// Maximal runs of non-whitespace characters.
pub fn tokenize_words(text: &str) -> Vec<WordSpan> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        match (ch.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push(WordSpan { start: s, end: i });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(WordSpan {
            start: s,
            end: text.len(),
        });
    }
    spans
}

fn split_paragraphs(opinion: &str) -> Vec<String> {
    let mut paragraphs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in opinion.split('\n') {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paragraphs.push(collapse_whitespace(&current.join(" ")));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        paragraphs.push(collapse_whitespace(&current.join(" ")));
    }
    paragraphs.retain(|p| !p.is_empty());
    paragraphs
}

pub(crate) fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalizes one record into a document.
pub fn normalize_record(record: &RawRecord) -> std::result::Result<CaseDocument, String> {
    let doc_id = match record.id.as_deref().map(str::trim) {
        Some(id) if !id.is_empty() => id.to_owned(),
        _ => return Err("missing id".to_owned()),
    };
    let paragraphs: Vec<String> = record
        .opinions
        .iter()
        .filter_map(|op| op.text.as_deref())
        .flat_map(split_paragraphs)
        .collect();
    if paragraphs.is_empty() {
        return Err("no opinion text".to_owned());
    }
    let mut text = String::new();
    let mut spans = Vec::with_capacity(paragraphs.len());
    for (i, p) in paragraphs.iter().enumerate() {
        if i > 0 {
            text.push('\n');
        }
        let start = text.len();
        text.push_str(p);
        spans.push((start, text.len()));
    }
    Ok(CaseDocument {
        doc_id,
        title: collapse_whitespace(record.name.as_deref().unwrap_or_default()),
        reporter_cite: collapse_whitespace(record.cite.as_deref().unwrap_or_default()),
        text,
        paragraphs: spans,
    })
}

/// Normalizes a sequence of records, rejecting bad or duplicate ones.
pub fn load_records<I>(records: I) -> LoadedCorpus
where
    I: IntoIterator<Item = (Option<usize>, RawRecord)>,
{
    let mut seen = HashSet::new();
    let mut out = LoadedCorpus::default();
    for (line, record) in records {
        match normalize_record(&record) {
            Ok(doc) if !seen.insert(doc.doc_id.clone()) => out.rejected.push(Rejection {
                line,
                id: Some(doc.doc_id),
                reason: "duplicate id".to_owned(),
            }),
            Ok(doc) => out.documents.push(doc),
            Err(reason) => out.rejected.push(Rejection {
                line,
                id: record.id.clone(),
                reason,
            }),
        }
    }
    out
}

/// The bundled synthetic corpus, as JSONL records.
pub const MINI_CORPUS: &str = include_str!("../data/mini_corpus.jsonl");

pub fn mini_corpus() -> LoadedCorpus {
    load_corpus(MINI_CORPUS.as_bytes()).expect("reading from memory")
}

/// Reads a corpus JSONL stream. Malformed lines are rejected and the stream
/// continues; only I/O failures abort.
pub fn load_corpus<R: BufRead>(reader: R) -> Result<LoadedCorpus> {
    let mut records = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawRecord>(&line) {
            Ok(rec) => records.push((Some(i + 1), rec)),
            Err(e) => bad.push(Rejection {
                line: Some(i + 1),
                id: None,
                reason: format!("malformed record: {e}"),
            }),
        }
    }
    let mut loaded = load_records(records);
    loaded.rejected.extend(bad);
    loaded.rejected.sort_by_key(|r| r.line);
    Ok(loaded)
}

/// Word windows over a document. Chunk `i` covers words
/// `[i*stride, min(i*stride + window, total))`; a chunk adding no words beyond
/// its predecessor is dropped.
pub fn chunk_document(doc: &CaseDocument, window: usize, stride: usize) -> Result<Vec<Passage>> {
    let words = tokenize_words(&doc.text);
    let ranges = chunk_ranges(words.len(), window, stride)?;
    Ok(ranges
        .into_iter()
        .enumerate()
        .map(|(i, (ws, we))| Passage {
            passage_id: format!("{}#{}", doc.doc_id, i),
            doc_id: doc.doc_id.clone(),
            word_start: ws,
            word_end: we,
            text: words[ws..we]
                .iter()
                .map(|w| w.slice(&doc.text))
                .collect::<Vec<_>>()
                .join(" "),
        })
        .collect())
}

/// Word ranges produced by [`chunk_document`] for a document of `total` words.
pub fn chunk_ranges(total: usize, window: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    if stride == 0 || window < stride {
        return Err(Error::InvalidInput(format!(
            "chunking requires window >= stride >= 1 (window {window}, stride {stride})"
        )));
    }
    let mut ranges = Vec::new();
    let mut start = 0;
    while start < total {
        let end = (start + window).min(total);
        ranges.push((start, end));
        if end == total {
            break;
        }
        start += stride;
    }
    Ok(ranges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, opinions: &[&str]) -> RawRecord {
        RawRecord {
            id: Some(id.to_owned()),
            name: Some("A v. B".to_owned()),
            cite: Some("1 F.3d 1".to_owned()),
            opinions: opinions
                .iter()
                .map(|t| RawOpinion {
                    kind: Some("majority".to_owned()),
                    text: Some((*t).to_owned()),
                })
                .collect(),
        }
    }

    fn doc_with_words(n: usize) -> CaseDocument {
        let text = (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        CaseDocument {
            doc_id: "d".into(),
            title: String::new(),
            reporter_cite: String::new(),
            paragraphs: vec![(0, text.len())],
            text,
        }
    }

    #[test]
    fn opinions_concatenate_with_line_wraps_collapsed() {
        let doc = normalize_record(&record("1", &["A.\nB.", "C."])).unwrap();
        assert_eq!(doc.text, "A. B.\nC.");
        assert_eq!(doc.paragraphs, vec![(0, 5), (6, 8)]);
    }

    #[test]
    fn blank_lines_split_paragraphs() {
        let doc = normalize_record(&record("1", &["One\n\n  \nTwo  three\nfour", "Five"])).unwrap();
        assert_eq!(doc.text, "One\nTwo three four\nFive");
        assert_eq!(doc.paragraph_count(), 3);
        assert_eq!(doc.paragraph(1), "Two three four");
        assert_eq!(doc.paragraph_at(5), Some(1));
        assert_eq!(doc.paragraph_at(3), None);
    }

    #[test]
    fn rejects_missing_id_and_empty_opinions() {
        let mut no_id = record("x", &["text"]);
        no_id.id = None;
        let loaded = load_records(vec![
            (Some(1), no_id),
            (Some(2), record("2", &[])),
            (Some(3), record("3", &["  \n "])),
            (Some(4), record("4", &["ok"])),
            (Some(5), record("4", &["dup"])),
        ]);
        assert_eq!(loaded.documents.len(), 1);
        let reasons: Vec<_> = loaded.rejected.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(
            reasons,
            ["missing id", "no opinion text", "no opinion text", "duplicate id"]
        );
    }

    #[test]
    fn malformed_lines_do_not_stop_the_stream() {
        let input = "{\"id\":\"a\",\"opinions\":[{\"text\":\"x\"}]}\nnot json\n\n{\"id\":\"b\",\"opinions\":[{\"text\":\"y\"}]}\n";
        let loaded = load_corpus(input.as_bytes()).unwrap();
        assert_eq!(loaded.documents.len(), 2);
        assert_eq!(loaded.rejected.len(), 1);
        assert_eq!(loaded.rejected[0].line, Some(2));
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize_words("a b  c").len(), 3);
        let text = "Fed.R.Civ.P. 56(c)";
        let spans = tokenize_words(text);
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[1].slice(text), "56(c)");
        assert!(tokenize_words("").is_empty());
        assert!(tokenize_words(" \n\t").is_empty());
    }

    #[test]
    fn chunk_examples() {
        let one = chunk_document(&doc_with_words(350), 350, 175).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!((one[0].word_start, one[0].word_end), (0, 350));

        let two = chunk_document(&doc_with_words(400), 350, 175).unwrap();
        let ranges: Vec<_> = two.iter().map(|p| (p.word_start, p.word_end)).collect();
        assert_eq!(ranges, [(0, 350), (175, 400)]);
        assert_eq!(two[1].passage_id, "d#1");
        assert!(two[1].text.starts_with("w175 "));

        let short = chunk_document(&doc_with_words(3), 350, 175).unwrap();
        assert_eq!(short[0].text, "w0 w1 w2");
    }

    #[test]
    fn chunk_rejects_bad_parameters() {
        assert!(chunk_ranges(10, 5, 0).is_err());
        assert!(chunk_ranges(10, 5, 6).is_err());
    }

    #[test]
    fn record_round_trip_is_stable() {
        let doc = normalize_record(&record("1", &["A.\nB.\n\nC  d.", "E."])).unwrap();
        let again = normalize_record(&doc.to_record()).unwrap();
        assert_eq!(doc, again);
    }

    #[test]
    fn cap_adapter_maps_newlines_to_paragraphs() {
        let case: Value = serde_json::json!({
            "id": 42,
            "name_abbreviation": "A v. B",
            "citations": [{"cite": "2 F.3d 9", "type": "parallel"}, {"cite": "1 U.S. 1", "type": "official"}],
            "casebody": {"data": {"opinions": [{"type": "majority", "text": "One.\nTwo."}]}}
        });
        let rec = RawRecord::from_cap(&case).unwrap();
        assert_eq!(rec.cite.as_deref(), Some("1 U.S. 1"));
        let doc = normalize_record(&rec).unwrap();
        assert_eq!(doc.doc_id, "42");
        assert_eq!(doc.paragraph_count(), 2);
    }
}
