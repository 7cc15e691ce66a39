//! Case and statute citation recognition.
//!
//! Full case citations have the shape `<volume> <reporter> <page>` with an
//! optional pincite and an optional court/year parenthetical, both absorbed
//! into the span. Short forms (`Id.`, `<volume> <reporter> at <page>`,
//! `<Name>, supra`) are recognized separately and resolved against earlier
//! citations where possible.

mod quotes;
mod reporters;
mod sentence;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use quotes::{extract_direct_quotes, QuoteSpan, PAIRING_WINDOW};
pub use reporters::ReporterTable;
pub use sentence::{
    citation_sentence_bounds, sentence_accuracy, BoundaryNotFound, LabeledSentence,
    SentenceAccuracy,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CitationKind {
    Case,
    Statute,
    ShortForm,
}

impl fmt::Display for CitationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CitationKind::Case => "case",
            CitationKind::Statute => "statute",
            CitationKind::ShortForm => "short-form",
        })
    }
}

/// Normalized identity of a reported case: `<volume> <reporter> <page>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CitationKey {
    pub volume: u32,
    pub reporter: String,
    pub page: u32,
}

impl CitationKey {
    pub fn new(volume: u32, reporter: impl Into<String>, page: u32) -> Self {
        CitationKey {
            volume,
            reporter: reporter.into(),
            page,
        }
    }
}

impl fmt::Display for CitationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.volume, self.reporter, self.page)
    }
}

/// Parses the canonical string form. Reporter spelling is taken verbatim.
impl FromStr for CitationKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidCitation(s.to_owned());
        let (volume, rest) = s.split_once(' ').ok_or_else(bad)?;
        let (reporter, page) = rest.rsplit_once(' ').ok_or_else(bad)?;
        let volume: u32 = volume.parse().map_err(|_| bad())?;
        let page: u32 = page.parse().map_err(|_| bad())?;
        let reporter = reporter.trim();
        if volume == 0 || page == 0 || reporter.is_empty() {
            return Err(bad());
        }
        Ok(CitationKey::new(volume, reporter, page))
    }
}

impl Serialize for CitationKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CitationKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationSpan {
    pub start: usize,
    pub end: usize,
    pub kind: CitationKind,
    pub raw: String,
    pub key: Option<CitationKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pincite: Option<String>,
}

/// Adjacent case or short-form citations joined only by commas, e.g. one
/// case cited through several reporters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CitationGroup {
    pub first: usize,
    pub last: usize,
    pub start: usize,
    pub end: usize,
    /// Distinct keys of the members in order of appearance.
    pub keys: Vec<CitationKey>,
}

impl CitationGroup {
    pub fn primary_key(&self) -> Option<&CitationKey> {
        self.keys.first()
    }

    pub fn members(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }
}

/// Every citation found in one text.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParsedText {
    /// Case and short-form citations ordered by start.
    pub citations: Vec<CitationSpan>,
    pub statutes: Vec<CitationSpan>,
    pub groups: Vec<CitationGroup>,
}

impl ParsedText {
    pub fn case_citations(&self) -> impl Iterator<Item = &CitationSpan> {
        self.citations.iter().filter(|c| c.kind == CitationKind::Case)
    }

    pub fn group_of(&self, citation: usize) -> Option<usize> {
        self.groups
            .iter()
            .position(|g| g.first <= citation && citation <= g.last)
    }

    /// Case and statute spans, ordered; periods inside them never end a sentence.
    pub(crate) fn opaque_spans(&self) -> Vec<(usize, usize)> {
        let mut spans: Vec<(usize, usize)> = self
            .citations
            .iter()
            .filter(|c| c.kind == CitationKind::Case)
            .chain(self.statutes.iter())
            .map(|c| (c.start, c.end))
            .collect();
        spans.sort_unstable();
        spans
    }
}

pub struct CitationParser {
    table: ReporterTable,
    full: Regex,
    pincite: Regex,
    next_is_reporter: Regex,
    parenthetical: Regex,
    short_at: Regex,
    anchored_full: Regex,
}

static STATUTE: OnceLock<Regex> = OnceLock::new();
static ID_FORM: OnceLock<Regex> = OnceLock::new();
static SUPRA: OnceLock<Regex> = OnceLock::new();

fn statute_regex() -> &'static Regex {
    STATUTE.get_or_init(|| {
        Regex::new(
            r"(?x)
            \b\d+\s+U\.\s?S\.\s?C\.(?:\s?A\.)?\s*§§?\s*\d+[\w.\-]*(?:\([0-9A-Za-z]+\))*
            |
            \bFed\.\s?R\.\s?(?:Civ\.\s?P|Crim\.\s?P|App\.\s?P|Bankr\.\s?P|Evid)\.\s*\d+(?:\.\d+)?(?:\([0-9A-Za-z]+\))*
            ",
        )
        .expect("statute pattern")
    })
}

fn id_regex() -> &'static Regex {
    ID_FORM.get_or_init(|| {
        Regex::new(r"\b[Ii]d\.(?:\s+at\s+\d+(?:\s*[-–]\s*\d+)?)?").expect("id pattern")
    })
}

fn supra_regex() -> &'static Regex {
    SUPRA.get_or_init(|| {
        Regex::new(r"\b[A-Z][A-Za-z'’.\-]*,?\s+supra\b").expect("supra pattern")
    })
}

static DEFAULT_PARSER: OnceLock<CitationParser> = OnceLock::new();

/// Parser over the bundled federal reporter table.
pub fn default_parser() -> &'static CitationParser {
    DEFAULT_PARSER.get_or_init(|| CitationParser::new(ReporterTable::default()))
}

impl CitationParser {
    pub fn new(table: ReporterTable) -> Self {
        let rep = table.pattern();
        let build = |p: String| Regex::new(&p).expect("generated citation pattern");
        CitationParser {
            full: build(format!(r"(\d{{1,4}})\s+({rep})\s+(\d{{1,5}})\b")),
            pincite: build(r"^,\s*(\d+(?:\s*[-–]\s*\d+)?)\b".to_owned()),
            next_is_reporter: build(format!(r"^\s+(?:{rep})\s+\d")),
            parenthetical: build(r"^\s*\(([^()\n]{0,60}\b\d{4})\)".to_owned()),
            short_at: build(format!(r"(\d{{1,4}})\s+({rep})\s+at\s+(\d+(?:\s*[-–]\s*\d+)?)")),
            anchored_full: build(format!(r"^(\d{{1,4}})\s+({rep})\s+(\d{{1,5}})\b")),
            table,
        }
    }

    pub fn table(&self) -> &ReporterTable {
        &self.table
    }

    fn key_from(&self, volume: &str, reporter: &str, page: &str) -> Option<CitationKey> {
        let volume: u32 = volume.parse().ok().filter(|&v| v > 0)?;
        let page: u32 = page.parse().ok().filter(|&p| p > 0)?;
        let reporter = self.table.canonicalize(reporter)?;
        Some(CitationKey::new(volume, reporter, page))
    }

    /// Full case citations, ordered and non-overlapping, excluding anything
    /// that overlaps a statute citation.
    pub fn find_case_citations(&self, text: &str) -> Vec<CitationSpan> {
        let statutes = self.find_statute_citations(text);
        self.case_citations_excluding(text, &statutes)
    }

    fn case_citations_excluding(&self, text: &str, statutes: &[CitationSpan]) -> Vec<CitationSpan> {
        let mut out: Vec<CitationSpan> = Vec::new();
        for caps in self.full.captures_iter(text) {
            let whole = caps.get(0).unwrap();
            if out.last().is_some_and(|prev| whole.start() < prev.end)
                || text[..whole.start()].ends_with(|c: char| c.is_ascii_digit())
            {
                continue;
            }
            if statutes
                .iter()
                .any(|s| s.start < whole.end() && whole.start() < s.end)
            {
                continue;
            }
            let Some(key) = self.key_from(&caps[1], &caps[2], &caps[3]) else {
                continue;
            };
            let mut end = whole.end();
            let mut pincite = None;
            while let Some(pin) = self.pincite.captures(&text[end..]) {
                let after = end + pin.get(0).unwrap().end();
                if self.next_is_reporter.is_match(&text[after..]) {
                    break;
                }
                if pincite.is_none() {
                    pincite = Some(pin[1].to_owned());
                }
                end = after;
            }
            if let Some(paren) = self.parenthetical.find(&text[end..]) {
                end += paren.end();
            }
            out.push(CitationSpan {
                start: whole.start(),
                end,
                kind: CitationKind::Case,
                raw: text[whole.start()..end].to_owned(),
                key: Some(key),
                pincite,
            });
        }
        out
    }

    pub fn find_statute_citations(&self, text: &str) -> Vec<CitationSpan> {
        statute_regex()
            .find_iter(text)
            .map(|m| CitationSpan {
                start: m.start(),
                end: m.end(),
                kind: CitationKind::Statute,
                raw: m.as_str().to_owned(),
                key: None,
                pincite: None,
            })
            .collect()
    }

    /// Unresolved short forms not overlapping any span in `taken`.
    fn find_short_forms(&self, text: &str, taken: &[(usize, usize)]) -> Vec<CitationSpan> {
        let overlaps = |s: usize, e: usize| taken.iter().any(|&(a, b)| a < e && s < b);
        let mut out = Vec::new();
        for m in id_regex().find_iter(text) {
            if !overlaps(m.start(), m.end()) {
                out.push(short_span(text, m.start(), m.end(), None));
            }
        }
        for caps in self.short_at.captures_iter(text) {
            let m = caps.get(0).unwrap();
            if overlaps(m.start(), m.end()) || text[..m.start()].ends_with(|c: char| c.is_ascii_digit()) {
                continue;
            }
            // key resolved later against earlier full citations
            let partial = self.key_from(&caps[1], &caps[2], "1");
            let mut span = short_span(text, m.start(), m.end(), partial);
            span.pincite = Some(caps[3].to_owned());
            out.push(span);
        }
        for m in supra_regex().find_iter(text) {
            if !overlaps(m.start(), m.end()) {
                out.push(short_span(text, m.start(), m.end(), None));
            }
        }
        out.sort_by_key(|s| s.start);
        let mut kept: Vec<CitationSpan> = Vec::new();
        for s in out {
            if kept.last().is_none_or(|prev| prev.end <= s.start) {
                kept.push(s);
            }
        }
        kept
    }

    /// Finds all citations in `text`, groups parallel citations and resolves
    /// short forms.
    ///
    /// `Id.` takes the primary key of the preceding group in the same
    /// paragraph; `<vol> <reporter> at <page>` takes the key of the latest
    /// earlier full citation with the same volume and reporter. `supra`
    /// forms stay unresolved.
    pub fn parse(&self, text: &str) -> ParsedText {
        let statutes = self.find_statute_citations(text);
        let cases = self.case_citations_excluding(text, &statutes);
        let taken: Vec<(usize, usize)> = cases
            .iter()
            .chain(statutes.iter())
            .map(|c| (c.start, c.end))
            .collect();
        let shorts = self.find_short_forms(text, &taken);

        let mut citations: Vec<CitationSpan> = cases.into_iter().chain(shorts).collect();
        citations.sort_by(|a, b| a.start.cmp(&b.start).then(Ordering::Equal));

        let mut groups = Vec::new();
        let mut i = 0;
        while i < citations.len() {
            let mut j = i;
            while j + 1 < citations.len() && joins_parallel(&text[citations[j].end..citations[j + 1].start]) {
                j += 1;
            }
            groups.push((i, j));
            i = j + 1;
        }

        let mut resolved_groups = Vec::with_capacity(groups.len());
        let mut previous_primary: Option<(CitationKey, usize)> = None;
        for (first, last) in groups {
            let group_start = citations[first].start;
            if let Some((_, prev_end)) = &previous_primary {
                if text[*prev_end..group_start].contains('\n') {
                    previous_primary = None;
                }
            }
            for idx in first..=last {
                if citations[idx].kind != CitationKind::ShortForm {
                    continue;
                }
                let resolved = if is_id_form(&citations[idx].raw) {
                    previous_primary.as_ref().map(|(k, _)| k.clone())
                } else if let Some(partial) = citations[idx].key.take() {
                    citations[..first]
                        .iter()
                        .rev()
                        .filter(|c| c.kind == CitationKind::Case)
                        .filter_map(|c| c.key.as_ref())
                        .find(|k| k.volume == partial.volume && k.reporter == partial.reporter)
                        .cloned()
                } else {
                    None
                };
                citations[idx].key = resolved;
            }
            let mut keys: Vec<CitationKey> = Vec::new();
            for c in &citations[first..=last] {
                if let Some(k) = &c.key {
                    if !keys.contains(k) {
                        keys.push(k.clone());
                    }
                }
            }
            let end = citations[last].end;
            if let Some(k) = keys.first() {
                previous_primary = Some((k.clone(), end));
            }
            resolved_groups.push(CitationGroup {
                first,
                last,
                start: group_start,
                end,
                keys,
            });
        }

        ParsedText {
            citations,
            statutes,
            groups: resolved_groups,
        }
    }

    /// Canonical key of a case citation; pincites and parentheticals are
    /// dropped and a stray leading non-digit prefix is ignored.
    pub fn normalize_citation(&self, span: &CitationSpan) -> Result<CitationKey> {
        match span.kind {
            CitationKind::Case => self.normalize_raw(&span.raw),
            CitationKind::ShortForm => span
                .key
                .clone()
                .ok_or_else(|| Error::InvalidCitation(span.raw.clone())),
            CitationKind::Statute => Err(Error::InvalidCitation(span.raw.clone())),
        }
    }

    /// The `volume reporter page` part of a raw citation as written.
    pub fn core_surface<'a>(&self, raw: &'a str) -> Option<&'a str> {
        let trimmed = raw.trim_start_matches(|c: char| !c.is_ascii_digit());
        self.anchored_full.find(trimmed).map(|m| &trimmed[..m.end()])
    }

    pub fn normalize_raw(&self, raw: &str) -> Result<CitationKey> {
        let trimmed = raw.trim_start_matches(|c: char| !c.is_ascii_digit());
        self.anchored_full
            .captures(trimmed)
            .and_then(|caps| self.key_from(&caps[1], &caps[2], &caps[3]))
            .ok_or_else(|| Error::InvalidCitation(raw.to_owned()))
    }
}

fn short_span(text: &str, start: usize, end: usize, key: Option<CitationKey>) -> CitationSpan {
    CitationSpan {
        start,
        end,
        kind: CitationKind::ShortForm,
        raw: text[start..end].to_owned(),
        key,
        pincite: None,
    }
}

fn is_id_form(raw: &str) -> bool {
    raw.starts_with("Id.") || raw.starts_with("id.")
}

fn joins_parallel(between: &str) -> bool {
    let t = between.trim();
    t == "," || t.is_empty() && !between.contains('\n')
}
