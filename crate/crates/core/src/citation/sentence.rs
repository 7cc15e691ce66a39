//! Locating the citation sentence around a case citation.
//!
//! The start is the nearest sentence starter before the citation (a party
//! caption, a signal such as `See`, `Id.`, `In re`) or the preceding sentence
//! terminal, whichever is closer. The end is the first terminal after the
//! citation: a sentence-final period, a semicolon, or a closing parenthesis
//! that ends a parenthetical before the prose resumes.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{CitationParser, ParsedText};

/// No sentence boundary for the citation inside its paragraph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryNotFound;

impl fmt::Display for BoundaryNotFound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("citation sentence boundary not found")
    }
}

impl std::error::Error for BoundaryNotFound {}

const ABBREVIATIONS: &[&str] = &[
    "v.", "vs.", "Corp.", "Inc.", "Co.", "Ltd.", "Cir.", "Supp.", "No.", "Nos.", "U.S.", "Am.",
    "Ins.", "Mfg.", "Bros.", "Dept.", "Dep't.", "Ass'n.", "Int'l.", "Nat'l.", "Gov't.", "Assoc.",
    "Cal.", "Ill.", "Mass.", "Pa.", "Tex.", "Fla.", "Ga.", "Md.", "Va.", "Wash.", "Wis.", "Mich.",
    "Minn.", "Mo.", "Conn.", "Ariz.", "Colo.", "Ky.", "La.", "Miss.", "Neb.", "Okla.", "Or.",
    "Tenn.", "Ind.", "Kan.", "Nev.", "Ala.", "Ark.", "Del.", "Mont.", "Vt.", "Wyo.", "Dist.",
    "Ct.", "App.", "Fed.", "Civ.", "Crim.", "Evid.", "Stat.", "Ann.", "Sec.", "Art.", "Ch.",
    "Cl.", "Pt.", "Reg.", "Jan.", "Feb.", "Mar.", "Apr.", "Jun.", "Jul.", "Aug.", "Sep.",
    "Sept.", "Oct.", "Nov.", "Dec.", "Mr.", "Mrs.", "Ms.", "Dr.", "St.", "Jr.", "Sr.", "e.g.",
    "i.e.", "cf.", "Cf.", "etc.", "al.", "cert.", "Ibid.", "pp.", "p.", "n.", "nn.", "ed.",
    "Rev.", "Prof.", "Hon.", "Gen.", "Sup.", "Univ.", "Admin.", "Ed.", "Cong.", "Sess.",
];

const CLOSING_QUOTES: &[char] = &['\u{201d}', '\u{2019}', '"', '\''];

fn is_abbreviation(token: &str) -> bool {
    let token = token.trim_start_matches(['(', '[', '\u{201c}', '\u{2018}', '"', '\'']);
    if ABBREVIATIONS.contains(&token) {
        return true;
    }
    // initials and dotted acronyms: "J.", "U.S.", "N.D."
    let segments: Vec<&str> = token.split('.').collect();
    segments.len() >= 2
        && segments.last() == Some(&"")
        && segments[..segments.len() - 1]
            .iter()
            .all(|s| s.chars().count() == 1 && s.chars().all(char::is_alphabetic))
}

fn paragraph_bounds(text: &str, pos: usize) -> (usize, usize) {
    let start = text[..pos].rfind('\n').map_or(0, |i| i + 1);
    let end = text[pos..].find('\n').map_or(text.len(), |i| pos + i);
    (start, end)
}

/// If the character at `pos` ends a sentence, the offset just past it and
/// any closing quotation marks.
fn terminal_end(text: &str, pos: usize, para_end: usize) -> Option<usize> {
    let ch = text[pos..].chars().next()?;
    if !matches!(ch, '.' | '?' | '!') {
        return None;
    }
    if ch == '.' {
        let token_start = text[..pos]
            .rfind(char::is_whitespace)
            .map_or(0, |i| i + text[i..].chars().next().map_or(1, char::len_utf8));
        if is_abbreviation(&text[token_start..=pos]) {
            return None;
        }
    }
    let mut end = pos + ch.len_utf8();
    while let Some(c) = text[end..para_end].chars().next() {
        if CLOSING_QUOTES.contains(&c) {
            end += c.len_utf8();
        } else {
            break;
        }
    }
    if end >= para_end {
        return Some(para_end);
    }
    let rest = &text[end..para_end];
    if !rest.starts_with(char::is_whitespace) {
        return None;
    }
    match rest.trim_start().chars().next() {
        None => Some(end),
        Some(c) if c.is_uppercase() || c.is_ascii_digit() => Some(end),
        Some('\u{201c}' | '\u{2018}' | '"' | '(' | '[') => Some(end),
        _ => None,
    }
}

fn opaque_containing(spans: &[(usize, usize)], pos: usize) -> Option<(usize, usize)> {
    let idx = spans.partition_point(|&(_, e)| e <= pos);
    spans.get(idx).copied().filter(|&(s, _)| s <= pos)
}

static STARTERS: OnceLock<Regex> = OnceLock::new();
static LOWER_SIGNAL: OnceLock<Regex> = OnceLock::new();
static VERSUS: OnceLock<Regex> = OnceLock::new();
static SIGNAL_BEFORE: OnceLock<Regex> = OnceLock::new();

fn starters() -> &'static Regex {
    STARTERS.get_or_init(|| {
        Regex::new(r"\b(?:See,\s+e\.g\.,|See\s+also\b|But\s+see\b|See\b|Cf\.|E\.g\.,|Accord\b|In\s+re\b|Id\.)")
            .unwrap()
    })
}

fn lower_signal() -> &'static Regex {
    LOWER_SIGNAL.get_or_init(|| Regex::new(r"[,;]\s+((?:see(?:\s+also)?|cf\.)\s)").unwrap())
}

fn versus() -> &'static Regex {
    VERSUS.get_or_init(|| Regex::new(r"\sv\.\s").unwrap())
}

fn signal_before() -> &'static Regex {
    SIGNAL_BEFORE
        .get_or_init(|| Regex::new(r"(?:See,\s+e\.g\.,|See\s+also|But\s+see|See|Cf\.|E\.g\.,|Accord)\s*$").unwrap())
}

const CAPTION_STOP: &[&str] = &[
    "In", "Under", "As", "See", "Cf.", "But", "And", "Accord", "Also", "Although", "Because",
    "Since", "While", "When", "Following", "Unlike", "Like", "Compare", "Thus", "Here", "Then",
];
const CAPTION_CONNECTORS: &[&str] = &["of", "the", "and", "for", "de", "du", "la", "ex", "rel.", "&"];

/// Start of the party caption whose `v.` sits at `v_pos`, if any.
fn caption_start(text: &str, lo: usize, v_pos: usize) -> Option<usize> {
    let mut start = None;
    let mut cursor = v_pos;
    loop {
        let segment = &text[lo..cursor];
        let trimmed = segment.trim_end();
        if trimmed.is_empty() {
            break;
        }
        let tok_start = lo + trimmed.rfind(char::is_whitespace).map_or(0, |i| i + 1);
        let token = &text[tok_start..lo + trimmed.len()];
        let bare = token.trim_end_matches(',');
        let accepted = if token.ends_with(',') || CAPTION_STOP.contains(&bare) {
            false
        } else if bare.ends_with('.') && !is_abbreviation(bare) {
            false
        } else {
            bare.starts_with(char::is_uppercase)
                || bare.starts_with(char::is_numeric)
                || CAPTION_CONNECTORS.contains(&bare)
        };
        if !accepted {
            break;
        }
        if !CAPTION_CONNECTORS.contains(&bare) {
            start = Some(tok_start);
        }
        cursor = tok_start;
    }
    start
}

/// Character span of the sentence containing citation `citation` (an index
/// into `parsed.citations`), widened to its whole parallel-citation group.
pub fn citation_sentence_bounds(
    text: &str,
    parsed: &ParsedText,
    citation: usize,
) -> Result<(usize, usize), BoundaryNotFound> {
    let group = parsed
        .group_of(citation)
        .map(|g| &parsed.groups[g])
        .ok_or(BoundaryNotFound)?;
    let (para_start, para_end) = paragraph_bounds(text, group.start);
    let opaque = parsed.opaque_spans();

    // backward: nearest terminal boundary
    let mut boundary = None;
    let mut depth = 0usize;
    let mut pos = group.start;
    while pos > para_start {
        let (idx, ch) = text[para_start..pos]
            .char_indices()
            .next_back()
            .map(|(i, c)| (para_start + i, c))
            .unwrap();
        if let Some((s, _)) = opaque_containing(&opaque, idx) {
            pos = s;
            continue;
        }
        pos = idx;
        match ch {
            ')' => depth += 1,
            '(' if depth == 0 => {
                boundary = Some(idx + 1);
                break;
            }
            '(' => depth -= 1,
            ';' if depth == 0 => {
                boundary = Some(idx + 1);
                break;
            }
            '.' | '?' | '!' if depth == 0 => {
                if let Some(end) = terminal_end(text, idx, para_end) {
                    if end <= group.start {
                        boundary = Some(end);
                        break;
                    }
                }
            }
            _ => {}
        }
    }

    // starters between the boundary and the citation
    let lo = boundary.unwrap_or(para_start);
    let window = &text[lo..group.start.max(lo)];
    let mut starter: Option<usize> = None;
    let mut consider = |p: usize| {
        if starter.is_none_or(|s| p > s) {
            starter = Some(p);
        }
    };
    if let Some(m) = starters().find_iter(&text[lo..para_end]).map(|m| lo + m.start()).take_while(|&s| s <= group.start).last() {
        consider(m);
    }
    if let Some(c) = lower_signal().captures_iter(window).last() {
        consider(lo + c.get(1).unwrap().start());
    }
    let mut from_caption = false;
    if let Some(v) = versus().find_iter(window).last() {
        if let Some(cs) = caption_start(text, lo, lo + v.start()) {
            if starter.is_none_or(|s| cs > s) {
                starter = Some(cs);
                from_caption = true;
            }
        }
    }
    if from_caption {
        let s = starter.unwrap();
        if let Some(sig) = signal_before().find(&text[lo..s]) {
            starter = Some(lo + sig.start());
        }
    }

    let start = match (boundary, starter) {
        (None, None) => return Err(BoundaryNotFound),
        (b, s) => b.max(s).unwrap(),
    };
    let start = start + (text[start..group.start].len() - text[start..group.start].trim_start().len());

    // forward: first terminal after the citation
    let mut depth = 0usize;
    let mut pos = group.end;
    while pos < para_end {
        if let Some((_, e)) = opaque_containing(&opaque, pos) {
            pos = e;
            continue;
        }
        let ch = text[pos..].chars().next().unwrap();
        let next = pos + ch.len_utf8();
        match ch {
            '(' => depth += 1,
            ')' if depth == 0 => return Ok((start, pos)),
            ')' => {
                depth -= 1;
                if depth == 0 {
                    let rest = text[next..para_end].trim_start();
                    if rest.starts_with(char::is_alphabetic) {
                        return Ok((start, next));
                    }
                }
            }
            ';' if depth == 0 => return Ok((start, next)),
            ',' if depth == 0 && text[..pos].trim_end().ends_with(')') => {
                if prose_resumes(&text[next..para_end]) {
                    return Ok((start, text[..pos].trim_end().len()));
                }
            }
            '.' | '?' | '!' if depth == 0 => {
                if let Some(end) = terminal_end(text, pos, para_end) {
                    return Ok((start, end));
                }
            }
            _ => {}
        }
        pos = next;
    }
    Err(BoundaryNotFound)
}

const HISTORY_WORDS: &[&str] = &[
    "cert.", "aff'd", "aff\u{2019}d", "rev'd", "rev\u{2019}d", "vacated", "modified", "overruled",
    "citing", "quoting", "see", "cf.", "amended", "superseded", "reh'g", "abrogated",
];

fn prose_resumes(rest: &str) -> bool {
    let word = rest.split_whitespace().next().unwrap_or_default();
    word.starts_with(char::is_lowercase) && !HISTORY_WORDS.iter().any(|h| word.starts_with(h))
}

/// A hand-labeled citation sentence. Offsets are byte offsets into `text`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub text: String,
    pub citation_start: usize,
    pub gold_start: usize,
    pub gold_end: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SentenceAccuracy {
    pub total: usize,
    pub correct: usize,
    pub failures: usize,
    pub accuracy: f64,
    pub failure_rate: f64,
}

/// Exact-match accuracy of citation sentence extraction over labeled samples.
/// A sample whose citation cannot be located counts as a failure.
pub fn sentence_accuracy(parser: &CitationParser, samples: &[LabeledSentence]) -> SentenceAccuracy {
    let mut report = SentenceAccuracy {
        total: samples.len(),
        ..Default::default()
    };
    for sample in samples {
        let parsed = parser.parse(&sample.text);
        let idx = parsed
            .citations
            .iter()
            .position(|c| c.start <= sample.citation_start && sample.citation_start < c.end);
        match idx.map(|i| citation_sentence_bounds(&sample.text, &parsed, i)) {
            Some(Ok(bounds)) if bounds == (sample.gold_start, sample.gold_end) => report.correct += 1,
            Some(Ok(_)) => {}
            _ => report.failures += 1,
        }
    }
    if report.total > 0 {
        report.accuracy = report.correct as f64 / report.total as f64;
        report.failure_rate = report.failures as f64 / report.total as f64;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citation::default_parser;

    fn bounds_for<'a>(text: &'a str, needle: &str) -> Result<&'a str, BoundaryNotFound> {
        let parsed = default_parser().parse(text);
        let at = text.find(needle).expect("needle present");
        let idx = parsed
            .citations
            .iter()
            .position(|c| c.start <= at && at < c.end)
            .expect("citation at needle");
        citation_sentence_bounds(text, &parsed, idx).map(|(s, e)| &text[s..e])
    }

    const CELOTEX_PASSAGE: &str = "The moving party has the responsibility of informing the Court of portions of the record or affidavits that demonstrate the absence of a triable issue. Celotex Corp. v. Catrett, 477 U.S. 317, 322, 106 S.Ct. 2548, 91 L.Ed.2d 265 (1986). The moving party may meet its burden of showing an absence of disputed material facts by demonstrating \u{201c}that there is an absence of evidence to support the non-moving party\u{2019}s case.\u{201d} Id. at 325, 106 S.Ct. 2548. Any doubt as to the existence of a genuine issue for trial is resolved against the moving party. Anderson v. Liberty Lobby, Inc., 477 U.S. 242, 255, 106 S.Ct. 2505, 91 L.Ed.2d 202 (1986); see also 1 F.3d 2.";

    #[test]
    fn celotex_sentence() {
        assert_eq!(
            bounds_for(CELOTEX_PASSAGE, "477 U.S. 317").unwrap(),
            "Celotex Corp. v. Catrett, 477 U.S. 317, 322, 106 S.Ct. 2548, 91 L.Ed.2d 265 (1986)."
        );
        // any member of the parallel group yields the same sentence
        assert_eq!(
            bounds_for(CELOTEX_PASSAGE, "91 L.Ed.2d 265").unwrap(),
            bounds_for(CELOTEX_PASSAGE, "477 U.S. 317").unwrap()
        );
    }

    #[test]
    fn id_short_form_sentence() {
        let text = "Id. at 325, 106 S.Ct. 2548.";
        assert_eq!(bounds_for(text, "Id.").unwrap(), text);
        assert_eq!(bounds_for(text, "106").unwrap(), text);
        assert_eq!(bounds_for(CELOTEX_PASSAGE, "Id. at").unwrap(), "Id. at 325, 106 S.Ct. 2548.");
    }

    #[test]
    fn semicolon_ends_string_cite() {
        assert_eq!(
            bounds_for(CELOTEX_PASSAGE, "477 U.S. 242").unwrap(),
            "Anderson v. Liberty Lobby, Inc., 477 U.S. 242, 255, 106 S.Ct. 2505, 91 L.Ed.2d 202 (1986);"
        );
        assert_eq!(bounds_for(CELOTEX_PASSAGE, "1 F.3d 2").unwrap(), "see also 1 F.3d 2.");
    }

    #[test]
    fn signal_before_caption() {
        let text = "Divers\u{2019} status as a corporate officer does not exempt him from liability. See Kayes v. Pacific Lumber Co., 51 F.3d 1449, 1459 (9th Cir.1995) (\u{201c}This court has held corporate officers to be liable.\u{201d}). Rather, he is liable.";
        assert_eq!(
            bounds_for(text, "51 F.3d").unwrap(),
            "See Kayes v. Pacific Lumber Co., 51 F.3d 1449, 1459 (9th Cir.1995) (\u{201c}This court has held corporate officers to be liable.\u{201d})."
        );
    }

    #[test]
    fn embedded_citation_clause() {
        let text = "The rule is old. As in Smith v. Jones, 12 F.3d 34 (1990), the court may act.";
        assert_eq!(bounds_for(text, "12 F.3d").unwrap(), "Smith v. Jones, 12 F.3d 34 (1990)");
    }

    #[test]
    fn bare_citation_after_sentence() {
        let text = "This is settled law. 477 U.S. 317, 322 (1986). More text follows.";
        assert_eq!(bounds_for(text, "477").unwrap(), "477 U.S. 317, 322 (1986).");
    }

    #[test]
    fn no_boundary_is_failure() {
        assert_eq!(
            bounds_for("the court relied on 12 F.3d 34 and kept going", "12 F.3d"),
            Err(BoundaryNotFound)
        );
        // terminal exists but nothing before the citation in its paragraph
        assert_eq!(bounds_for("relying on 12 F.3d 34.", "12 F.3d"), Err(BoundaryNotFound));
        // paragraph break stops the scan
        assert_eq!(
            bounds_for("First. See 12 F.3d 34 and\nMore. Text.", "12 F.3d"),
            Err(BoundaryNotFound)
        );
    }

    #[test]
    fn abbreviations() {
        assert!(is_abbreviation("U.S."));
        assert!(is_abbreviation("(Cir."));
        assert!(is_abbreviation("J."));
        assert!(!is_abbreviation("issue."));
        assert!(!is_abbreviation("Id."));
    }

    #[test]
    fn accuracy_report() {
        let text = "Held. Smith v. Jones, 1 F.3d 2 (1990). Next.";
        let gold_start = text.find("Smith").unwrap();
        let gold_end = text.find(" Next").unwrap();
        let citation_start = text.find("1 F.3d").unwrap();
        let samples = vec![
            LabeledSentence { text: text.into(), citation_start, gold_start, gold_end },
            LabeledSentence { text: text.into(), citation_start, gold_start: 0, gold_end },
            LabeledSentence { text: "see 1 F.3d 2 and".into(), citation_start: 4, gold_start: 0, gold_end: 3 },
        ];
        let acc = sentence_accuracy(default_parser(), &samples);
        assert_eq!((acc.total, acc.correct, acc.failures), (3, 1, 1));
        assert!((acc.accuracy - 1.0 / 3.0).abs() < 1e-12);
    }
}
