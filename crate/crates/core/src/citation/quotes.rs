use serde::{Deserialize, Serialize};

use super::{CitationKind, CitationSpan, ParsedText};

const OPEN: char = '\u{201c}';
const CLOSE: char = '\u{201d}';

/// Maximum distance in bytes between a quote and the citation it is paired with.
pub const PAIRING_WINDOW: usize = 300;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuoteSpan {
    /// Offset of the first quoted character (just past the opening mark).
    pub start: usize,
    /// Offset of the closing mark.
    pub end: usize,
    pub text: String,
    pub paired_citation: Option<CitationSpan>,
}

/// Balanced curly-quote pairs within a paragraph. An opener with no closer
/// before the next opener or paragraph break is skipped.
fn quote_ranges(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        match ch {
            OPEN => open = Some(i + OPEN.len_utf8()),
            CLOSE => {
                if let Some(s) = open.take() {
                    out.push((s, i));
                }
            }
            '\n' => open = None,
            _ => {}
        }
    }
    out
}

fn has_sentence_break(gap: &str) -> bool {
    if gap.contains('\n') {
        return true;
    }
    let bytes = gap.as_bytes();
    gap.char_indices().any(|(i, c)| {
        matches!(c, '.' | '?' | '!')
            && bytes.get(i + 1).is_some_and(|b| b.is_ascii_whitespace())
            && gap[i + 1..].trim_start().starts_with(char::is_uppercase)
            && !gap[..i].rsplit(char::is_whitespace).next().is_some_and(|tok| {
                let tok = format!("{tok}.");
                matches!(tok.as_str(), "v." | "Corp." | "Inc." | "Co." | "Am." | "Ins." | "Ltd.")
                    || tok.len() == 2
            })
    })
}

/// Extracts curly-quoted passages and pairs each with the nearest case or
/// short-form citation, preferring a following citation in the same sentence.
pub fn extract_direct_quotes(text: &str, parsed: &ParsedText) -> Vec<QuoteSpan> {
    let candidates: Vec<&CitationSpan> = parsed
        .citations
        .iter()
        .filter(|c| matches!(c.kind, CitationKind::Case | CitationKind::ShortForm))
        .collect();
    quote_ranges(text)
        .into_iter()
        .map(|(start, end)| {
            let after = end + CLOSE.len_utf8();
            let before = start - OPEN.len_utf8();
            let following = candidates
                .iter()
                .find(|c| c.start >= after)
                .filter(|c| c.start - after <= PAIRING_WINDOW && !text[after..c.start].contains('\n'));
            let preceding = candidates
                .iter()
                .rev()
                .find(|c| c.end <= before)
                .filter(|c| before - c.end <= PAIRING_WINDOW && !text[c.end..before].contains('\n'));
            let paired = match (following, preceding) {
                (Some(f), _) if !has_sentence_break(&text[after..f.start]) => Some(*f),
                (Some(f), Some(p)) => {
                    if f.start - after <= before - p.end {
                        Some(*f)
                    } else {
                        Some(*p)
                    }
                }
                (f, p) => f.or(p).copied(),
            };
            QuoteSpan {
                start,
                end,
                text: text[start..end].to_owned(),
                paired_citation: paired.cloned(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citation::default_parser;

    fn quotes(text: &str) -> Vec<QuoteSpan> {
        extract_direct_quotes(text, &default_parser().parse(text))
    }

    #[test]
    fn celotex_quote_pairs_with_id() {
        let text = "Celotex Corp. v. Catrett, 477 U.S. 317, 322 (1986). The moving party may meet its burden by demonstrating \u{201c}that there is an absence of evidence to support the non-moving party\u{2019}s case.\u{201d} Id. at 325, 106 S.Ct. 2548";
        let q = quotes(text);
        assert_eq!(q.len(), 1);
        assert_eq!(
            q[0].text,
            "that there is an absence of evidence to support the non-moving party\u{2019}s case."
        );
        let paired = q[0].paired_citation.as_ref().unwrap();
        assert_eq!(paired.raw, "Id. at 325");
        assert_eq!(paired.key.as_ref().unwrap().to_string(), "477 U.S. 317");
    }

    #[test]
    fn straight_quotes_ignored() {
        assert!(quotes("He said \"no\" 1 F.3d 2").is_empty());
    }

    #[test]
    fn nearest_following_citation() {
        let text = "\u{201c}Quoted words here.\u{201d} 10 F.3d 20, and later 30 F.3d 40.";
        let q = quotes(text);
        assert_eq!(q[0].paired_citation.as_ref().unwrap().key.as_ref().unwrap().to_string(), "10 F.3d 20");
    }

    #[test]
    fn two_following_citations_at_10_and_50() {
        let quote = "\u{201c}abc\u{201d}";
        let text = format!("{quote}{}1 F.3d 2{}3 F.3d 4", " ".repeat(10), " ".repeat(50 - 10 - 7));
        let q = quotes(&text);
        assert_eq!(q[0].paired_citation.as_ref().unwrap().raw, "1 F.3d 2");
    }

    #[test]
    fn preceding_citation_when_following_is_in_a_later_sentence() {
        let text = "See Kayes v. Pacific Lumber Co., 51 F.3d 1449, 1459 (9th Cir.1995) (\u{201c}This court has held officers liable.\u{201d}). Rather, he is liable. Later we cite 2 F.3d 3.";
        let q = quotes(text);
        assert_eq!(q[0].paired_citation.as_ref().unwrap().key.as_ref().unwrap().to_string(), "51 F.3d 1449");
    }

    #[test]
    fn unbalanced_opener_skipped() {
        let text = "\u{201c}dangling \u{201c}real quote\u{201d} and \u{201c}never closed";
        let q = quotes(text);
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].text, "real quote");
        assert!(q[0].paired_citation.is_none());
    }

    #[test]
    fn pairing_window_enforced() {
        let text = format!("\u{201c}abc\u{201d}{}1 F.3d 2", " x".repeat(200));
        assert!(quotes(&text)[0].paired_citation.is_none());
    }

    proptest::proptest! {
        #[test]
        fn quotes_never_contain_marks(s in "[ a-z\u{201c}\u{201d}\n.]{0,80}") {
            for q in quotes(&s) {
                proptest::prop_assert!(!q.text.contains(OPEN) && !q.text.contains(CLOSE));
                proptest::prop_assert_eq!(&s[q.start..q.end], q.text.as_str());
            }
        }
    }
}
