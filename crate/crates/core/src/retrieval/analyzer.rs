use serde::{Deserialize, Serialize};

/// Text analysis for the inverted index: lowercase, split on anything that
/// is not alphanumeric, keep internal periods of citation-like tokens
/// (`u.s`, `f.3d`, `fed.r.civ.p`). No stemming or stopwords.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analyzer {
    pub lowercase: bool,
    pub keep_citation_periods: bool,
}

impl Default for Analyzer {
    fn default() -> Self {
        Analyzer {
            lowercase: true,
            keep_citation_periods: true,
        }
    }
}

/// Longest dot-separated segment still treated as part of an abbreviation.
const MAX_SEGMENT: usize = 4;

impl Analyzer {
    pub fn tokens(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each_token(text, |t| out.push(t.to_owned()));
        out
    }

    pub fn for_each_token<F: FnMut(&str)>(&self, text: &str, mut f: F) {
        let mut current = String::new();
        let flush = |piece: &mut String, f: &mut F| {
            if piece.is_empty() {
                return;
            }
            let trimmed = piece.trim_matches('.');
            if !trimmed.is_empty() {
                let segments = trimmed.split('.');
                let citation_like = self.keep_citation_periods
                    && trimmed.contains('.')
                    && trimmed
                        .split('.')
                        .all(|s| !s.is_empty() && s.chars().count() <= MAX_SEGMENT);
                if citation_like || !trimmed.contains('.') {
                    f(trimmed);
                } else {
                    for s in segments.filter(|s| !s.is_empty()) {
                        f(s);
                    }
                }
            }
            piece.clear();
        };
        for ch in text.chars() {
            if ch.is_alphanumeric() || ch == '.' {
                if self.lowercase {
                    current.extend(ch.to_lowercase());
                } else {
                    current.push(ch);
                }
            } else {
                flush(&mut current, &mut f);
            }
        }
        flush(&mut current, &mut f);
    }

    pub(crate) fn flags(&self) -> u8 {
        u8::from(self.lowercase) | (u8::from(self.keep_citation_periods) << 1)
    }

    pub(crate) fn from_flags(flags: u8) -> Option<Self> {
        (flags & !0b11 == 0).then_some(Analyzer {
            lowercase: flags & 1 != 0,
            keep_citation_periods: flags & 2 != 0,
        })
    }
}

/// Case-folded words with everything but letters and digits removed; the
/// token unit for n-gram matching and ROUGE.
pub fn plain_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_citation_periods() {
        let a = Analyzer::default();
        assert_eq!(
            a.tokens("Celotex Corp. v. Catrett, 477 U.S. 317 (Fed.R.Civ.P. 56(c))."),
            ["celotex", "corp", "v", "catrett", "477", "u.s", "317", "fed.r.civ.p", "56", "c"]
        );
        assert_eq!(a.tokens("end.Beginning"), ["end", "beginning"]);
        assert_eq!(a.tokens("party\u{2019}s F.3d"), ["party", "s", "f.3d"]);
    }

    #[test]
    fn configurable() {
        let a = Analyzer {
            lowercase: false,
            keep_citation_periods: false,
        };
        assert_eq!(a.tokens("U.S. Court"), ["U", "S", "Court"]);
        assert_eq!(Analyzer::from_flags(a.flags()), Some(a));
        assert_eq!(Analyzer::from_flags(9), None);
    }

    #[test]
    fn plain_words_strip_punctuation() {
        assert_eq!(plain_words("A [Wage] Act, \u{201c}clearly\u{201d} -- x"), ["a", "wage", "act", "clearly", "x"]);
    }
}
