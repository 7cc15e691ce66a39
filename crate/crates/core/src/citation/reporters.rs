use std::collections::BTreeMap;

use crate::error::{Error, Result};

const DEFAULT_TABLE: &str = include_str!("../../data/reporters.json");

/// Surface reporter variants mapped to canonical abbreviations.
///
/// Variants are compared with all whitespace removed, so `"F. 3d"` and
/// `"F.3d"` are the same entry. Matching in text allows one optional space
/// after every period of a variant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReporterTable {
    compact: BTreeMap<String, String>,
}

fn compact(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

impl ReporterTable {
    pub fn from_json(json: &str) -> Result<Self> {
        let raw: BTreeMap<String, String> =
            serde_json::from_str(json).map_err(|e| Error::ReporterTable(e.to_string()))?;
        Self::from_pairs(raw)
    }

    pub fn from_pairs<I, S, T>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let mut table = BTreeMap::new();
        for (surface, canonical) in pairs {
            let key = compact(surface.as_ref());
            let canonical = canonical.as_ref().trim().to_owned();
            if key.is_empty() || canonical.is_empty() {
                return Err(Error::ReporterTable("empty reporter entry".to_owned()));
            }
            if key.starts_with(|c: char| c.is_ascii_digit()) {
                return Err(Error::ReporterTable(format!("reporter `{key}` starts with a digit")));
            }
            match table.get(&key) {
                Some(existing) if existing != &canonical => {
                    return Err(Error::ReporterTable(format!(
                        "`{}` maps to both `{existing}` and `{canonical}`",
                        surface.as_ref()
                    )))
                }
                _ => {
                    table.insert(key, canonical);
                }
            }
        }
        // canonical forms must be recognizable themselves
        let canon: Vec<String> = table.values().cloned().collect();
        for c in canon {
            table.entry(compact(&c)).or_insert(c);
        }
        if table.is_empty() {
            return Err(Error::ReporterTable("no reporters".to_owned()));
        }
        Ok(ReporterTable { compact: table })
    }

    pub fn canonicalize(&self, surface: &str) -> Option<&str> {
        self.compact.get(&compact(surface)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.compact.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compact.is_empty()
    }

    /// Regex alternation matching every variant, longest first.
    pub(crate) fn pattern(&self) -> String {
        let mut variants: Vec<&String> = self.compact.keys().collect();
        variants.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        let alts: Vec<String> = variants
            .into_iter()
            .map(|v| {
                let mut out = String::new();
                let chars: Vec<char> = v.chars().collect();
                for (i, ch) in chars.iter().enumerate() {
                    out.push_str(&regex::escape(&ch.to_string()));
                    if *ch == '.' && i + 1 < chars.len() {
                        out.push_str(r"\s?");
                    }
                }
                out
            })
            .collect();
        format!("(?:{})", alts.join("|"))
    }
}

impl Default for ReporterTable {
    fn default() -> Self {
        Self::from_json(DEFAULT_TABLE).expect("bundled reporter table is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalizes_spacing_variants() {
        let table = ReporterTable::default();
        assert_eq!(table.canonicalize("F. 3d"), Some("F.3d"));
        assert_eq!(table.canonicalize("U. S."), Some("U.S."));
        assert_eq!(table.canonicalize("F.Supp.2d"), Some("F. Supp. 2d"));
        assert_eq!(table.canonicalize("So.2d"), None);
    }

    #[test]
    fn rejects_conflicts() {
        let err = ReporterTable::from_pairs([("F.3d", "F.3d"), ("F. 3d", "F.2d")]);
        assert!(err.is_err());
        assert!(ReporterTable::from_json("[]").is_err());
        assert!(ReporterTable::from_json("{}").is_err());
    }

    #[test]
    fn extensible_from_json() {
        let table = ReporterTable::from_json(r#"{"So. 2d": "So.2d"}"#).unwrap();
        assert_eq!(table.canonicalize("So.2d"), Some("So.2d"));
        assert_eq!(table.canonicalize("U.S."), None);
    }
}
