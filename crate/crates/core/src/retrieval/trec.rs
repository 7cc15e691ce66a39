//! TREC run and qrels files.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use super::{RankedEntry, RankedList};
use crate::error::{Error, Result};

/// Positive judgments: query id to relevant unit ids.
pub type Qrels = BTreeMap<String, BTreeSet<String>>;

/// Writes `query_id Q0 unit_id rank score tag` lines.
pub fn write_run<W: Write>(mut w: W, lists: &[RankedList], tag: &str) -> Result<()> {
    if tag.is_empty() || tag.contains(char::is_whitespace) {
        return Err(Error::InvalidInput(format!("invalid run tag `{tag}`")));
    }
    for list in lists {
        for e in &list.entries {
            writeln!(w, "{} Q0 {} {} {:.6} {}", list.query_id, e.unit_id, e.rank, e.score, tag)?;
        }
    }
    Ok(())
}

/// Reads a run file. Lists come back in first-appearance order of their
/// query ids, entries sorted by rank; ranks must be 1..n without gaps and unit
/// ids distinct within a query. `k` is set to the list length.
pub fn read_run<R: BufRead>(r: R) -> Result<Vec<RankedList>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_query: BTreeMap<String, Vec<RankedEntry>> = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [qid, _q0, unit, rank, score, _tag] = fields[..] else {
            return Err(Error::parse(lineno, format!("expected 6 fields, found {}", fields.len())));
        };
        let rank: usize = rank
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid rank `{rank}`")))?;
        let score: f64 = score
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse(lineno, format!("invalid score `{score}`")))?;
        if !by_query.contains_key(qid) {
            order.push(qid.to_owned());
        }
        by_query.entry(qid.to_owned()).or_default().push(RankedEntry {
            unit_id: unit.to_owned(),
            score,
            rank,
        });
    }
    order
        .into_iter()
        .map(|qid| {
            let mut entries = by_query.remove(&qid).unwrap_or_default();
            entries.sort_by_key(|e| e.rank);
            let mut seen = HashSet::new();
            for (i, e) in entries.iter().enumerate() {
                if e.rank != i + 1 {
                    return Err(Error::InvalidInput(format!("query {qid}: ranks are not 1..n")));
                }
                if !seen.insert(e.unit_id.as_str()) {
                    return Err(Error::InvalidInput(format!("query {qid}: duplicate unit {}", e.unit_id)));
                }
            }
            Ok(RankedList {
                query_id: qid,
                k: entries.len(),
                entries,
            })
        })
        .collect()
}

/// Writes `query_id 0 unit_id 1` lines in sorted order.
pub fn write_qrels<W: Write>(mut w: W, qrels: &Qrels) -> Result<()> {
    for (qid, units) in qrels {
        for u in units {
            writeln!(w, "{qid} 0 {u} 1")?;
        }
    }
    Ok(())
}

/// Reads `query_id iter unit_id relevance` lines, keeping relevance > 0.
pub fn read_qrels<R: BufRead>(r: R) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [qid, _iter, unit, rel] = fields[..] else {
            return Err(Error::parse(lineno, format!("expected 4 fields, found {}", fields.len())));
        };
        let rel: i64 = rel
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid relevance `{rel}`")))?;
        if rel > 0 {
            qrels.entry(qid.to_owned()).or_default().insert(unit.to_owned());
        }
    }
    Ok(qrels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_round_trip() {
        let lists = vec![
            RankedList::from_scores("q2", vec![("d1".into(), 2.5), ("d0".into(), 1.25)], 10),
            RankedList::from_scores("q1", vec![("d9".into(), 0.5)], 10),
        ];
        let mut buf = Vec::new();
        write_run(&mut buf, &lists, "bm25").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("q2 Q0 d1 1 2.500000 bm25\n"));
        let back = read_run(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].query_id, "q2");
        assert_eq!(back[0].entries, lists[0].entries);
        assert!(write_run(Vec::new(), &lists, "bad tag").is_err());
    }

    #[test]
    fn run_errors() {
        assert!(matches!(read_run(&b"q Q0 d 1 1.0\n"[..]), Err(Error::Parse { line: 1, .. })));
        assert!(read_run(&b"q Q0 d x 1.0 t\n"[..]).is_err());
        assert!(read_run(&b"q Q0 d 1 nan t\n"[..]).is_err());
        assert!(read_run(&b"q Q0 d 2 1.0 t\n"[..]).is_err());
        assert!(read_run(&b"q Q0 d 1 1.0 t\nq Q0 d 2 0.5 t\n"[..]).is_err());
    }

    #[test]
    fn qrels_round_trip() {
        let text = "q1 0 a 1\nq1 0 b 0\n\nq2 0 c 2\n";
        let qrels = read_qrels(text.as_bytes()).unwrap();
        assert_eq!(qrels["q1"].len(), 1);
        let mut buf = Vec::new();
        write_qrels(&mut buf, &qrels).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "q1 0 a 1\nq2 0 c 1\n");
        assert!(read_qrels(&b"q1 0 a\n"[..]).is_err());
    }
}
