#![no_main]

use casebench::citation::{citation_sentence_bounds, default_parser, extract_direct_quotes};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let parser = default_parser();
    let parsed = parser.parse(text);
    for c in parsed.citations.iter().chain(&parsed.statutes) {
        assert!(c.start <= c.end && c.end <= text.len());
        assert_eq!(&text[c.start..c.end], c.raw);
    }
    for i in 0..parsed.citations.len() {
        if let Ok((s, e)) = citation_sentence_bounds(text, &parsed, i) {
            assert!(s <= parsed.citations[i].start && parsed.citations[i].end <= e);
        }
    }
    let _ = extract_direct_quotes(text, &parsed);
});
