#![no_main]

use casebench::citation::{CitationParser, ReporterTable};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|json: &str| {
    if let Ok(table) = ReporterTable::from_json(json) {
        let parser = CitationParser::new(table);
        let _ = parser.parse("See 1 U.S. 1 (1790).");
    }
});
