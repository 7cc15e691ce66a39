#![no_main]

use casebench::citation::{default_parser, CitationKey};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|raw: &str| {
    if let Ok(key) = default_parser().normalize_raw(raw) {
        let again: CitationKey = key.to_string().parse().unwrap();
        assert_eq!(again, key);
    }
    let _ = raw.parse::<CitationKey>();
});
