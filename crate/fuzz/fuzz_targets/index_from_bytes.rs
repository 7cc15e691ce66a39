#![no_main]

use casebench::retrieval::{Bm25Params, InvertedIndex};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(index) = InvertedIndex::from_bytes(data) {
        let _ = index.search("q", "the court held", 10, &Bm25Params::default());
        assert_eq!(InvertedIndex::from_bytes(&index.to_bytes()).unwrap().to_bytes(), index.to_bytes());
    }
});
