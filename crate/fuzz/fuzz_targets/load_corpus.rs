#![no_main]

use casebench::corpus::{chunk_document, load_corpus};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(corpus) = load_corpus(data) {
        for doc in &corpus.documents {
            for i in 0..doc.paragraph_count() {
                let _ = doc.paragraph(i);
            }
            let passages = chunk_document(doc, 350, 175).unwrap();
            assert!(!passages.is_empty());
        }
    }
});
