#![no_main]

use casebench::corpus::{normalize_record, RawRecord};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(value) = serde_json::from_slice::<serde_json::Value>(data) {
        if let Some(record) = RawRecord::from_cap(&value) {
            let _ = normalize_record(&record);
        }
    }
});
