#![no_main]

use casebench::retrieval::trec::{read_run, write_run};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(lists) = read_run(data) {
        let mut out = Vec::new();
        write_run(&mut out, &lists, "fuzz").unwrap();
        let again = read_run(out.as_slice()).unwrap();
        assert_eq!(again.len(), lists.len());
    }
});
