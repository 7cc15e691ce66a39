#![no_main]

use casebench_cli::config::PipelineConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = PipelineConfig::from_toml(text) {
        let _ = cfg.validate();
        let _ = cfg.hash();
    }
});
