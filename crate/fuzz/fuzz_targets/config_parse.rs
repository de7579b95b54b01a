#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Must never panic: config parsing and validation only return errors.
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = serde_json::from_str::<censornet::io::ExperimentConfig>(text) {
            let _ = cfg.validate();
        }
    }
});
