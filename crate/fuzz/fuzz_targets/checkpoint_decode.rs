#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Must never panic: malformed checkpoints are rejected with errors.
    let _ = censornet::io::checkpoint::decode_checkpoint(data);
});
