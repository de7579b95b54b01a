#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Must never panic: malformed epoch files are rejected with errors.
    let _ = censornet::io::epoch::decode_epoch_bytes(data);
});
