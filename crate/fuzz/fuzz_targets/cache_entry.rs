#![no_main]
use libfuzzer_sys::fuzz_target;
use lext_core::cache::decode_entry;

fuzz_target!(|data: &[u8]| {
    let _ = decode_entry(data, None);
});
