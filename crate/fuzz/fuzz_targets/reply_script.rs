#![no_main]
use libfuzzer_sys::fuzz_target;
use lext_core::providers::mock::ScriptedGenerator;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    let _ = ScriptedGenerator::from_json_str(src);
});
