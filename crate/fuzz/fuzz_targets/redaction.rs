#![no_main]
use libfuzzer_sys::fuzz_target;
use lext_core::faithfulness::redact;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    let (context, keywords) = src.split_once('\n').unwrap_or((src, ""));
    let keywords: Vec<String> = keywords.split(',').map(str::to_string).collect();
    let once = redact(context, &keywords);
    assert_eq!(redact(&once, &keywords), once);
});
