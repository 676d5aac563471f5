#![no_main]
use libfuzzer_sys::fuzz_target;
use lext_core::providers::http::{parse_chat_response, parse_embedding_response, parse_ner_response};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = parse_chat_response(data) {
        assert!(!text.trim().is_empty());
    }
    let _ = parse_embedding_response(data);
    let _ = parse_ner_response(data);
});
