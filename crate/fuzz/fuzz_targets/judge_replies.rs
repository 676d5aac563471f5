#![no_main]
use libfuzzer_sys::fuzz_target;
use lext_core::parsing::{fast_label, map_judge_reply, parse_keywords, parse_probe_questions};

fuzz_target!(|data: &[u8]| {
    let Ok(reply) = std::str::from_utf8(data) else { return };
    assert!(parse_keywords(reply, 5).len() <= 5);
    for q in parse_probe_questions(reply) {
        assert!(!q.trim().is_empty());
    }
    let _ = map_judge_reply(reply);
    let _ = fast_label(reply);
});
