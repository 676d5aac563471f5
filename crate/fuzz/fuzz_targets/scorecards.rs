#![no_main]
use libfuzzer_sys::fuzz_target;
use lext_core::report::parse_scorecards;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(cards) = parse_scorecards(src) {
        for card in cards {
            let line = serde_json::to_string(&card).unwrap();
            let back: lext_core::types::ScoreCard = serde_json::from_str(&line).unwrap();
            assert_eq!(serde_json::to_string(&back).unwrap(), line);
        }
    }
});
