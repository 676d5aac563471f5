#![no_main]
use libfuzzer_sys::fuzz_target;
use lext_core::parsing::parse_prediction;
use lext_core::types::DatasetKind;

fuzz_target!(|data: &[u8]| {
    let Ok(raw) = std::str::from_utf8(data) else { return };
    for kind in [DatasetKind::Qpain, DatasetKind::Pubmedqa, DatasetKind::Custom] {
        let p = parse_prediction(raw, kind);
        assert_eq!(p.raw_response, raw);
    }
});
