#![no_main]
use libfuzzer_sys::fuzz_target;
use lext_core::dataset::parse_items;
use lext_core::types::DatasetKind;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    for kind in [DatasetKind::Qpain, DatasetKind::Pubmedqa] {
        let report = parse_items(src, kind);
        let mut out = Vec::new();
        lext_core::dataset::write_items(&report.items, &mut out).unwrap();
        let again = parse_items(std::str::from_utf8(&out).unwrap(), kind);
        assert_eq!(report.items, again.items);
    }
});
