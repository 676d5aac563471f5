#![no_main]
use libfuzzer_sys::fuzz_target;
use lext_core::dataset::{augment_qpain, parse_items, DemographicConfig};
use lext_core::types::DatasetKind;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    let (cfg, template) = src.split_once('\n').unwrap_or((src, ""));
    let Ok(cfg) = DemographicConfig::from_json_str(cfg) else { return };
    if cfg.combinations() > 4096 {
        return;
    }
    for item in parse_items(template, DatasetKind::Qpain).items {
        if let Ok(out) = augment_qpain(&item, &cfg) {
            assert_eq!(out.len(), cfg.combinations());
        }
    }
});
