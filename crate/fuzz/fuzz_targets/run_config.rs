#![no_main]
use libfuzzer_sys::fuzz_target;
use lext_core::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    for cfg in [RunConfig::from_toml_str(src), RunConfig::from_json_str(src)].into_iter().flatten() {
        let _ = cfg.validate();
        let _ = cfg.snapshot();
    }
});
