#![no_main]
use libfuzzer_sys::fuzz_target;
use lext_core::prompts::PromptRegistry;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(reg) = PromptRegistry::new().with_overrides_json(src) {
        assert_eq!(reg.len(), 11);
    }
});
