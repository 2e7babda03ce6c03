#![no_main]
use libfuzzer_sys::fuzz_target;
use mosr::data::SyntheticSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(spec) = serde_json::from_str::<SyntheticSpec>(s) {
            let _ = spec.validate();
        }
    }
});
