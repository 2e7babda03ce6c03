#![no_main]
use libfuzzer_sys::fuzz_target;
use mosr::data::SplitManifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(m) = serde_json::from_str::<SplitManifest>(s) {
            let _ = serde_json::to_string(&m);
        }
    }
});
