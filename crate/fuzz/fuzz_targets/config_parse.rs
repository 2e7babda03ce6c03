#![no_main]
use libfuzzer_sys::fuzz_target;
use mosr::config::TrainConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = TrainConfig::from_json(s);
    }
});
