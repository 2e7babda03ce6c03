#![no_main]
use libfuzzer_sys::fuzz_target;
use mosr::data::Vocabulary;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(v) = Vocabulary::from_json(s) {
            // A vocabulary that parses must round-trip.
            let again = Vocabulary::from_json(&v.to_json()).unwrap();
            assert_eq!(v, again);
        }
    }
});
