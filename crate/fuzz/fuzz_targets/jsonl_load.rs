#![no_main]
use libfuzzer_sys::fuzz_target;
use mosr::data::{parse_jsonl, JsonlSchema};
use std::io::Cursor;

fuzz_target!(|data: &[u8]| {
    // Any byte stream must either parse into records or return a typed
    // error; panics and UB are the bugs we hunt.
    let _ = parse_jsonl(Cursor::new(data), &JsonlSchema::default());
});
