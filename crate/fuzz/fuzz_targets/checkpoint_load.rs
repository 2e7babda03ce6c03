#![no_main]
use libfuzzer_sys::fuzz_target;
use mosr::checkpoint::read_checkpoint;

fuzz_target!(|data: &[u8]| {
    // The checkpoint reader bounds-checks every offset/shape; arbitrary
    // bytes must never panic or allocate unboundedly.
    let _ = read_checkpoint(data);
});
