//! Fuzzes checkpoint deserialization: arbitrary JSON-ish bytes must either
//! produce a validated model or a clean error, never a panic. Accepted
//! checkpoints must survive a serialize/deserialize round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;

use adacat::armodel::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ck) = Checkpoint::from_json(text) {
            let json = ck.to_json();
            let back = Checkpoint::from_json(&json).expect("round trip");
            assert_eq!(ck, back);
        }
    }
});
