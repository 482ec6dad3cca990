#![no_main]

use libfuzzer_sys::fuzz_target;

// Snapshot decoding from untrusted bytes: malformed headers, truncated
// payloads and absurd dimensions must come back as format errors, not
// panics or giant allocations (the header validation caps the grid size
// before the payload length is trusted).
fuzz_target!(|data: &[u8]| {
    let _ = jflow::snapshot::parse_snapshot(data);
});
