#![no_main]

use libfuzzer_sys::fuzz_target;

// JSON-lines ledger reader: parse failures must carry a byte offset and
// never panic; successful parses must re-serialize byte-identically
// (shortest round-trip float formatting on both sides).
fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = jflow::ledger::parse_jsonl(data) {
        let mut buf = Vec::new();
        jflow::ledger::write_jsonl(&mut buf, &rows).expect("rows must re-serialize");
        let again = jflow::ledger::parse_jsonl(&buf).expect("round-trip must parse");
        assert_eq!(rows, again);
    }
});
