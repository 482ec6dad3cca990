#![no_main]

use libfuzzer_sys::fuzz_target;

// The flat config parser must reject garbage with a diagnostic, never
// panic. Valid parses additionally round-trip through the canonical
// serialization.
fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    if let Ok(cfg) = jflow::config::RunConfig::parse(&text) {
        let canonical = cfg.to_config_string();
        let again = jflow::config::RunConfig::parse(&canonical)
            .expect("canonical form must reparse");
        assert_eq!(cfg, again, "canonical round-trip drifted");
    }
});
