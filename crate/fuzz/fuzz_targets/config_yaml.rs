#![no_main]

use libfuzzer_sys::fuzz_target;
use neurocal::config::RunConfig;

// Strict YAML run-configuration parsing must reject arbitrary input without
// panicking.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = RunConfig::from_yaml_str(text);
    }
});
