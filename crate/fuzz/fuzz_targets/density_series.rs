#![no_main]

use libfuzzer_sys::fuzz_target;
use neurocal::data::parse_density_series;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_density_series(text, "fuzz");
    }
});
