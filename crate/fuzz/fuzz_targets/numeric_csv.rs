#![no_main]

use libfuzzer_sys::fuzz_target;
use neurocal::data::{matrix_from_rows, parse_numeric_csv, vector_from_rows};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(rows) = parse_numeric_csv(text, "fuzz") {
            let _ = matrix_from_rows(rows.clone(), "fuzz");
            let _ = vector_from_rows(rows, "fuzz");
        }
    }
});
