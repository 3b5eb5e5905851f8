#![no_main]

use libfuzzer_sys::fuzz_target;
use neurocal::data::{
    convenience_from_distances, matrix_from_rows, min_mode_distance, parse_numeric_csv,
};

// Two cost matrices from one input: combined mode minimum, then the
// convenience transform. Exercises the numeric validation paths on
// arbitrary parsed values (NaN, negatives, zero scales).
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Some((a_text, b_text)) = text.split_once('!') else { return };
    let parse = |t: &str| {
        parse_numeric_csv(t, "fuzz").and_then(|rows| matrix_from_rows(rows, "fuzz"))
    };
    let (Ok(a), Ok(b)) = (parse(a_text), parse(b_text)) else { return };
    if let Ok(min) = min_mode_distance(&a, &b) {
        let _ = convenience_from_distances(&min);
    }
    let _ = convenience_from_distances(&a);
});
