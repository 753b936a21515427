//! Fuzzes the `index=value` coefficient-list parser and the standalone
//! rational parser it is built on.

#![no_main]

use libfuzzer_sys::fuzz_target;
use ncbv_cli::parse::{parse_coeff_list, rational_from_str};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if text.len() > 4096 {
        return;
    }
    let _ = parse_coeff_list(text);
    let _ = rational_from_str(text);
});
