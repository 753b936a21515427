//! Fuzzes the algebra-description file parser, including assembly of the
//! described algebra (which inverts the declared pairing matrix).

#![no_main]

use libfuzzer_sys::fuzz_target;
use ncbv_cli::config::parse_algebra_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if text.len() > 8192 {
        return;
    }
    let _ = parse_algebra_config(text);
});
