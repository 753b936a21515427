//! Fuzzes the element-expression parser and, when parsing succeeds, the
//! realization of the syntax tree over the one-letter coordinate line.

#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use ncbv::bv::odd_line_form;
use ncbv::cyclic::{Convention, WordAlgebra};
use ncbv_cli::parse::{parse_element, realize_element};

fn words() -> &'static WordAlgebra {
    static ALG: OnceLock<WordAlgebra> = OnceLock::new();
    ALG.get_or_init(|| {
        WordAlgebra::new(&odd_line_form().unwrap(), Convention::EvenSymplectic).unwrap()
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if text.len() > 4096 {
        return;
    }
    if let Ok(ast) = parse_element(text) {
        let _ = realize_element(&ast, words());
    }
});
