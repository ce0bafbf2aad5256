//! Fuzzes the quarterly CSV decoder: arbitrary bytes must produce either a
//! parsed dataset or a structured error, never a panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use monet::dataset::{dataset_from_bytes, parse_rows, Country};

fuzz_target!(|data: &[u8]| {
    for country in [Country::US, Country::CA, Country::UK, Country::BR] {
        let _ = parse_rows(data, country);
        let _ = dataset_from_bytes(data, country, country.default_range());
    }
});
