//! Fuzzes the quarter-stamp parser with arbitrary strings.

#![no_main]

use libfuzzer_sys::fuzz_target;
use monet::dataset::QuarterStamp;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Some(stamp) = QuarterStamp::parse(s) {
            // A parsed stamp must survive a round trip through its display form.
            let shown = format!("{stamp}");
            assert_eq!(QuarterStamp::parse(&shown), Some(stamp));
        }
    }
});
