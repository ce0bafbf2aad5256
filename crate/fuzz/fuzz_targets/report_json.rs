//! Fuzzes structured-report deserialization: arbitrary JSON bytes must never
//! panic, and anything that parses must re-serialize.

#![no_main]

use libfuzzer_sys::fuzz_target;
use monet::pipeline::PipelineReport;

fuzz_target!(|data: &[u8]| {
    if let Ok(report) = serde_json::from_slice::<PipelineReport>(data) {
        let _ = serde_json::to_string(&report).unwrap();
    }
});
