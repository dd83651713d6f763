#![no_main]

use conformal_lab::experiments::ExperimentReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = ExperimentReport::from_json(text) {
        let _ = report.passed();
        let _ = report.to_csv();
        let json = report.to_json().expect("report serializes");
        ExperimentReport::from_json(&json).expect("serialized report parses");
    }
});
