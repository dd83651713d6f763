#![no_main]

use conformal_lab::constructions::decode_surgery;
use libfuzzer_sys::fuzz_target;

// Input layout: OFF text, a NUL byte, then the JSON sidecar.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Some((off, sidecar)) = text.split_once('\0') else {
        return;
    };
    if let Ok(out) = decode_surgery(off, sidecar) {
        assert_eq!(out.labels.len(), out.mesh.num_vertices());
        assert_eq!(out.density.len(), out.mesh.num_vertices());
    }
});
