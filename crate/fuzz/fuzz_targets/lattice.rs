#![no_main]

use conformal_lab::mesh::Lattice;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(lattice) = text.parse::<Lattice>() {
        assert!(lattice.covolume() > 0.0);
    }
});
