#![no_main]

use conformal_lab::bounds::{symmetric_space_lambda1c, SymmetricSpace};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(space) = text.parse::<SymmetricSpace>() {
        assert_eq!(space.to_string().parse::<SymmetricSpace>().ok(), Some(space));
        if let Ok(value) = symmetric_space_lambda1c(space) {
            assert!(value.is_finite() && value > 0.0);
        }
    }
});
