#![no_main]

use conformal_lab::mesh::io::{parse_obj, write_obj};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mesh) = parse_obj(text) {
        let again = parse_obj(&write_obj(&mesh)).expect("written OBJ parses");
        assert_eq!(again.num_faces(), mesh.num_faces());
        assert_eq!(again.genus(), mesh.genus());
    }
});
