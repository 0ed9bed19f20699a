#![no_main]
use latentmesh::inference::{read_matrix, write_matrix};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(w) = read_matrix(text) {
        let written = write_matrix(&w);
        let back = read_matrix(&written).unwrap();
        assert_eq!(write_matrix(&back), written);
        assert_eq!(back.nonzero_count(), w.nonzero_count());
    }
});
