#![no_main]
use latentmesh::diffusion::{read_cascades, write_cascades};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(set) = read_cascades(text) {
        let written = write_cascades(&set);
        let back = read_cascades(&written).unwrap();
        assert_eq!(write_cascades(&back), written);
        assert_eq!(back.len(), set.len());
    }
});
