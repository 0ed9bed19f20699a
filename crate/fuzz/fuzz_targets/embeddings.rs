#![no_main]
use latentmesh::laae::{read_embeddings, write_embeddings};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(y) = read_embeddings(text) {
        let written = write_embeddings(&y);
        let back = read_embeddings(&written).unwrap();
        assert_eq!(write_embeddings(&back), written);
        assert_eq!(back.shape(), y.shape());
    }
});
