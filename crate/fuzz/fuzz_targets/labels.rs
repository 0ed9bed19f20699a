#![no_main]
use latentmesh::eval::{read_labels, write_labels};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(labels) = read_labels(text) {
        assert_eq!(read_labels(&write_labels(&labels)).unwrap(), labels);
    }
});
