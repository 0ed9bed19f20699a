#![no_main]
use latentmesh::nn::{read_net, write_net};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(net) = read_net(text) {
        let written = write_net(&net);
        let back = read_net(&written).unwrap();
        assert_eq!(write_net(&back), written);
        assert_eq!(back.dims(), net.dims());
    }
});
