#![no_main]
use latentmesh::graph::load_edge_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for directed in [false, true] {
        if let Ok((graph, _)) = load_edge_list(text, directed) {
            if graph.num_edges() == 0 {
                continue;
            }
            let (back, report) = load_edge_list(&graph.to_edge_list(), directed).unwrap();
            assert_eq!(back.edges(), graph.edges());
            assert_eq!(report.duplicates + report.self_loops, 0);
        }
    }
});
