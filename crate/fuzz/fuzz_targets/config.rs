#![no_main]
use latentmesh::eval::parse_ratios;
use latentmesh::pipeline::PipelineConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_ratios(text);
    if let Ok(cfg) = PipelineConfig::parse(text) {
        let rendered = cfg.render();
        let back = PipelineConfig::parse(&rendered).unwrap();
        assert_eq!(back.render(), rendered);
    }
});
