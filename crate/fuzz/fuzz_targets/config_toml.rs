#![no_main]

use libfuzzer_sys::fuzz_target;
use radvid_cli::PipelineConfig;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = PipelineConfig::from_toml(data) {
        let _ = cfg.validate();
        assert!(PipelineConfig::from_toml(&cfg.to_toml()).is_ok());
    }
});
