#![no_main]

use freetrans::config::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    match Config::from_toml(text) {
        Ok(cfg) => {
            let _ = cfg.points(true);
        }
        Err(e) => assert!(!e.problems.is_empty()),
    }
});
