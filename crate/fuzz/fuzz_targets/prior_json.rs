#![no_main]

use libfuzzer_sys::fuzz_target;
use posefuse_cli::commands::parse_prior;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(pose) = parse_prior(text) {
            assert!(pose.theta() > -std::f64::consts::PI && pose.theta() <= std::f64::consts::PI);
        }
    }
});
