#![no_main]

use libfuzzer_sys::fuzz_target;
use posefuse_cli::stream::parse_line;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        for line in text.lines() {
            let _ = parse_line(line);
        }
    }
});
