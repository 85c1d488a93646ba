#![no_main]

use libfuzzer_sys::fuzz_target;
use posefuse::trajectory::{parse_trajectory, write_trajectory};

fuzz_target!(|data: &[u8]| {
    let Ok(record) = parse_trajectory(data) else {
        return;
    };
    // Whatever parses must survive a write/read cycle unchanged.
    let mut buf = Vec::new();
    write_trajectory(&record, &mut buf).unwrap();
    assert_eq!(parse_trajectory(buf.as_slice()).unwrap(), record);
});
