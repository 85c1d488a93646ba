#![no_main]

use libfuzzer_sys::fuzz_target;
use posefuse::trajectory::{parse_odometry, write_odometry};

fuzz_target!(|data: &[u8]| {
    let Ok(samples) = parse_odometry(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_odometry(&samples, &mut buf).unwrap();
    assert_eq!(parse_odometry(buf.as_slice()).unwrap(), samples);
});
