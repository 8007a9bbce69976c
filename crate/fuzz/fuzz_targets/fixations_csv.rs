#![no_main]
use libfuzzer_sys::fuzz_target;

use gazedpm::gaze::{read_fixations, write_fixations};

fuzz_target!(|data: &[u8]| {
    let Ok(records) = read_fixations(data, None) else {
        return;
    };
    // Anything accepted must survive a write/read round trip unchanged.
    let mut buf = Vec::new();
    write_fixations(&mut buf, &records).expect("accepted records serialize");
    let back = read_fixations(buf.as_slice(), None).expect("written log parses");
    assert_eq!(back, records);
});
