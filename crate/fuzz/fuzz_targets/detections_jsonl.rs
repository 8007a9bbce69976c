#![no_main]
use libfuzzer_sys::fuzz_target;

use gazedpm::eval::{read_detections, write_detections};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_detections(data) {
        let mut buf = Vec::new();
        write_detections(&mut buf, &records).expect("records serialize");
        let back = read_detections(buf.as_slice()).expect("written detections parse");
        assert_eq!(back.len(), records.len());
    }
});
