#![no_main]
use libfuzzer_sys::fuzz_target;

use gazedpm::gaze::decode_saliency_map;

fuzz_target!(|data: &[u8]| {
    let Some((&flag, bytes)) = data.split_first() else {
        return;
    };
    if let Ok(map) = decode_saliency_map(bytes, flag & 1 == 1, 16, 12) {
        assert!(map.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
});
