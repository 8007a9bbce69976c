#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(levels) = gazedpm::features::read_pyramid_dump(data) {
        for level in &levels {
            assert_eq!(level.values.len(), level.cells_w * level.cells_h * level.channels);
        }
    }
});
