#![no_main]
use libfuzzer_sys::fuzz_target;

use gazedpm::grid::FloatGrid;

fuzz_target!(|data: &[u8]| {
    if let Ok(grid) = FloatGrid::from_bytes(data) {
        let bytes = grid.to_bytes();
        assert_eq!(&data[..bytes.len()], &bytes[..]);
    }
});
