#![no_main]
use libfuzzer_sys::fuzz_target;

use gazedpm::data::DatasetManifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(manifest) = DatasetManifest::from_json(text) {
        let back = DatasetManifest::from_json(&manifest.to_json()).expect("written manifest parses");
        assert_eq!(back, manifest);
    }
});
