#![no_main]
use libfuzzer_sys::fuzz_target;

use gazedpm::dpm::{model_from_json, model_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = model_from_json(text) {
        let again = model_from_json(&model_to_json(&model)).expect("saved model loads");
        assert_eq!(model_to_json(&again), model_to_json(&model));
    }
});
