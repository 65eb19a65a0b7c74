#![no_main]

use libfuzzer_sys::fuzz_target;
use st_sam::dataio::DatasetMeta;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(meta) = DatasetMeta::from_toml_str(text) {
            let back = DatasetMeta::from_toml_str(&meta.to_toml_string()).unwrap();
            assert_eq!(back, meta);
        }
    }
});
