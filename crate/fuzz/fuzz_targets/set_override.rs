#![no_main]

use libfuzzer_sys::fuzz_target;
use st_sam::cli::RunConfig;

// Newline-separated `--set` assignments applied to an empty config.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let sets: Vec<String> = text.lines().map(str::to_string).collect();
        let _ = RunConfig::from_toml_with_overrides("", &sets);
    }
});
