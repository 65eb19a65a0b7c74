#![no_main]

use libfuzzer_sys::fuzz_target;
use st_sam::dataio::{parse_flow_csv, write_flow_csv, DatasetMeta};

fuzz_target!(|data: &[u8]| {
    // First byte picks the grid so both small and odd shapes get exercised.
    let Some((&shape, rest)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    let n = 1 + (shape & 0x07) as usize;
    let slots_per_day = [1, 2, 24, 48][(shape >> 3 & 0x03) as usize];
    let Ok(meta) = DatasetMeta::new(n, slots_per_day, 0) else {
        return;
    };
    if let Ok(load) = parse_flow_csv(text, meta.clone()) {
        // Whatever parses must survive a write/parse cycle unchanged.
        let again = parse_flow_csv(&write_flow_csv(&load.dataset, None), meta).unwrap();
        assert_eq!(again.dataset, load.dataset);
    }
});
