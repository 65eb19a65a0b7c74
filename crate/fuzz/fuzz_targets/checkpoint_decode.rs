#![no_main]

use libfuzzer_sys::fuzz_target;
use st_sam::training::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = Checkpoint::decode(data) {
        assert_eq!(Checkpoint::decode(&c.encode()).unwrap().encode(), c.encode());
    }
});
