#![no_main]
use libfuzzer_sys::fuzz_target;
use orbitope::pointcloud::{parse_csv, write_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = parse_csv(data) {
        let again = parse_csv(&write_csv(&cloud)).expect("written files reparse");
        assert_eq!(again.len(), cloud.len());
    }
});
