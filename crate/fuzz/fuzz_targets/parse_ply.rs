#![no_main]
use libfuzzer_sys::fuzz_target;
use orbitope::pointcloud::{parse_ply, write_ply_binary};

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = parse_ply(data) {
        let again = parse_ply(&write_ply_binary(&cloud)).expect("written files reparse");
        assert_eq!(again.points(), cloud.points());
    }
});
