#![no_main]

use consensus_forge::export::{read_trajectory_csv, write_trajectory_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(traj) = read_trajectory_csv(data) {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj).expect("write");
        let back = read_trajectory_csv(buf.as_slice()).expect("reload");
        assert_eq!(back.header, traj.header);
        assert_eq!(back.rows.len(), traj.rows.len());
        for (a, b) in back.rows.iter().flatten().zip(traj.rows.iter().flatten()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }
});
