#![no_main]

use libfuzzer_sys::fuzz_target;
use radvid_core::segmentation::MaskData;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = MaskData::from_nifti_bytes(data) {
        assert_eq!(m.voxels.len(), m.grid.len());
        assert!(m.voxels.iter().all(|&v| v <= 1));
    }
});
