#![no_main]

use libfuzzer_sys::fuzz_target;
use radvid_core::volume::{nifti, CtVolume};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = nifti::decode(data) {
        let _ = nifti::canonicalize(img.header.dims, &img.data, &img.affine);
    }
    let _ = CtVolume::from_nifti_bytes(data, "fuzz");
});
