//! Organ masks and their bounding boxes.
//!
//! Masks are obtained through a [`SegmentationProvider`]; the pipeline locates
//! the organ that contains a finding rather than the lesion itself.

mod bbox;
mod providers;

use std::path::Path;

use thiserror::Error;

use crate::grid::Grid;
use crate::provider::ProviderError;
use crate::report::OrganVocabulary;
use crate::volume::nifti::{self, NiftiError};
use crate::volume::CtVolume;

pub use bbox::{bounding_box, union_box, BoundingBox3D};
pub use providers::{
    mask_file_name, sanitize_label, FileMaskProvider, HttpSegmentation, PhantomProvider, Shape,
};

#[derive(Debug, Error)]
pub enum SegError {
    #[error("no foreground voxels for {organ:?}")]
    EmptyMask { organ: String },
    #[error("mask dims {got:?} do not match volume dims {expected:?}")]
    DimsMismatch { expected: [usize; 3], got: [usize; 3] },
    #[error("organ {0:?} is not in the vocabulary")]
    UnknownOrgan(String),
    #[error("segmentation provider failure: {0}")]
    ProviderFailure(#[from] ProviderError),
    #[error("malformed mask file: {0}")]
    MalformedHeader(String),
    #[error("no boxes to combine")]
    EmptyList,
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl From<NiftiError> for SegError {
    fn from(e: NiftiError) -> Self {
        SegError::MalformedHeader(e.to_string())
    }
}

/// A raw provider answer: a binary-ish voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskData {
    pub grid: Grid,
    pub voxels: Vec<u8>,
}

impl MaskData {
    pub fn to_nifti_bytes(&self, gz: bool) -> Vec<u8> {
        let raw = nifti::encode(&self.grid, nifti::VoxelData::U8(&self.voxels));
        if gz {
            nifti::gzip(&raw)
        } else {
            raw
        }
    }

    /// Decode a NIfTI mask (any datatype); nonzero voxels are foreground.
    pub fn from_nifti_bytes(bytes: &[u8]) -> Result<Self, SegError> {
        let img = nifti::decode(bytes)?;
        let (grid, data, _) = nifti::canonicalize(img.header.dims, &img.data, &img.affine)?;
        let voxels = data.iter().map(|&v| u8::from(v != 0.0)).collect();
        Ok(Self { grid, voxels })
    }
}

/// Binary organ mask bound to the grid of a [`CtVolume`].
#[derive(Debug, Clone, PartialEq)]
pub struct OrganMask {
    organ: String,
    grid: Grid,
    voxels: Vec<u8>,
    volume_ref: String,
    foreground: usize,
}

impl OrganMask {
    /// Nonzero input voxels become 1. Rejects empty masks and size mismatches.
    pub fn new(
        organ: impl Into<String>,
        grid: Grid,
        voxels: Vec<u8>,
        volume_ref: impl Into<String>,
    ) -> Result<Self, SegError> {
        let organ = organ.into();
        if voxels.len() != grid.len() {
            return Err(SegError::MalformedHeader(format!(
                "{} voxels for dims {:?}",
                voxels.len(),
                grid.dims
            )));
        }
        let voxels: Vec<u8> = voxels.into_iter().map(|v| u8::from(v != 0)).collect();
        let foreground = voxels.iter().filter(|&&v| v != 0).count();
        if foreground == 0 {
            return Err(SegError::EmptyMask { organ });
        }
        Ok(Self {
            organ,
            grid,
            voxels,
            volume_ref: volume_ref.into(),
            foreground,
        })
    }

    pub fn organ(&self) -> &str {
        &self.organ
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }
    pub fn voxels(&self) -> &[u8] {
        &self.voxels
    }
    pub fn volume_ref(&self) -> &str {
        &self.volume_ref
    }
    pub fn foreground_count(&self) -> usize {
        self.foreground
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.voxels[self.grid.index(i, j, k)] != 0
    }

    pub fn to_nifti_bytes(&self, gz: bool) -> Vec<u8> {
        let raw = nifti::encode(&self.grid, nifti::VoxelData::U8(&self.voxels));
        if gz {
            nifti::gzip(&raw)
        } else {
            raw
        }
    }
}

/// Source of organ masks.
pub trait SegmentationProvider: Send + Sync {
    fn name(&self) -> &str;
    /// Mask for `organ` on the grid of `vol`. Implementations may return an
    /// empty or mis-sized mask; [`segment`] validates.
    fn segment(&self, vol: &CtVolume, organ: &str) -> Result<MaskData, SegError>;
}

impl<P: SegmentationProvider + ?Sized> SegmentationProvider for &P {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn segment(&self, vol: &CtVolume, organ: &str) -> Result<MaskData, SegError> {
        (**self).segment(vol, organ)
    }
}

impl<P: SegmentationProvider + ?Sized> SegmentationProvider for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn segment(&self, vol: &CtVolume, organ: &str) -> Result<MaskData, SegError> {
        (**self).segment(vol, organ)
    }
}

impl<P: SegmentationProvider + ?Sized> SegmentationProvider for std::sync::Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn segment(&self, vol: &CtVolume, organ: &str) -> Result<MaskData, SegError> {
        (**self).segment(vol, organ)
    }
}

/// Segment `organ` in `vol` and validate the provider's answer.
pub fn segment(
    vol: &CtVolume,
    organ: &str,
    vocab: &OrganVocabulary,
    provider: &dyn SegmentationProvider,
) -> Result<OrganMask, SegError> {
    let organ = vocab
        .resolve(organ)
        .ok_or_else(|| SegError::UnknownOrgan(organ.to_string()))?;
    let data = provider.segment(vol, organ)?;
    bind_mask(organ, data, vol)
}

fn bind_mask(organ: &str, data: MaskData, vol: &CtVolume) -> Result<OrganMask, SegError> {
    if data.grid.dims != vol.dims() {
        return Err(SegError::DimsMismatch {
            expected: vol.dims(),
            got: data.grid.dims,
        });
    }
    OrganMask::new(organ, *vol.grid(), data.voxels, vol.source_id())
}

/// Load a NIfTI mask whose lattice must match `vol`.
pub fn load_mask_file(path: &Path, organ: &str, vol: &CtVolume) -> Result<OrganMask, SegError> {
    let bytes = std::fs::read(path).map_err(|e| SegError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    bind_mask(organ, MaskData::from_nifti_bytes(&bytes)?, vol)
}

/// Write a mask as uint8 NIfTI; gzip when the path ends in `.gz`.
pub fn save_mask_file(mask: &OrganMask, path: &Path) -> Result<(), SegError> {
    let gz = path.extension().is_some_and(|e| e == "gz");
    std::fs::write(path, mask.to_nifti_bytes(gz)).map_err(|e| SegError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume(dims: [usize; 3]) -> CtVolume {
        CtVolume::from_fn(Grid::new(dims, [1.0; 3], [0.0; 3]), "vol", |_| 0.0).unwrap()
    }

    struct Fixed(MaskData);
    impl SegmentationProvider for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn segment(&self, _: &CtVolume, _: &str) -> Result<MaskData, SegError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn phantom_cube_has_1000_voxels() {
        let vol = volume([64, 64, 64]);
        let p = PhantomProvider::new().with_shape(
            "liver",
            Shape::Box {
                min: [27, 27, 27],
                max: [36, 36, 36],
            },
        );
        let m = segment(&vol, "liver", &OrganVocabulary::builtin(), &p).unwrap();
        assert_eq!(m.foreground_count(), 1000);
        assert_eq!(m.volume_ref(), "vol");
        assert_eq!(m.organ(), "liver");
    }

    #[test]
    fn all_zero_is_empty_mask() {
        let vol = volume([4, 4, 4]);
        let p = Fixed(MaskData {
            grid: *vol.grid(),
            voxels: vec![0; 64],
        });
        assert!(matches!(
            segment(&vol, "heart", &OrganVocabulary::builtin(), &p),
            Err(SegError::EmptyMask { .. })
        ));
    }

    #[test]
    fn wrong_dims_is_mismatch() {
        let vol = volume([4, 4, 4]);
        let p = Fixed(MaskData {
            grid: Grid::new([4, 4, 3], [1.0; 3], [0.0; 3]),
            voxels: vec![1; 48],
        });
        assert!(matches!(
            segment(&vol, "heart", &OrganVocabulary::builtin(), &p),
            Err(SegError::DimsMismatch {
                expected: [4, 4, 4],
                got: [4, 4, 3]
            })
        ));
    }

    #[test]
    fn unknown_organ() {
        let vol = volume([4, 4, 4]);
        let p = PhantomProvider::new();
        assert!(matches!(
            segment(&vol, "flux capacitor", &OrganVocabulary::builtin(), &p),
            Err(SegError::UnknownOrgan(_))
        ));
    }

    #[test]
    fn mask_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let vol = volume([6, 5, 4]);
        let p = PhantomProvider::new().with_shape(
            "heart",
            Shape::Box {
                min: [1, 1, 1],
                max: [3, 2, 2],
            },
        );
        let m = segment(&vol, "heart", &OrganVocabulary::builtin(), &p).unwrap();
        let path = dir.path().join("heart.nii.gz");
        save_mask_file(&m, &path).unwrap();
        let back = load_mask_file(&path, "heart", &vol).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn mask_file_dims_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let small = volume([64, 64, 32]);
        let m = OrganMask::new("heart", *small.grid(), vec![1; small.grid().len()], "s").unwrap();
        let path = dir.path().join("m.nii");
        save_mask_file(&m, &path).unwrap();
        let big = volume([64, 64, 33]);
        assert!(matches!(
            load_mask_file(&path, "heart", &big),
            Err(SegError::DimsMismatch { .. })
        ));
    }

    #[test]
    fn nonzero_values_are_foreground() {
        let dir = tempfile::tempdir().unwrap();
        let vol = volume([3, 3, 3]);
        let mut values = vec![0f32; 27];
        values[4] = 7.0;
        values[20] = 7.0;
        let bytes = nifti::encode(vol.grid(), nifti::VoxelData::F32(&values));
        let path = dir.path().join("m.nii");
        std::fs::write(&path, bytes).unwrap();
        let m = load_mask_file(&path, "heart", &vol).unwrap();
        assert_eq!(m.foreground_count(), 2);
        for (idx, &v) in m.voxels().iter().enumerate() {
            assert_eq!(v == 1, values[idx] == 7.0);
        }
    }
}
