//! CT volumes: loading, resampling, windowing and axial slicing.
//!
//! Every volume is held in one canonical orientation, [`CANONICAL_ORIENTATION`]
//! (RAS: voxel axes increase toward patient Right, Anterior, Superior). Axial
//! slices are displayed in radiological convention: patient right on the image
//! left and anterior at the top, see [`slice_pixel`].

pub mod nifti;
mod window;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::Grid;
pub use nifti::NiftiError;
pub use window::{window_value, WindowPreset};

pub const CANONICAL_ORIENTATION: &str = "RAS";
pub const HU_MIN: f32 = -1024.0;
pub const HU_MAX: f32 = 3071.0;
/// Voxel spacing (mm) every volume is resampled to before segmentation.
pub const PIPELINE_SPACING: [f64; 3] = [1.0, 1.0, 3.0];

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported dimensionality: {0}D")]
    UnsupportedDimensionality(usize),
    #[error("unsupported voxel datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("degenerate spacing {0:?}: every component must be > 0")]
    DegenerateSpacing([f64; 3]),
    #[error("slice {z} out of range (volume has {nz} slices)")]
    SliceOutOfRange { z: usize, nz: usize },
    #[error("invalid volume: {0}")]
    Invalid(String),
}

impl From<NiftiError> for VolumeError {
    fn from(e: NiftiError) -> Self {
        match e {
            NiftiError::MalformedHeader(m) => VolumeError::MalformedHeader(m),
            NiftiError::UnsupportedDimensionality(n) => VolumeError::UnsupportedDimensionality(n),
            NiftiError::UnsupportedDatatype(c) => VolumeError::UnsupportedDatatype(c),
            NiftiError::Gzip(m) => VolumeError::MalformedHeader(m),
        }
    }
}

/// A 3D grid of Hounsfield units. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct CtVolume {
    grid: Grid,
    voxels: Vec<f32>,
    source_orientation: String,
    source_id: String,
}

impl CtVolume {
    /// Build a volume already in canonical orientation. Values are clamped to
    /// `[HU_MIN, HU_MAX]`; NaN becomes air.
    pub fn new(
        grid: Grid,
        mut voxels: Vec<f32>,
        source_id: impl Into<String>,
    ) -> Result<Self, VolumeError> {
        if !grid.is_valid() {
            if grid.spacing.iter().any(|&s| !(s > 0.0)) {
                return Err(VolumeError::DegenerateSpacing(grid.spacing));
            }
            return Err(VolumeError::Invalid(format!("invalid grid {grid:?}")));
        }
        if voxels.len() != grid.len() {
            return Err(VolumeError::Invalid(format!(
                "voxel count {} does not match dims {:?}",
                voxels.len(),
                grid.dims
            )));
        }
        for v in voxels.iter_mut() {
            *v = clamp_hu(*v);
        }
        Ok(Self {
            grid,
            voxels,
            source_orientation: CANONICAL_ORIENTATION.to_string(),
            source_id: source_id.into(),
        })
    }

    pub fn from_fn(
        grid: Grid,
        source_id: impl Into<String>,
        f: impl Fn([usize; 3]) -> f32 + Sync,
    ) -> Result<Self, VolumeError> {
        let voxels: Vec<f32> = (0..grid.len())
            .into_par_iter()
            .map(|idx| f(grid.coords(idx)))
            .collect();
        Self::new(grid, voxels, source_id)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }
    pub fn spacing(&self) -> [f64; 3] {
        self.grid.spacing
    }
    pub fn origin(&self) -> [f64; 3] {
        self.grid.origin
    }
    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }
    pub fn source_id(&self) -> &str {
        &self.source_id
    }
    /// Orientation code of the file this volume was loaded from.
    pub fn source_orientation(&self) -> &str {
        &self.source_orientation
    }
    /// Always [`CANONICAL_ORIENTATION`].
    pub fn orientation(&self) -> &'static str {
        CANONICAL_ORIENTATION
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.voxels[self.grid.index(i, j, k)]
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.voxels
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// SHA-256 over geometry and voxels; used as a cache key.
    pub fn content_hash(&self) -> String {
        let bytes = nifti::encode(&self.grid, nifti::VoxelData::F32(&self.voxels));
        crate::hashing::sha256_hex(&bytes)
    }

    /// Trilinear sample at a continuous voxel index. Indices outside the
    /// lattice take the nearest edge value.
    #[inline]
    pub fn sample_trilinear(&self, idx: [f64; 3]) -> f32 {
        trilinear(&self.grid, &self.voxels, idx)
    }

    /// Encode as NIfTI-1 float32; gzip-compressed when `gz` is set.
    pub fn to_nifti_bytes(&self, gz: bool) -> Vec<u8> {
        let raw = nifti::encode(&self.grid, nifti::VoxelData::F32(&self.voxels));
        if gz {
            nifti::gzip(&raw)
        } else {
            raw
        }
    }

    /// Decode from NIfTI bytes, canonicalizing orientation and clamping HU.
    pub fn from_nifti_bytes(bytes: &[u8], source_id: &str) -> Result<Self, VolumeError> {
        let img = nifti::decode(bytes)?;
        let (grid, data, code) = nifti::canonicalize(img.header.dims, &img.data, &img.affine)?;
        let mut vol = CtVolume::new(grid, data, source_id)?;
        vol.source_orientation = code;
        Ok(vol)
    }
}

#[inline]
pub(crate) fn clamp_hu(v: f32) -> f32 {
    if v.is_nan() {
        HU_MIN
    } else {
        v.clamp(HU_MIN, HU_MAX)
    }
}

/// Trilinear interpolation with clamp-to-edge.
#[inline]
pub(crate) fn trilinear(grid: &Grid, data: &[f32], idx: [f64; 3]) -> f32 {
    let [nx, ny, nz] = grid.dims;
    let mut base = [0usize; 3];
    let mut frac = [0f64; 3];
    for a in 0..3 {
        let n = grid.dims[a];
        let x = idx[a].clamp(0.0, (n - 1) as f64);
        let f = x.floor();
        let mut b = f as usize;
        let mut t = x - f;
        if b >= n - 1 {
            b = n - 1;
            t = 0.0;
        }
        base[a] = b;
        frac[a] = t;
    }
    let x1 = (base[0] + 1).min(nx - 1);
    let y1 = (base[1] + 1).min(ny - 1);
    let z1 = (base[2] + 1).min(nz - 1);
    let at = |i: usize, j: usize, k: usize| data[i + nx * (j + ny * k)] as f64;
    let [tx, ty, tz] = frac;
    let c00 = at(base[0], base[1], base[2]) * (1.0 - tx) + at(x1, base[1], base[2]) * tx;
    let c10 = at(base[0], y1, base[2]) * (1.0 - tx) + at(x1, y1, base[2]) * tx;
    let c01 = at(base[0], base[1], z1) * (1.0 - tx) + at(x1, base[1], z1) * tx;
    let c11 = at(base[0], y1, z1) * (1.0 - tx) + at(x1, y1, z1) * tx;
    let c0 = c00 * (1.0 - ty) + c10 * ty;
    let c1 = c01 * (1.0 - ty) + c11 * ty;
    (c0 * (1.0 - tz) + c1 * tz) as f32
}

fn read_file(path: &Path) -> Result<Vec<u8>, VolumeError> {
    std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            VolumeError::FileNotFound(path.to_path_buf())
        } else {
            VolumeError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })
}

/// Load a `.nii` / `.nii.gz` CT volume.
pub fn load_volume(path: &Path) -> Result<CtVolume, VolumeError> {
    let bytes = read_file(path)?;
    CtVolume::from_nifti_bytes(&bytes, &path.display().to_string())
}

/// Write `vol` as float32 NIfTI; gzip when the path ends in `.gz`.
pub fn save_volume(vol: &CtVolume, path: &Path) -> Result<(), VolumeError> {
    let gz = path.extension().is_some_and(|e| e == "gz");
    std::fs::write(path, vol.to_nifti_bytes(gz)).map_err(|e| VolumeError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Output dims of a resample: `ceil(extent / target)` per axis.
pub fn resampled_dims(grid: &Grid, target: [f64; 3]) -> [usize; 3] {
    let ext = grid.extent();
    std::array::from_fn(|a| (((ext[a] / target[a]) - 1e-9).ceil() as usize).max(1))
}

/// Trilinearly resample onto `target_spacing`, keeping the origin and covering
/// the same physical extent.
pub fn resample(vol: &CtVolume, target_spacing: [f64; 3]) -> Result<CtVolume, VolumeError> {
    if target_spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(VolumeError::DegenerateSpacing(target_spacing));
    }
    let src = vol.grid;
    let out_grid = Grid::new(resampled_dims(&src, target_spacing), target_spacing, src.origin);
    let ratio: [f64; 3] = std::array::from_fn(|a| target_spacing[a] / src.spacing[a]);
    let identity = ratio.iter().all(|&r| r == 1.0) && out_grid.dims == src.dims;
    let voxels = if identity {
        vol.voxels.clone()
    } else {
        let plane = out_grid.dims[0] * out_grid.dims[1];
        let mut out = vec![0f32; out_grid.len()];
        out.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
            for j in 0..out_grid.dims[1] {
                for i in 0..out_grid.dims[0] {
                    let idx = [
                        i as f64 * ratio[0],
                        j as f64 * ratio[1],
                        k as f64 * ratio[2],
                    ];
                    slab[i + out_grid.dims[0] * j] = trilinear(&src, &vol.voxels, idx);
                }
            }
        });
        out
    };
    let mut res = CtVolume::new(out_grid, voxels, vol.source_id.clone())?;
    res.source_orientation = vol.source_orientation.clone();
    Ok(res)
}

/// A grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.pixels[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    /// Quantize to 8-bit.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0 + 0.5) as u8)
            .collect()
    }
}

/// Display position `(column, row)` of voxel `(i, j)` within an axial slice of
/// a volume with `nx * ny` in-plane voxels.
#[inline]
pub fn slice_pixel(i: usize, j: usize, nx: usize, ny: usize) -> (usize, usize) {
    (nx - 1 - i, ny - 1 - j)
}

/// Windowed axial slice `z`, `nx` pixels wide and `ny` tall.
pub fn axial_slice(
    vol: &CtVolume,
    z: usize,
    preset: &WindowPreset,
) -> Result<GrayImage, VolumeError> {
    let [nx, ny, nz] = vol.dims();
    if z >= nz {
        return Err(VolumeError::SliceOutOfRange { z, nz });
    }
    let mut img = GrayImage::new(nx, ny);
    for j in 0..ny {
        for i in 0..nx {
            let (c, r) = slice_pixel(i, j, nx, ny);
            img.pixels[r * nx + c] = window_value(vol.get(i, j, z), preset);
        }
    }
    Ok(img)
}
