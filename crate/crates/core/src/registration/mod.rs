//! Rigid alignment of a healthy reference scan onto the query scan.
//!
//! Transforms map moving-volume physical coordinates to fixed-volume physical
//! coordinates. Resampling a moving volume onto a fixed grid therefore pulls
//! every output voxel through the inverse transform.

mod optimizer;
mod transform;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::segmentation::OrganMask;
use crate::volume::{CtVolume, HU_MIN};

pub use optimizer::{register_rigid, InitMode, LevelTrace, RegistrationConfig, RegistrationResult};
pub use transform::{matrix_to_angles, rotation_matrix, wrap_angle, Mat3, RigidTransform};

/// Default value for samples that fall outside the moving volume (air).
pub const DEFAULT_FILL: f32 = HU_MIN;

#[derive(Debug, Error)]
pub enum RegError {
    #[error("volumes do not overlap in physical space")]
    NoOverlap,
    #[error("degenerate target grid {0:?}")]
    DegenerateGrid(Grid),
    #[error("grids differ: {a:?} vs {b:?}")]
    GridMismatch { a: Grid, b: Grid },
    #[error("no foreground of {organ:?} lands inside the target grid")]
    EmptyMask { organ: String },
    #[error("invalid registration config: {0}")]
    InvalidConfig(String),
    #[error("invalid transform record: {0}")]
    InvalidTransform(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

/// Affine map from target voxel index to moving voxel index under `t`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct IndexMap {
    /// Column `a` is the moving-index step for one target step along axis `a`.
    pub step: [[f64; 3]; 3],
    pub offset: [f64; 3],
}

impl IndexMap {
    pub fn new(target: &Grid, source: &Grid, t: &RigidTransform) -> Self {
        let o = source.to_index(t.apply_inverse(target.to_physical([0.0; 3])));
        let rt = transform::transpose(&t.matrix());
        let mut step = [[0.0; 3]; 3];
        for (a, col) in step.iter_mut().enumerate() {
            let mut d = [0.0; 3];
            d[a] = target.spacing[a];
            let m = transform::mat_vec(&rt, d);
            *col = std::array::from_fn(|b| m[b] / source.spacing[b]);
        }
        Self { step, offset: o }
    }

    #[inline]
    pub fn map(&self, idx: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|b| {
            self.offset[b]
                + self.step[0][b] * idx[0]
                + self.step[1][b] * idx[1]
                + self.step[2][b] * idx[2]
        })
    }
}

/// Resample `vol` onto `target` through `t` with air fill.
pub fn apply_transform(
    vol: &CtVolume,
    t: &RigidTransform,
    target: &Grid,
    interp: Interpolation,
) -> Result<CtVolume, RegError> {
    apply_transform_with_fill(vol, t, target, interp, DEFAULT_FILL)
}

/// Resample `vol` onto `target` through `t`; voxels whose preimage lies
/// outside the source lattice take `fill`.
pub fn apply_transform_with_fill(
    vol: &CtVolume,
    t: &RigidTransform,
    target: &Grid,
    interp: Interpolation,
    fill: f32,
) -> Result<CtVolume, RegError> {
    if !target.is_valid() {
        return Err(RegError::DegenerateGrid(*target));
    }
    let src = vol.grid();
    let map = IndexMap::new(target, src, t);
    let [nx, ny, _] = target.dims;
    let data: Vec<f32> = (0..target.len())
        .into_par_iter()
        .with_min_len(nx * ny)
        .map(|idx| {
            let c = target.coords(idx);
            let p = map.map([c[0] as f64, c[1] as f64, c[2] as f64]);
            if !src.contains_index(p) {
                return fill;
            }
            match interp {
                Interpolation::Trilinear => vol.sample_trilinear(p),
                Interpolation::Nearest => {
                    let q = nearest(p, src.dims);
                    vol.get(q[0], q[1], q[2])
                }
            }
        })
        .collect();
    CtVolume::new(*target, data, registered_ref(vol.source_id()))
        .map_err(|_| RegError::DegenerateGrid(*target))
}

/// Identifier given to volumes and masks moved onto another grid.
pub fn registered_ref(source: &str) -> String {
    format!("{source}#registered")
}

#[inline]
fn nearest(p: [f64; 3], dims: [usize; 3]) -> [usize; 3] {
    std::array::from_fn(|a| ((p[a] + 0.5).floor().max(0.0) as usize).min(dims[a] - 1))
}

/// Nearest-neighbour resampling of a mask onto `target` through `t`.
pub fn transform_mask(
    mask: &OrganMask,
    t: &RigidTransform,
    target: &Grid,
) -> Result<OrganMask, RegError> {
    if !target.is_valid() {
        return Err(RegError::DegenerateGrid(*target));
    }
    let src = mask.grid();
    let map = IndexMap::new(target, src, t);
    let voxels: Vec<u8> = (0..target.len())
        .into_par_iter()
        .with_min_len(target.dims[0] * target.dims[1])
        .map(|idx| {
            let c = target.coords(idx);
            let p = map.map([c[0] as f64, c[1] as f64, c[2] as f64]);
            if !src.contains_index(p) {
                return 0;
            }
            let q = nearest(p, src.dims);
            u8::from(mask.get(q[0], q[1], q[2]))
        })
        .collect();
    OrganMask::new(mask.organ(), *target, voxels, registered_ref(mask.volume_ref())).map_err(
        |_| RegError::EmptyMask {
            organ: mask.organ().to_string(),
        },
    )
}

/// Mean squared HU difference of two volumes on the same lattice.
pub fn similarity_mse(a: &CtVolume, b: &CtVolume) -> Result<f64, RegError> {
    if !a.grid().same_lattice(b.grid()) {
        return Err(RegError::GridMismatch {
            a: *a.grid(),
            b: *b.grid(),
        });
    }
    let plane = a.dims()[0] * a.dims()[1];
    let partial: Vec<f64> = a
        .voxels()
        .par_chunks(plane)
        .zip(b.voxels().par_chunks(plane))
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(&p, &q)| {
                    let d = p as f64 - q as f64;
                    d * d
                })
                .sum::<f64>()
        })
        .collect();
    Ok(partial.iter().sum::<f64>() / a.voxels().len() as f64)
}

/// Serialized form of a transform: `{"parameters": [rx, ry, rz, tx, ty, tz], "center": [x, y, z]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformRecord {
    pub parameters: [f64; 6],
    pub center: [f64; 3],
}

impl TransformRecord {
    pub fn from_json(text: &str) -> Result<RigidTransform, RegError> {
        let rec: TransformRecord =
            serde_json::from_str(text).map_err(|e| RegError::InvalidTransform(e.to_string()))?;
        rec.into_transform()
    }

    pub fn into_transform(self) -> Result<RigidTransform, RegError> {
        if !self.parameters.iter().chain(&self.center).all(|v| v.is_finite()) {
            return Err(RegError::InvalidTransform("non-finite value".into()));
        }
        Ok(RigidTransform::from_params(self.parameters, self.center))
    }
}

impl RigidTransform {
    pub fn to_record(&self) -> TransformRecord {
        TransformRecord {
            parameters: self.params(),
            center: self.center,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_record()).expect("plain numbers serialize")
    }
}
