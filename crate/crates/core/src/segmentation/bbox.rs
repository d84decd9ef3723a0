use serde::{Deserialize, Serialize};

use super::{OrganMask, SegError};

/// Inclusive axis-aligned voxel-index box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox3D {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BoundingBox3D {
    pub fn new(min: [usize; 3], max: [usize; 3]) -> Self {
        debug_assert!((0..3).all(|a| min[a] <= max[a]));
        Self { min, max }
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &BoundingBox3D) -> BoundingBox3D {
        BoundingBox3D {
            min: std::array::from_fn(|a| self.min[a].min(other.min[a])),
            max: std::array::from_fn(|a| self.max[a].max(other.max[a])),
        }
    }

    /// Voxel counts per axis.
    pub fn size(&self) -> [usize; 3] {
        std::array::from_fn(|a| self.max[a] - self.min[a] + 1)
    }

    pub fn fits(&self, dims: [usize; 3]) -> bool {
        (0..3).all(|a| self.min[a] <= self.max[a] && self.max[a] < dims[a])
    }
}

/// Tightest box around the foreground of `mask`.
pub fn bounding_box(mask: &OrganMask) -> Result<BoundingBox3D, SegError> {
    let [nx, ny, nz] = mask.dims();
    let plane = nx * ny;
    let vox = mask.voxels();
    let mut min = [usize::MAX; 3];
    let mut max = [0usize; 3];
    let mut any = false;
    for k in 0..nz {
        let slab = &vox[k * plane..(k + 1) * plane];
        if !slab.iter().any(|&v| v != 0) {
            continue;
        }
        any = true;
        min[2] = min[2].min(k);
        max[2] = k;
        for j in 0..ny {
            let row = &slab[j * nx..(j + 1) * nx];
            let Some(first) = row.iter().position(|&v| v != 0) else {
                continue;
            };
            let last = row.iter().rposition(|&v| v != 0).unwrap_or(first);
            min[1] = min[1].min(j);
            max[1] = max[1].max(j);
            min[0] = min[0].min(first);
            max[0] = max[0].max(last);
        }
    }
    if !any {
        return Err(SegError::EmptyMask {
            organ: mask.organ().to_string(),
        });
    }
    Ok(BoundingBox3D { min, max })
}

/// Hull of all `boxes`.
pub fn union_box(boxes: &[BoundingBox3D]) -> Result<BoundingBox3D, SegError> {
    let (first, rest) = boxes.split_first().ok_or(SegError::EmptyList)?;
    Ok(rest.iter().fold(*first, |acc, b| acc.hull(b)))
}
