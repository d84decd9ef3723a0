use serde::{Deserialize, Serialize};

/// Voxel lattice geometry in the canonical (RAS) frame.
///
/// Voxel `(i, j, k)` sits at physical position `origin + (i, j, k) * spacing`;
/// the flat storage index is `i + nx * (j + ny * k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Self {
        Self {
            dims,
            spacing,
            origin,
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dims all >= 1 and spacing components finite and > 0.
    pub fn is_valid(&self) -> bool {
        self.dims.iter().all(|&d| d >= 1)
            && self.spacing.iter().all(|&s| s.is_finite() && s > 0.0)
            && self.origin.iter().all(|o| o.is_finite())
            && self
                .dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .is_some()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Physical position (mm) of a (possibly fractional) voxel index.
    #[inline]
    pub fn to_physical(&self, index: [f64; 3]) -> [f64; 3] {
        [
            self.origin[0] + index[0] * self.spacing[0],
            self.origin[1] + index[1] * self.spacing[1],
            self.origin[2] + index[2] * self.spacing[2],
        ]
    }

    /// Continuous voxel index of a physical position.
    #[inline]
    pub fn to_index(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    /// Physical extent per axis, `dims * spacing`.
    pub fn extent(&self) -> [f64; 3] {
        [
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        ]
    }

    /// Physical bounds of the voxel centres, per axis `(lo, hi)`.
    pub fn bounds(&self) -> [(f64, f64); 3] {
        let mut out = [(0.0, 0.0); 3];
        for (a, slot) in out.iter_mut().enumerate() {
            let lo = self.origin[a];
            let hi = self.origin[a] + (self.dims[a] as f64 - 1.0) * self.spacing[a];
            *slot = (lo, hi);
        }
        out
    }

    /// Physical centre of the voxel-centre bounding box.
    pub fn center(&self) -> [f64; 3] {
        self.to_physical([
            (self.dims[0] as f64 - 1.0) / 2.0,
            (self.dims[1] as f64 - 1.0) / 2.0,
            (self.dims[2] as f64 - 1.0) / 2.0,
        ])
    }

    /// Voxel centres at `index` lie within the lattice (with a tiny tolerance).
    #[inline]
    pub fn contains_index(&self, index: [f64; 3]) -> bool {
        const EPS: f64 = 1e-6;
        (0..3).all(|a| index[a] >= -EPS && index[a] <= self.dims[a] as f64 - 1.0 + EPS)
    }

    pub fn same_lattice(&self, other: &Grid) -> bool {
        const TOL: f64 = 1e-4;
        self.dims == other.dims
            && (0..3).all(|a| {
                (self.spacing[a] - other.spacing[a]).abs() <= TOL
                    && (self.origin[a] - other.origin[a]).abs() <= TOL
            })
    }
}
