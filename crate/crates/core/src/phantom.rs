//! Synthetic CT volumes with analytically known content, used by tests, the
//! acceptance suite and the demo generator.

use crate::grid::Grid;
use crate::registration::RigidTransform;
use crate::report::normalize_label;
use crate::segmentation::{MaskData, PhantomProvider, SegError, SegmentationProvider, Shape};
use crate::volume::CtVolume;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub center: [f64; 3],
    pub sigma: f64,
    pub amplitude: f64,
}

/// A smooth intensity field: constant background plus isotropic Gaussians,
/// defined at every physical point.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobField {
    pub base: f64,
    pub blobs: Vec<Blob>,
}

impl BlobField {
    /// Seven asymmetric blobs placed relative to the extent of `grid`, with
    /// values inside the soft-tissue window.
    pub fn standard(grid: &Grid) -> Self {
        let b = grid.bounds();
        let at = |f: [f64; 3]| -> [f64; 3] {
            std::array::from_fn(|a| b[a].0 + f[a] * (b[a].1 - b[a].0))
        };
        let ext = (0..3)
            .map(|a| b[a].1 - b[a].0)
            .fold(f64::INFINITY, f64::min)
            .max(1.0);
        let layout: [([f64; 3], f64, f64); 7] = [
            ([0.35, 0.40, 0.45], 0.10, 180.0),
            ([0.62, 0.35, 0.55], 0.08, -90.0),
            ([0.50, 0.65, 0.40], 0.12, 120.0),
            ([0.40, 0.58, 0.65], 0.07, 150.0),
            ([0.66, 0.62, 0.35], 0.06, -110.0),
            ([0.55, 0.45, 0.62], 0.05, 90.0),
            ([0.30, 0.68, 0.52], 0.06, -70.0),
        ];
        Self {
            base: 20.0,
            blobs: layout
                .iter()
                .map(|&(f, s, amp)| Blob {
                    center: at(f),
                    sigma: s * ext,
                    amplitude: amp,
                })
                .collect(),
        }
    }

    pub fn eval(&self, p: [f64; 3]) -> f64 {
        self.base
            + self
                .blobs
                .iter()
                .map(|b| {
                    let d2: f64 = (0..3).map(|a| (p[a] - b.center[a]).powi(2)).sum();
                    b.amplitude * (-d2 / (2.0 * b.sigma * b.sigma)).exp()
                })
                .sum::<f64>()
    }

    pub fn volume(&self, grid: &Grid, id: &str) -> CtVolume {
        CtVolume::from_fn(*grid, id, |[i, j, k]| {
            self.eval(grid.to_physical([i as f64, j as f64, k as f64])) as f32
        })
        .expect("phantom grid is valid")
    }

    /// The field as seen by a scan whose coordinates map onto this field's
    /// frame through `t`: voxel at `x` holds `f(t(x))`.
    pub fn volume_through(&self, grid: &Grid, t: &RigidTransform, id: &str) -> CtVolume {
        CtVolume::from_fn(*grid, id, |[i, j, k]| {
            self.eval(t.apply(grid.to_physical([i as f64, j as f64, k as f64]))) as f32
        })
        .expect("phantom grid is valid")
    }
}

/// Anatomical layout of [`chest`] in voxel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChestLayout {
    pub body: Shape,
    pub right_lung: Shape,
    pub left_lung: Shape,
    pub heart: Shape,
    pub spine: Shape,
    pub liver: Shape,
    /// A small dense nodule inside the right lung.
    pub nodule: Shape,
    pub right_lower_lobe: Shape,
    pub left_lower_lobe: Shape,
}

impl ChestLayout {
    pub fn for_dims(dims: [usize; 3]) -> Self {
        let [nx, ny, nz] = dims.map(|d| d as f64);
        let cx = (nx - 1.0) / 2.0;
        let cy = (ny - 1.0) / 2.0;
        let cz = (nz - 1.0) / 2.0;
        let ell = |c: [f64; 3], r: [f64; 3]| Shape::Ellipsoid {
            center: c,
            radii: r,
        };
        // RAS: +x is the patient's right, +y anterior, +z superior.
        Self {
            body: ell([cx, cy, cz], [0.45 * nx, 0.36 * ny, 2.0 * nz]),
            right_lung: ell(
                [cx + 0.2 * nx, cy, cz + 0.1 * nz],
                [0.14 * nx, 0.22 * ny, 0.36 * nz],
            ),
            left_lung: ell(
                [cx - 0.2 * nx, cy, cz + 0.1 * nz],
                [0.13 * nx, 0.21 * ny, 0.34 * nz],
            ),
            heart: ell(
                [cx - 0.03 * nx, cy + 0.12 * ny, cz - 0.05 * nz],
                [0.08 * nx, 0.09 * ny, 0.16 * nz],
            ),
            spine: ell(
                [cx, cy - 0.27 * ny, cz],
                [0.05 * nx, 0.05 * ny, 0.6 * nz],
            ),
            liver: ell(
                [cx + 0.15 * nx, cy + 0.05 * ny, cz - 0.38 * nz],
                [0.16 * nx, 0.16 * ny, 0.14 * nz],
            ),
            nodule: ell(
                [cx + 0.22 * nx, cy + 0.06 * ny, cz + 0.2 * nz],
                [0.03 * nx, 0.03 * ny, 0.06 * nz],
            ),
            right_lower_lobe: ell(
                [cx + 0.2 * nx, cy - 0.03 * ny, cz - 0.06 * nz],
                [0.09 * nx, 0.13 * ny, 0.13 * nz],
            ),
            left_lower_lobe: ell(
                [cx - 0.2 * nx, cy - 0.03 * ny, cz - 0.05 * nz],
                [0.08 * nx, 0.12 * ny, 0.12 * nz],
            ),
        }
    }

    /// Mask shapes for organ labels of the built-in vocabulary.
    pub fn organ_shapes(&self) -> Vec<(&'static str, Shape)> {
        vec![
            (
                "lung",
                Shape::Union {
                    parts: vec![self.right_lung.clone(), self.left_lung.clone()],
                },
            ),
            ("right lung", self.right_lung.clone()),
            ("left lung", self.left_lung.clone()),
            ("heart", self.heart.clone()),
            ("vertebrae", self.spine.clone()),
            ("liver", self.liver.clone()),
            ("right lung lower lobe", self.right_lower_lobe.clone()),
            ("left lung lower lobe", self.left_lower_lobe.clone()),
        ]
    }
}

/// Segmentation provider for [`chest`] phantoms: shapes from
/// [`ChestLayout`] scaled to each volume, invented ellipsoids for any other
/// label.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChestPhantom;

impl SegmentationProvider for ChestPhantom {
    fn name(&self) -> &str {
        "phantom"
    }

    fn segment(&self, vol: &CtVolume, organ: &str) -> Result<MaskData, SegError> {
        let dims = vol.dims();
        let wanted = normalize_label(organ);
        let shape = ChestLayout::for_dims(dims)
            .organ_shapes()
            .into_iter()
            .find(|(label, _)| *label == wanted)
            .map(|(_, s)| s)
            .unwrap_or_else(|| PhantomProvider::auto().shape_for(organ, dims));
        Ok(MaskData {
            grid: *vol.grid(),
            voxels: shape.rasterize(dims),
        })
    }
}

/// Synthetic chest CT on `grid`: air outside an elliptic body, two lungs,
/// heart, liver, a bony spine and optionally a nodule in the right lung.
pub fn chest(grid: &Grid, id: &str, with_nodule: bool) -> CtVolume {
    let layout = ChestLayout::for_dims(grid.dims);
    CtVolume::from_fn(*grid, id, |p| {
        let inside = |s: &Shape| s.contains(p);
        if !inside(&layout.body) {
            return -1000.0;
        }
        if with_nodule && inside(&layout.nodule) {
            return 60.0;
        }
        if inside(&layout.spine) {
            return 700.0;
        }
        if inside(&layout.right_lung) || inside(&layout.left_lung) {
            return -820.0;
        }
        if inside(&layout.heart) {
            return 45.0;
        }
        if inside(&layout.liver) {
            return 60.0;
        }
        // Smooth variation so the soft tissue is not perfectly flat.
        let [i, j, k] = p.map(|v| v as f32);
        30.0 + 8.0 * (0.21 * i).sin() * (0.17 * j).cos() + 4.0 * (0.3 * k).sin()
    })
    .expect("phantom grid is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_field_is_in_soft_tissue_range() {
        let g = Grid::new([32; 3], [1.0; 3], [0.0; 3]);
        let (lo, hi) = BlobField::standard(&g).volume(&g, "b").min_max();
        assert!(lo >= -160.0 && hi <= 240.0, "{lo} {hi}");
        assert!(hi - lo > 100.0);
    }

    #[test]
    fn chest_has_air_lung_and_bone() {
        let g = Grid::new([64, 64, 40], [1.0, 1.0, 3.0], [0.0; 3]);
        let v = chest(&g, "chest", true);
        assert_eq!(v.get(0, 0, 0), -1000.0);
        let lay = ChestLayout::for_dims(g.dims);
        let Shape::Ellipsoid { center, .. } = lay.right_lung else {
            unreachable!()
        };
        let c = center.map(|x| x.round() as usize);
        assert_eq!(v.get(c[0], c[1], c[2]), -820.0);
        let (_, hi) = v.min_max();
        assert_eq!(hi, 700.0);
    }

    #[test]
    fn lower_lobes_sit_inside_their_lungs() {
        let dims = [64, 64, 40];
        let lay = ChestLayout::for_dims(dims);
        for (lobe, lung) in [
            (&lay.right_lower_lobe, &lay.right_lung),
            (&lay.left_lower_lobe, &lay.left_lung),
        ] {
            let inside = lobe.rasterize(dims);
            let outer = lung.rasterize(dims);
            assert!(inside.iter().any(|&v| v == 1));
            assert!(inside.iter().zip(&outer).all(|(&a, &b)| a <= b));
        }
    }

    #[test]
    fn chest_phantom_scales_with_the_volume() {
        use crate::segmentation::SegmentationProvider;
        for dims in [[32, 32, 20], [64, 64, 40]] {
            let g = Grid::new(dims, [1.0, 1.0, 3.0], [0.0; 3]);
            let v = chest(&g, "c", false);
            let m = ChestPhantom.segment(&v, "Right Lung").unwrap();
            let want = ChestLayout::for_dims(dims).right_lung.rasterize(dims);
            assert_eq!(m.voxels, want);
            let other = ChestPhantom.segment(&v, "spleen").unwrap();
            assert!(other.voxels.iter().any(|&x| x == 1));
        }
    }
}
