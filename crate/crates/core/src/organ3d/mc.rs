//! Marching cubes on binary masks at iso-level 0.5.
//!
//! Surface vertices sit at cube-edge midpoints. Rather than a hand-typed
//! case table, the 256 configurations are derived from the cube faces: each
//! face contributes oriented segments between its crossed edges (ambiguous
//! faces keep their two inside corners apart), the segments close into loops,
//! and every loop is fan-triangulated. Neighbouring cubes make the same choice
//! on a shared face, so the result is closed.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use super::mesh::Mesh;
use super::MeshError;
use crate::segmentation::OrganMask;

/// Cube corner `c` has offset `(c & 1, c >> 1 & 1, c >> 2 & 1)`.
fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// The 12 cube edges as `(lower corner, axis)`, with the upper corner being
/// `lower | 1 << axis`.
fn edges() -> [(usize, usize); 12] {
    let mut out = [(0, 0); 12];
    let mut n = 0;
    for axis in 0..3 {
        for c in 0..8 {
            if c >> axis & 1 == 0 {
                out[n] = (c, axis);
                n += 1;
            }
        }
    }
    out
}

fn edge_index(a: usize, b: usize) -> usize {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let axis = (lo ^ hi).trailing_zeros() as usize;
    edges()
        .iter()
        .position(|&e| e == (lo, axis))
        .expect("corners share an edge")
}

fn edge_midpoint(e: usize) -> [f64; 3] {
    let (c, axis) = edges()[e];
    let o = corner_offset(c);
    let mut p = o.map(|v| v as f64);
    p[axis] += 0.5;
    p
}

/// Faces as (axis, side, corners in cyclic order).
fn faces() -> Vec<(usize, usize, [usize; 4])> {
    let mut out = Vec::with_capacity(6);
    for axis in 0..3 {
        let u = (axis + 1) % 3;
        let v = (axis + 2) % 3;
        for side in 0..2 {
            let corner = |du: usize, dv: usize| (side << axis) | (du << u) | (dv << v);
            out.push((
                axis,
                side,
                [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)],
            ));
        }
    }
    out
}

type Case = Vec<[u8; 3]>;

fn build_case(config: usize) -> Case {
    let inside = |c: usize| config >> c & 1 == 1;
    // successor[e] = next edge along the oriented boundary loop.
    let mut successor: [Option<usize>; 12] = [None; 12];
    for (axis, side, corners) in faces() {
        let mut normal = [0.0; 3];
        normal[axis] = if side == 1 { 1.0 } else { -1.0 };
        let state = corners.map(inside);
        let edge_of = |i: usize| edge_index(corners[i], corners[(i + 1) % 4]);
        let crossed: Vec<usize> = (0..4).filter(|&i| state[i] != state[(i + 1) % 4]).collect();
        // Pairs of face edges (by position) joined by a segment, each with an
        // inside corner on its inner side.
        let mut segments: Vec<(usize, usize, usize)> = Vec::new();
        match crossed.len() {
            0 => {}
            2 => {
                let ref_corner = (0..4).find(|&i| state[i]).expect("a crossed face has an inside corner");
                segments.push((crossed[0], crossed[1], corners[ref_corner]));
            }
            4 => {
                // Inside corner i is cut off by the edges before and after it.
                for i in (0..4).filter(|&i| state[i]) {
                    segments.push(((i + 3) % 4, i, corners[i]));
                }
            }
            _ => unreachable!("a 4-cycle has an even number of sign changes"),
        }
        for (ea, eb, cin) in segments {
            let (a, b) = (edge_of(ea), edge_of(eb));
            let pa = edge_midpoint(a);
            let pb = edge_midpoint(b);
            let d = sub(pb, pa);
            let to_inside = sub(corner_offset(cin).map(|v| v as f64), pa);
            // n x d must point away from the inside corner.
            let (from, to) = if dot(cross(normal, d), to_inside) < 0.0 {
                (a, b)
            } else {
                (b, a)
            };
            debug_assert!(successor[from].is_none());
            successor[from] = Some(to);
        }
    }
    let mut visited = [false; 12];
    let mut tris = Vec::new();
    for start in 0..12 {
        if visited[start] || successor[start].is_none() {
            continue;
        }
        let mut lp = vec![start];
        visited[start] = true;
        let mut cur = successor[start].expect("checked");
        while cur != start {
            visited[cur] = true;
            lp.push(cur);
            cur = successor[cur].expect("boundary loops are closed");
        }
        for i in 1..lp.len() - 1 {
            tris.push([lp[0] as u8, lp[i] as u8, lp[i + 1] as u8]);
        }
    }
    tris
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn case_table() -> &'static [Case] {
    static TABLE: OnceLock<Vec<Case>> = OnceLock::new();
    TABLE.get_or_init(|| (0..256).map(build_case).collect())
}

/// Extract the iso-0.5 surface of `mask`, padded by one empty voxel on every
/// side so the surface is closed. Vertices are in the mask's physical space.
pub fn marching_cubes(mask: &OrganMask) -> Result<Mesh, MeshError> {
    if mask.foreground_count() == 0 {
        return Err(MeshError::EmptyMask);
    }
    let grid = *mask.grid();
    let [nx, ny, nz] = grid.dims;
    // Padded lattice has dims n + 2; cubes span padded corners 0..n+1.
    let [px, py, pz] = [nx + 2, ny + 2, nz + 2];
    let value = |i: usize, j: usize, k: usize| -> bool {
        i >= 1 && j >= 1 && k >= 1 && i <= nx && j <= ny && k <= nz && mask.get(i - 1, j - 1, k - 1)
    };
    let table = case_table();
    let edge_list = edges();

    // Triangles as global edge keys, produced slab by slab.
    let slabs: Vec<Vec<[u64; 3]>> = (0..pz - 1)
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::new();
            for j in 0..py - 1 {
                for i in 0..px - 1 {
                    let mut config = 0usize;
                    for c in 0..8 {
                        let o = corner_offset(c);
                        if value(i + o[0], j + o[1], k + o[2]) {
                            config |= 1 << c;
                        }
                    }
                    if config == 0 || config == 255 {
                        continue;
                    }
                    for tri in &table[config] {
                        out.push(tri.map(|e| {
                            let (c, axis) = edge_list[e as usize];
                            let o = corner_offset(c);
                            let lin = (i + o[0]) + px * ((j + o[1]) + py * (k + o[2]));
                            (lin as u64) * 3 + axis as u64
                        }));
                    }
                }
            }
            out
        })
        .collect();

    let mut ids: HashMap<u64, u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(slabs.iter().map(Vec::len).sum());
    for slab in slabs {
        for tri in slab {
            triangles.push(tri.map(|key| {
                *ids.entry(key).or_insert_with(|| {
                    let axis = (key % 3) as usize;
                    let lin = (key / 3) as usize;
                    let mut p = [
                        (lin % px) as f64 - 1.0,
                        ((lin / px) % py) as f64 - 1.0,
                        (lin / (px * py)) as f64 - 1.0,
                    ];
                    p[axis] += 0.5;
                    vertices.push(grid.to_physical(p));
                    (vertices.len() - 1) as u32
                })
            }));
        }
    }
    Ok(Mesh::new(vertices, triangles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn mask(dims: [usize; 3], spacing: [f64; 3], f: impl Fn([usize; 3]) -> bool) -> OrganMask {
        let g = Grid::new(dims, spacing, [0.0; 3]);
        let v = (0..g.len()).map(|i| u8::from(f(g.coords(i)))).collect();
        OrganMask::new("liver", g, v, "t").unwrap()
    }

    #[test]
    fn every_case_closes_and_points_outward() {
        for config in 1..255 {
            let tris = &case_table()[config];
            assert!(!tris.is_empty(), "case {config}");
            // The polygon normals must point from inside corners to outside ones:
            // summed normal has positive dot with (outside centroid - inside centroid).
            let (mut cin, mut cout, mut nin, mut nout) = ([0.0; 3], [0.0; 3], 0.0, 0.0);
            for c in 0..8 {
                let p = corner_offset(c).map(|v| v as f64);
                if config >> c & 1 == 1 {
                    cin = [cin[0] + p[0], cin[1] + p[1], cin[2] + p[2]];
                    nin += 1.0;
                } else {
                    cout = [cout[0] + p[0], cout[1] + p[1], cout[2] + p[2]];
                    nout += 1.0;
                }
            }
            let dir = sub(cout.map(|v| v / nout), cin.map(|v| v / nin));
            let mut n = [0.0; 3];
            for t in tris {
                let [a, b, c] = t.map(|e| edge_midpoint(e as usize));
                let x = cross(sub(b, a), sub(c, a));
                n = [n[0] + x[0], n[1] + x[1], n[2] + x[2]];
            }
            if dot(dir, dir) > 1e-12 {
                assert!(dot(n, dir) > 0.0, "case {config}");
            }
        }
    }

    #[test]
    fn cube_volume_within_five_percent() {
        let m = mask([20, 20, 20], [1.0; 3], |p| p.iter().all(|&x| (5..15).contains(&x)));
        let mesh = marching_cubes(&m).unwrap();
        assert!(mesh.is_watertight());
        let v = mesh.signed_volume();
        assert!((v - 1000.0).abs() / 1000.0 <= 0.05, "{v}");
    }

    #[test]
    fn single_voxel() {
        let m = mask([3, 3, 3], [1.0; 3], |p| p == [1, 1, 1]);
        let mesh = marching_cubes(&m).unwrap();
        assert!(mesh.is_watertight());
        let v = mesh.signed_volume();
        assert!(v > 0.0 && v <= 1.0, "{v}");
        assert_eq!(mesh.triangles.len(), 8);
    }

    fn sphere(r: f64) -> OrganMask {
        let n = (2.0 * r).ceil() as usize + 4;
        let c = (n as f64 - 1.0) / 2.0;
        mask([n; 3], [1.0; 3], |p| {
            p.iter().map(|&x| (x as f64 - c).powi(2)).sum::<f64>() <= r * r
        })
    }

    #[test]
    fn sphere_area_within_ten_percent() {
        let mesh = marching_cubes(&sphere(12.0)).unwrap();
        let a = mesh.surface_area();
        let expect = 4.0 * PI * 144.0;
        assert!((a - expect).abs() / expect <= 0.10, "{a} vs {expect}");
        assert!(mesh.is_watertight());
    }

    #[test]
    fn volume_error_shrinks_with_radius() {
        // Relative to the voxel count the mesh approximates.
        let err = |r: f64| {
            let m = sphere(r);
            let v = marching_cubes(&m).unwrap().signed_volume();
            let voxels = m.foreground_count() as f64;
            (v - voxels).abs() / voxels
        };
        for r in [4.0, 6.0, 8.0, 12.0] {
            assert!(err(2.0 * r) < err(r), "r = {r}");
        }
    }

    #[test]
    fn boundary_touching_mask_is_closed() {
        let m = mask([4, 5, 6], [0.8, 0.8, 3.0], |_| true);
        let mesh = marching_cubes(&m).unwrap();
        assert!(mesh.is_watertight());
        assert!(mesh.signed_volume() > 0.0);
        let (lo, hi) = mesh.bounds().unwrap();
        assert!((lo[0] + 0.4).abs() < 1e-9 && (hi[2] - 16.5).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn random_masks_are_watertight_and_positive(
            dims in prop::array::uniform3(1usize..7),
            seed in any::<u64>(),
        ) {
            let mut s = seed | 1;
            let g = Grid::new(dims, [1.0; 3], [0.0; 3]);
            let mut v: Vec<u8> = (0..g.len()).map(|_| {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                u8::from(s % 3 == 0)
            }).collect();
            v[0] = 1;
            let m = OrganMask::new("x", g, v, "t").unwrap();
            let mesh = marching_cubes(&m).unwrap();
            prop_assert!(mesh.indices_in_range());
            prop_assert!(mesh.is_watertight());
            prop_assert!(mesh.signed_volume() > 0.0);
            for n in &mesh.normals {
                prop_assert!((super::super::mesh::norm(*n) - 1.0).abs() < 1e-4);
            }
        }
    }
}
