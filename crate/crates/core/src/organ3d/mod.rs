//! Organ surfaces and turntable renderings.

mod mc;
mod mesh;
mod render;

use thiserror::Error;

pub use mc::marching_cubes;
pub use mesh::{Mesh, Vec3};
pub use render::{
    headlight, render_shaded, turntable, Camera, Rendering, AMBIENT, DIFFUSE, DISTANCE_RADII,
    FILL_FRACTION, TURNTABLE_ELEVATION_DEG,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MeshError {
    #[error("mask has no foreground voxels")]
    EmptyMask,
    #[error("mesh has no triangles")]
    DegenerateMesh,
    #[error("invalid camera or light direction")]
    InvalidCamera,
    #[error("turntable needs at least one frame")]
    NoFrames,
}
