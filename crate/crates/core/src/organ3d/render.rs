use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mesh::{add, cross, dot, normalize, scale, sub, Mesh, Vec3};
use super::MeshError;
use crate::volume::GrayImage;

pub const AMBIENT: f64 = 0.15;
pub const DIFFUSE: f64 = 0.85;
/// Camera distance in bounding-sphere radii.
pub const DISTANCE_RADII: f64 = 4.0;
/// Fraction of the frame height covered by the bounding sphere.
pub const FILL_FRACTION: f64 = 0.8;
pub const TURNTABLE_ELEVATION_DEG: f64 = 20.0;

/// Pinhole camera orbiting `target`. Azimuth 0 looks from anterior (+y)
/// towards the target, with +z up; positive elevation raises the eye.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub target: Vec3,
    pub width: usize,
    pub height: usize,
    /// Vertical field of view, radians.
    pub fov_y: f64,
}

impl Camera {
    pub fn is_valid(&self) -> bool {
        self.distance.is_finite()
            && self.distance > 0.0
            && self.width > 0
            && self.height > 0
            && self.fov_y > 0.0
            && self.fov_y < PI
            && self.azimuth.is_finite()
            && self.elevation.is_finite()
            && self.target.iter().all(|v| v.is_finite())
    }

    pub fn eye(&self) -> Vec3 {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        add(
            self.target,
            scale([ce * sa, ce * ca, se], self.distance),
        )
    }

    /// Orthonormal `(right, up, forward)`.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let f = normalize(sub(self.target, self.eye())).unwrap_or([0.0, -1.0, 0.0]);
        let r = normalize(cross(f, [0.0, 0.0, 1.0])).unwrap_or([1.0, 0.0, 0.0]);
        let u = cross(r, f);
        (r, u, f)
    }

    /// Auto-fit: distance 4 radii and a field of view at which the bounding
    /// sphere spans [`FILL_FRACTION`] of the frame height.
    pub fn fit(center: Vec3, radius: f64, azimuth: f64, elevation: f64, size: (usize, usize)) -> Self {
        let radius = radius.max(1e-6);
        let distance = DISTANCE_RADII * radius;
        let half_angle = (radius / distance).asin();
        let fov_y = 2.0 * (half_angle.tan() / FILL_FRACTION).atan();
        Self {
            azimuth,
            elevation,
            distance,
            target: center,
            width: size.0,
            height: size.1,
            fov_y,
        }
    }
}

/// Shaded image plus the pixels the mesh covers.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendering {
    pub image: GrayImage,
    pub coverage: Vec<bool>,
}

/// Z-buffered Lambertian rendering. `light_dir` is the direction light
/// travels; a surface facing straight into it gets full intensity.
pub fn render_shaded(mesh: &Mesh, cam: &Camera, light_dir: Vec3) -> Result<Rendering, MeshError> {
    if mesh.triangles.is_empty() {
        return Err(MeshError::DegenerateMesh);
    }
    if !cam.is_valid() {
        return Err(MeshError::InvalidCamera);
    }
    let to_light = normalize(scale(light_dir, -1.0)).ok_or(MeshError::InvalidCamera)?;
    let (w, h) = (cam.width, cam.height);
    let eye = cam.eye();
    let (r, u, f) = cam.basis();
    let focal = (h as f64 / 2.0) / (cam.fov_y / 2.0).tan();

    // Screen x, y and view depth per vertex.
    let proj: Vec<[f64; 3]> = mesh
        .vertices
        .iter()
        .map(|&v| {
            let d = sub(v, eye);
            let z = dot(d, f);
            [
                w as f64 / 2.0 + focal * dot(d, r) / z,
                h as f64 / 2.0 - focal * dot(d, u) / z,
                z,
            ]
        })
        .collect();

    let mut depth = vec![f64::INFINITY; w * h];
    let mut image = GrayImage::new(w, h);
    let mut coverage = vec![false; w * h];
    let near = 1e-6 * cam.distance;

    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| proj[i as usize]);
        if a[2] <= near || b[2] <= near || c[2] <= near {
            continue;
        }
        let area = edge(a, b, c[0], c[1]);
        if area.abs() < 1e-12 {
            continue;
        }
        let min_x = a[0].min(b[0]).min(c[0]).floor().max(0.0) as usize;
        let max_x = (a[0].max(b[0]).max(c[0]).ceil() as isize).clamp(0, w as isize) as usize;
        let min_y = a[1].min(b[1]).min(c[1]).floor().max(0.0) as usize;
        let max_y = (a[1].max(b[1]).max(c[1]).ceil() as isize).clamp(0, h as isize) as usize;
        let [na, nb, nc] = t.map(|i| mesh.normals[i as usize]);
        for y in min_y..max_y {
            let py = y as f64 + 0.5;
            for x in min_x..max_x {
                let px = x as f64 + 0.5;
                let w0 = edge(b, c, px, py) / area;
                let w1 = edge(c, a, px, py) / area;
                let w2 = edge(a, b, px, py) / area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                // Perspective-correct interpolation through 1/z.
                let iz = w0 / a[2] + w1 / b[2] + w2 / c[2];
                let z = 1.0 / iz;
                let idx = y * w + x;
                if z >= depth[idx] {
                    continue;
                }
                depth[idx] = z;
                let (p0, p1, p2) = (w0 / a[2] * z, w1 / b[2] * z, w2 / c[2] * z);
                let n = add(add(scale(na, p0), scale(nb, p1)), scale(nc, p2));
                let n = normalize(n).unwrap_or(na);
                let shade = AMBIENT + DIFFUSE * dot(n, to_light).max(0.0);
                image.pixels[idx] = shade.clamp(0.0, 1.0) as f32;
                coverage[idx] = true;
            }
        }
    }
    Ok(Rendering { image, coverage })
}

#[inline]
fn edge(a: [f64; 3], b: [f64; 3], px: f64, py: f64) -> f64 {
    (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
}

/// Headlight for a camera: travels along the view direction, tilted to come
/// from the upper left of the frame.
pub fn headlight(cam: &Camera) -> Vec3 {
    let (r, u, f) = cam.basis();
    normalize(add(add(f, scale(u, -0.4)), scale(r, 0.3))).unwrap_or(f)
}

/// Frames at azimuths `2 pi k / n_frames`, fixed elevation, auto-fit distance
/// and a camera-fixed light.
pub fn turntable(mesh: &Mesh, n_frames: usize, size: (usize, usize)) -> Result<Vec<GrayImage>, MeshError> {
    if n_frames == 0 {
        return Err(MeshError::NoFrames);
    }
    let (center, radius) = mesh.bounding_sphere().ok_or(MeshError::DegenerateMesh)?;
    (0..n_frames)
        .into_par_iter()
        .map(|k| {
            let az = 2.0 * PI * k as f64 / n_frames as f64;
            let cam = Camera::fit(center, radius, az, TURNTABLE_ELEVATION_DEG.to_radians(), size);
            render_shaded(mesh, &cam, headlight(&cam)).map(|r| r.image)
        })
        .collect()
}
