use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::transform::RigidTransform;
use super::{IndexMap, RegError};
use crate::grid::Grid;
use crate::volume::{trilinear, CtVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Start from the translation that aligns the two grid centres.
    Centers,
    Identity,
}

/// Multi-resolution schedule. Vectors indexed by level run coarse to fine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    /// Block-average downsampling factor per level.
    pub levels: Vec<usize>,
    pub translation_step_mm: Vec<f64>,
    pub rotation_step_deg: Vec<f64>,
    pub min_translation_step_mm: f64,
    pub min_rotation_step_deg: f64,
    /// Sweep cap per level; hitting it clears the `converged` flag.
    pub max_sweeps: usize,
    /// Fixed-volume samples per metric evaluation; larger levels are visited
    /// on a regular stride.
    pub max_samples: usize,
    /// HU range both volumes are clamped to before comparison.
    pub intensity_range: [f32; 2],
    /// Candidates whose overlap drops below this fraction of the level's
    /// starting overlap are rejected.
    pub min_overlap_fraction: f64,
    pub init: InitMode,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            levels: vec![4, 2, 1],
            translation_step_mm: vec![8.0, 4.0, 2.0],
            rotation_step_deg: vec![4.0, 2.0, 1.0],
            min_translation_step_mm: 0.05,
            min_rotation_step_deg: 0.05,
            max_sweeps: 200,
            max_samples: 1 << 18,
            intensity_range: [-160.0, 240.0],
            min_overlap_fraction: 0.5,
            init: InitMode::Centers,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<(), RegError> {
        let bad = |m: &str| Err(RegError::InvalidConfig(m.to_string()));
        let n = self.levels.len();
        if n == 0 {
            return bad("at least one level is required");
        }
        if self.levels.iter().any(|&f| f == 0) {
            return bad("downsampling factors must be >= 1");
        }
        if self.translation_step_mm.len() != n || self.rotation_step_deg.len() != n {
            return bad("step schedules must have one entry per level");
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self
            .translation_step_mm
            .iter()
            .chain(&self.rotation_step_deg)
            .all(|&s| positive(s))
            || !positive(self.min_translation_step_mm)
            || !positive(self.min_rotation_step_deg)
        {
            return bad("step sizes must be finite and > 0");
        }
        if self.max_sweeps == 0 || self.max_samples == 0 {
            return bad("max_sweeps and max_samples must be >= 1");
        }
        let [lo, hi] = self.intensity_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad("intensity_range must be an increasing pair");
        }
        if !(self.min_overlap_fraction > 0.0 && self.min_overlap_fraction <= 1.0) {
            return bad("min_overlap_fraction must be in (0, 1]");
        }
        Ok(())
    }
}

/// Optimizer history for one resolution level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub factor: usize,
    pub dims: [usize; 3],
    pub stride: usize,
    pub evaluations: usize,
    /// Best metric before the first sweep and after every sweep.
    pub best_per_sweep: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub transform: RigidTransform,
    /// Metric of the initial transform at full resolution.
    pub initial_metric: f64,
    /// Metric of `transform` at full resolution; never above `initial_metric`.
    pub final_metric: f64,
    /// False when some level stopped on the sweep cap; `transform` is still
    /// the best one found.
    pub converged: bool,
    pub levels: Vec<LevelTrace>,
}

struct Level {
    fixed_grid: Grid,
    fixed: Vec<f32>,
    moving_grid: Grid,
    moving: Vec<f32>,
    stride: usize,
}

impl Level {
    fn new(fixed: &CtVolume, moving: &CtVolume, factor: usize, cfg: &RegistrationConfig) -> Self {
        let [lo, hi] = cfg.intensity_range;
        let clamp = |v: &[f32]| v.iter().map(|x| x.clamp(lo, hi)).collect::<Vec<f32>>();
        let (fixed_grid, fixed) = downsample(fixed.grid(), &clamp(fixed.voxels()), factor);
        let (moving_grid, moving) = downsample(moving.grid(), &clamp(moving.voxels()), factor);
        let stride = sample_stride(fixed_grid.dims, cfg.max_samples);
        Self {
            fixed_grid,
            fixed,
            moving_grid,
            moving,
            stride,
        }
    }

    /// Sum of squared differences and overlap count.
    fn evaluate(&self, t: &RigidTransform) -> (f64, usize) {
        let map = IndexMap::new(&self.fixed_grid, &self.moving_grid, t);
        let [nx, ny, nz] = self.fixed_grid.dims;
        let s = self.stride;
        let ks: Vec<usize> = (0..nz).step_by(s).collect();
        let partial: Vec<(f64, usize)> = ks
            .par_iter()
            .map(|&k| {
                let mut sum = 0.0;
                let mut count = 0usize;
                for j in (0..ny).step_by(s) {
                    for i in (0..nx).step_by(s) {
                        let p = map.map([i as f64, j as f64, k as f64]);
                        if !self.moving_grid.contains_index(p) {
                            continue;
                        }
                        let m = trilinear(&self.moving_grid, &self.moving, p) as f64;
                        let d = self.fixed[i + nx * (j + ny * k)] as f64 - m;
                        sum += d * d;
                        count += 1;
                    }
                }
                (sum, count)
            })
            .collect();
        partial
            .iter()
            .fold((0.0, 0), |(s, c), &(ps, pc)| (s + ps, c + pc))
    }
}

fn mean_or_inf((sum, count): (f64, usize)) -> f64 {
    if count == 0 {
        f64::INFINITY
    } else {
        sum / count as f64
    }
}

/// Smallest stride whose sample lattice has at most `max` points.
fn sample_stride(dims: [usize; 3], max: usize) -> usize {
    let mut s = 1usize;
    loop {
        let n: usize = dims.iter().map(|&d| d.div_ceil(s)).product();
        if n <= max {
            return s;
        }
        s += 1;
    }
}

/// Block average by `factor` per axis (capped at the axis length). Partial
/// blocks at the far edge are dropped; the output origin is the centre of the
/// first block.
fn downsample(grid: &Grid, data: &[f32], factor: usize) -> (Grid, Vec<f32>) {
    if factor == 1 {
        return (*grid, data.to_vec());
    }
    let f: [usize; 3] = std::array::from_fn(|a| factor.min(grid.dims[a]).max(1));
    let dims: [usize; 3] = std::array::from_fn(|a| grid.dims[a] / f[a]);
    let out_grid = Grid::new(
        dims,
        std::array::from_fn(|a| grid.spacing[a] * f[a] as f64),
        std::array::from_fn(|a| grid.origin[a] + (f[a] as f64 - 1.0) / 2.0 * grid.spacing[a]),
    );
    let norm = 1.0 / (f[0] * f[1] * f[2]) as f64;
    let [nx, ny, _] = grid.dims;
    let out: Vec<f32> = (0..out_grid.len())
        .into_par_iter()
        .map(|idx| {
            let [bi, bj, bk] = out_grid.coords(idx);
            let mut acc = 0.0f64;
            for k in bk * f[2]..(bk + 1) * f[2] {
                for j in bj * f[1]..(bj + 1) * f[1] {
                    let row = nx * (j + ny * k);
                    for i in bi * f[0]..(bi + 1) * f[0] {
                        acc += data[row + i] as f64;
                    }
                }
            }
            (acc * norm) as f32
        })
        .collect();
    (out_grid, out)
}

fn initial_transform(fixed: &Grid, moving: &Grid, mode: InitMode) -> RigidTransform {
    let cf = fixed.center();
    match mode {
        InitMode::Identity => RigidTransform::identity(cf),
        InitMode::Centers => {
            let cm = moving.center();
            RigidTransform::new([0.0; 3], std::array::from_fn(|a| cf[a] - cm[a]), cf)
        }
    }
}

/// Whether the moving lattice, carried through `t`, touches the fixed lattice.
fn extents_overlap(fixed: &Grid, moving: &Grid, t: &RigidTransform) -> bool {
    let mb = moving.bounds();
    let fb = fixed.bounds();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for corner in 0..8 {
        let p: [f64; 3] =
            std::array::from_fn(|a| if corner >> a & 1 == 0 { mb[a].0 } else { mb[a].1 });
        let q = t.apply(p);
        for a in 0..3 {
            lo[a] = lo[a].min(q[a]);
            hi[a] = hi[a].max(q[a]);
        }
    }
    (0..3).all(|a| {
        let tol = 0.5 * fixed.spacing[a].max(moving.spacing[a]);
        lo[a] <= fb[a].1 + tol && hi[a] >= fb[a].0 - tol
    })
}

fn lex_less(a: &[f64; 6], b: &[f64; 6]) -> bool {
    for i in 0..6 {
        match a[i].total_cmp(&b[i]) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// Rigidly register `moving` onto `fixed`, minimising mean squared HU
/// difference over the overlap.
///
/// Each level runs coordinate descent: every sweep tries `p[d] +- step[d]`
/// for the six parameters in order and keeps a candidate only if it strictly
/// improves the best metric (ties between the two candidates go to the
/// lexicographically smaller parameter vector). A sweep without improvement
/// halves all steps; the level ends once every step is below its minimum.
pub fn register_rigid(
    fixed: &CtVolume,
    moving: &CtVolume,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult, RegError> {
    cfg.validate()?;
    let init = initial_transform(fixed.grid(), moving.grid(), cfg.init);
    if !extents_overlap(fixed.grid(), moving.grid(), &init) {
        return Err(RegError::NoOverlap);
    }
    let center = init.center;

    let full = Level::new(fixed, moving, 1, cfg);
    let initial_metric = mean_or_inf(full.evaluate(&init));

    let mut params = init.params();
    let mut traces = Vec::with_capacity(cfg.levels.len());
    let mut converged = true;

    for (li, &factor) in cfg.levels.iter().enumerate() {
        let level = if factor == 1 {
            None
        } else {
            Some(Level::new(fixed, moving, factor, cfg))
        };
        let level = level.as_ref().unwrap_or(&full);

        let start = level.evaluate(&RigidTransform::from_params(params, center));
        if start.1 == 0 {
            return Err(RegError::NoOverlap);
        }
        let min_count = ((start.1 as f64) * cfg.min_overlap_fraction).ceil() as usize;
        let metric = |p: &[f64; 6]| {
            let (sum, count) = level.evaluate(&RigidTransform::from_params(*p, center));
            if count < min_count.max(1) {
                f64::INFINITY
            } else {
                sum / count as f64
            }
        };

        let mut best = mean_or_inf(start);
        let mut steps = [0.0f64; 6];
        let rot = cfg.rotation_step_deg[li].to_radians();
        let tr = cfg.translation_step_mm[li];
        steps[..3].fill(rot);
        steps[3..].fill(tr);
        let min_rot = cfg.min_rotation_step_deg.to_radians();
        let done = |s: &[f64; 6]| s[..3].iter().all(|&x| x < min_rot) && s[3..].iter().all(|&x| x < cfg.min_translation_step_mm);

        let mut trace = LevelTrace {
            factor,
            dims: level.fixed_grid.dims,
            stride: level.stride,
            evaluations: 1,
            best_per_sweep: vec![best],
            converged: true,
        };

        let mut sweeps = 0usize;
        while !done(&steps) {
            if sweeps == cfg.max_sweeps {
                trace.converged = false;
                converged = false;
                break;
            }
            sweeps += 1;
            let mut improved = false;
            for d in 0..6 {
                if (d < 3 && steps[d] < min_rot) || (d >= 3 && steps[d] < cfg.min_translation_step_mm) {
                    continue;
                }
                let mut plus = params;
                plus[d] += steps[d];
                let mut minus = params;
                minus[d] -= steps[d];
                let plus = RigidTransform::from_params(plus, center).params();
                let minus = RigidTransform::from_params(minus, center).params();
                let (mp, mm) = rayon::join(|| metric(&plus), || metric(&minus));
                trace.evaluations += 2;
                let mut choice: Option<([f64; 6], f64)> = None;
                for (cand, m) in [(plus, mp), (minus, mm)] {
                    if !(m < best) {
                        continue;
                    }
                    choice = match choice {
                        None => Some((cand, m)),
                        Some((cp, cm)) if m < cm || (m == cm && lex_less(&cand, &cp)) => {
                            Some((cand, m))
                        }
                        keep => keep,
                    };
                }
                if let Some((p, m)) = choice {
                    params = p;
                    best = m;
                    improved = true;
                }
            }
            trace.best_per_sweep.push(best);
            if !improved {
                for s in steps.iter_mut() {
                    *s *= 0.5;
                }
            }
        }
        log::debug!(
            "registration level x{factor}: {} sweeps, metric {:.3} -> {:.3}",
            sweeps,
            trace.best_per_sweep[0],
            best
        );
        traces.push(trace);
    }

    let found = RigidTransform::from_params(params, center);
    let found_metric = mean_or_inf(full.evaluate(&found));
    let (transform, final_metric) = if found_metric <= initial_metric {
        (found, found_metric)
    } else {
        log::warn!("registration did not improve on the initial alignment; keeping it");
        (init, initial_metric)
    };
    if !converged {
        log::warn!("registration stopped on the sweep cap before converging");
    }
    Ok(RegistrationResult {
        transform,
        initial_metric,
        final_metric,
        converged,
        levels: traces,
    })
}
