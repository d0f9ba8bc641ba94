//! Synthetic data source: dome-shaped camera rigs, random 3D joint scenes,
//! simulated noisy/occluded detector heatmaps, and episodic task sampling
//! over ordered camera pairs.
//!
//! Everything here is a pure function of a config and a seed; task and sample
//! streams are derived per index so generation is reproducible and can run
//! in parallel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::PairKey;
use crate::geometry::{project, Camera, Pixel, Point3};
use crate::heatmap::{render_gaussian, GridShape, MultiViewSample};
use crate::rng::Stream;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("a rig needs at least two cameras with distinct centers")]
    DegenerateRig,
    #[error("camera {0} has its principal point outside the grid")]
    PrincipalPointOutsideGrid(usize),
    #[error("scene generation failed to satisfy visibility after {0} attempts")]
    SceneGenFailure(usize),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Detector noise model.
///
/// Visible joints render as a unit Gaussian at the (jittered) true
/// projection, occasionally with a weak clutter blob. Occluded joints keep a
/// faint broadened response at the truth and either gain a strong distractor
/// blob at a wrong location (probability `confusion`) or degrade into a
/// near-flat low-confidence map.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Std of the pixel jitter applied to visible peaks, in cells.
    pub jitter: f64,
    /// Probability that an occluded joint shows a confident wrong-location blob.
    pub confusion: f64,
    /// Peak amplitude of distractor blobs.
    pub distractor_amp: f64,
    /// Peak amplitude of visible detections. Detectors are under-confident
    /// relative to the unit-amplitude supervision targets, which is what
    /// gives fusion a fill gain on every channel.
    #[serde(default = "default_peak_amp")]
    pub peak_amp: f64,
    /// Amplitude of the residual true-location response on occluded joints.
    #[serde(default = "default_residual_amp")]
    pub residual_amp: f64,
    /// Width multiplier of the residual response.
    #[serde(default = "default_residual_sigma_scale")]
    pub residual_sigma_scale: f64,
    /// Per-cell noise level of the near-flat low-confidence maps.
    #[serde(default = "default_floor_noise")]
    pub floor_noise: f64,
    /// Probability of a clutter blob on a visible detection.
    #[serde(default = "default_clutter_prob")]
    pub clutter_prob: f64,
    /// Peak amplitude of visible-detection clutter blobs.
    #[serde(default = "default_clutter_amp")]
    pub clutter_amp: f64,
}

fn default_peak_amp() -> f64 {
    0.55
}
fn default_residual_amp() -> f64 {
    0.25
}
fn default_residual_sigma_scale() -> f64 {
    2.0
}
fn default_floor_noise() -> f64 {
    0.05
}
fn default_clutter_prob() -> f64 {
    0.5
}
fn default_clutter_amp() -> f64 {
    0.3
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            jitter: 0.0,
            confusion: 0.0,
            distractor_amp: 0.0,
            peak_amp: 1.0,
            residual_amp: 0.0,
            residual_sigma_scale: 1.0,
            floor_noise: 0.0,
            clutter_prob: 0.0,
            clutter_amp: 0.0,
        }
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            jitter: 0.45,
            confusion: 0.65,
            distractor_amp: 0.4,
            peak_amp: default_peak_amp(),
            residual_amp: default_residual_amp(),
            residual_sigma_scale: default_residual_sigma_scale(),
            floor_noise: default_floor_noise(),
            clutter_prob: default_clutter_prob(),
            clutter_amp: default_clutter_amp(),
        }
    }
}

/// Full description of a synthetic world.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_cams: usize,
    pub radius: f64,
    pub grid: GridShape,
    pub n_joints: usize,
    pub occl_rate: f64,
    pub noise: NoiseSpec,
    pub seed: u64,
    /// Gaussian std of heatmap targets, in cells.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Radius of the ball joints are drawn from; defaults to radius / 4.
    #[serde(default)]
    pub volume_extent: Option<f64>,
}

fn default_sigma() -> f64 {
    1.5
}

impl WorldConfig {
    pub fn extent(&self) -> f64 {
        self.volume_extent.unwrap_or(self.radius * 0.25)
    }

    /// A small dome world, convenient for tests and examples.
    pub fn small(seed: u64) -> Self {
        WorldConfig {
            n_cams: 6,
            radius: 4.0,
            grid: GridShape::new(24, 24),
            n_joints: 3,
            occl_rate: 0.3,
            noise: NoiseSpec::default(),
            seed,
            sigma: 1.5,
            volume_extent: None,
        }
    }
}

/// A set of calibrated cameras.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rig {
    pub id: String,
    pub cameras: Vec<Camera>,
}

impl Rig {
    pub fn new(id: String, cameras: Vec<Camera>, grid: GridShape) -> Result<Self, WorldError> {
        if cameras.len() < 2 {
            return Err(WorldError::DegenerateRig);
        }
        for i in 0..cameras.len() {
            for j in i + 1..cameras.len() {
                if (cameras[i].center - cameras[j].center).norm() <= 1e-9 {
                    return Err(WorldError::DegenerateRig);
                }
            }
        }
        for (i, c) in cameras.iter().enumerate() {
            if !grid.contains(&c.principal_point) {
                return Err(WorldError::PrincipalPointOutsideGrid(i));
            }
        }
        Ok(Rig { id, cameras })
    }

    pub fn n_cams(&self) -> usize {
        self.cameras.len()
    }

    /// All ordered camera pairs (a, b), a != b, in lexicographic order.
    pub fn ordered_pairs(&self) -> Vec<PairKey> {
        let n = self.cameras.len();
        let mut out = Vec::with_capacity(n * (n - 1));
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Two-camera sub-rig for an ordered pair; view order is (target of the
    /// pair label first).
    pub fn pair_rig(&self, pair: PairKey) -> Rig {
        Rig {
            id: format!("{}:{}-{}", self.id, pair.0, pair.1),
            cameras: vec![self.cameras[pair.0].clone(), self.cameras[pair.1].clone()],
        }
    }
}

/// Cameras on a hemisphere of the given radius, all looking at the origin,
/// with focal lengths sized so the working volume projects inside the grid.
/// Deterministic per seed.
pub fn make_dome_rig(
    n_cams: usize,
    radius: f64,
    grid: GridShape,
    seed: u64,
) -> Result<Rig, WorldError> {
    make_dome_rig_for_extent(n_cams, radius, radius * 0.25, grid, seed)
}

pub fn make_dome_rig_for_extent(
    n_cams: usize,
    radius: f64,
    extent: f64,
    grid: GridShape,
    seed: u64,
) -> Result<Rig, WorldError> {
    if n_cams < 2 {
        return Err(WorldError::DegenerateRig);
    }
    assert!(extent > 0.0 && extent < radius * 0.7, "extent must leave room for cameras");
    let mut rng = Stream::new(seed).derive(0xd0_4e);
    let min_dim = grid.h.min(grid.w) as f64;
    let focal = 0.35 * min_dim * (radius - extent) / extent;
    let pp = Pixel::new(grid.w as f64 / 2.0, grid.h as f64 / 2.0);
    let mut cameras: Vec<Camera> = Vec::with_capacity(n_cams);
    while cameras.len() < n_cams {
        let az = rng.uniform(0.0, std::f64::consts::TAU);
        let el = rng.uniform(0.25, 1.15);
        let center = Point3::new(
            radius * el.cos() * az.cos(),
            radius * el.cos() * az.sin(),
            radius * el.sin(),
        );
        if cameras
            .iter()
            .any(|c| (c.center - center).norm() < 1e-3 * radius)
        {
            continue;
        }
        let cam = Camera::look_at(center, Point3::zeros(), focal, pp)
            .expect("look-at produces orthonormal rotations");
        cameras.push(cam);
    }
    Rig::new(format!("dome-{n_cams}-{seed}"), cameras, grid)
}

/// Rig for a world config: dome cameras sized to the config's volume extent.
pub fn rig_for(cfg: &WorldConfig) -> Result<Rig, WorldError> {
    make_dome_rig_for_extent(cfg.n_cams, cfg.radius, cfg.extent(), cfg.grid, cfg.seed)
}

/// One 3D joint configuration with per-(view, joint) occlusion flags.
#[derive(Debug, Clone)]
pub struct Scene {
    pub joints: Vec<Point3>,
    /// occlusion[v][j] == true means joint j is occluded in view v.
    pub occlusion: Vec<Vec<bool>>,
}

const MAX_TRIES: usize = 1000;

/// Draw a random scene: joints uniform in a ball around the dome origin,
/// independent Bernoulli occlusion per (view, joint) subject to every joint
/// staying visible in at least one view.
pub fn sample_scene(
    rig: &Rig,
    cfg: &WorldConfig,
    rng: &mut Stream,
) -> Result<Scene, WorldError> {
    let v = rig.n_cams();
    let extent = cfg.extent();
    let mut joints = Vec::with_capacity(cfg.n_joints);
    for _ in 0..cfg.n_joints {
        let mut ok = false;
        for _ in 0..MAX_TRIES {
            let p = Point3::new(
                rng.uniform(-extent, extent),
                rng.uniform(-extent, extent),
                rng.uniform(-extent, extent),
            );
            if p.norm() > extent {
                continue;
            }
            let on_grid = rig
                .cameras
                .iter()
                .filter(|c| matches!(project(c, &p), Ok(px) if cfg.grid.contains(&px)))
                .count();
            if on_grid >= 2 {
                joints.push(p);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(WorldError::SceneGenFailure(MAX_TRIES));
        }
    }
    // Occlusion flags, resampled per joint until at least one on-grid view
    // stays visible.
    let mut occlusion = vec![vec![false; cfg.n_joints]; v];
    for j in 0..cfg.n_joints {
        let on_grid: Vec<bool> = rig
            .cameras
            .iter()
            .map(|c| matches!(project(c, &joints[j]), Ok(px) if cfg.grid.contains(&px)))
            .collect();
        let mut ok = false;
        for _ in 0..MAX_TRIES {
            let flags: Vec<bool> = (0..v).map(|_| rng.bernoulli(cfg.occl_rate)).collect();
            if flags
                .iter()
                .zip(&on_grid)
                .any(|(occ, grid_ok)| !occ && *grid_ok)
            {
                for view in 0..v {
                    occlusion[view][j] = flags[view];
                }
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(WorldError::SceneGenFailure(MAX_TRIES));
        }
    }
    Ok(Scene { joints, occlusion })
}

fn random_far_cell(grid: GridShape, truth: &Pixel, min_dist: f64, rng: &mut Stream) -> Pixel {
    for _ in 0..MAX_TRIES {
        let r = rng.below(grid.h as u64) as usize;
        let c = rng.below(grid.w as u64) as usize;
        let p = grid.cell_center(r, c);
        if (p - truth).norm() >= min_dist {
            return p;
        }
    }
    // Tiny grids may have no far cell; fall back to the farthest corner.
    let corners = [
        grid.cell_center(0, 0),
        grid.cell_center(0, grid.w - 1),
        grid.cell_center(grid.h - 1, 0),
        grid.cell_center(grid.h - 1, grid.w - 1),
    ];
    corners
        .into_iter()
        .max_by(|a, b| {
            (a - truth)
                .norm()
                .partial_cmp(&(b - truth).norm())
                .unwrap()
        })
        .unwrap()
}

const DISTRACTOR_MIN_DIST: f64 = 4.0;

/// Simulate detector output for a scene.
///
/// Ground-truth pixels and target heatmaps are always exact; only the
/// detection channels carry noise.
pub fn render_detections(
    scene: &Scene,
    rig: &Rig,
    cfg: &WorldConfig,
    rng: &Stream,
) -> MultiViewSample {
    let v = rig.n_cams();
    let j = scene.joints.len();
    let noise = &cfg.noise;
    let mut views = Vec::with_capacity(v);
    let mut gt_pixels = Vec::with_capacity(v);
    let mut gt_heatmaps = Vec::with_capacity(v);
    let mut visibility = Vec::with_capacity(v);
    for view in 0..v {
        let cam = &rig.cameras[view];
        let mut row_maps = Vec::with_capacity(j);
        let mut row_px = Vec::with_capacity(j);
        let mut row_gt = Vec::with_capacity(j);
        let mut row_vis = Vec::with_capacity(j);
        for joint in 0..j {
            let mut r = rng.derive2(view as u64, joint as u64);
            let (gt_px, on_grid) = match project(cam, &scene.joints[joint]) {
                Ok(px) => {
                    let on = cfg.grid.contains(&px);
                    (px, on)
                }
                Err(_) => (Pixel::new(-1e3, -1e3), false),
            };
            let visible = on_grid && !scene.occlusion[view][joint];
            let gt_map = render_gaussian(gt_px, cfg.grid, cfg.sigma);
            let det = if visible {
                let jittered = Pixel::new(
                    gt_px.x + noise.jitter * r.normal(),
                    gt_px.y + noise.jitter * r.normal(),
                );
                let mut m = render_gaussian(jittered, cfg.grid, cfg.sigma);
                m.scale(noise.peak_amp);
                if noise.clutter_amp > 0.0 && r.bernoulli(noise.clutter_prob) {
                    let at = random_far_cell(cfg.grid, &gt_px, DISTRACTOR_MIN_DIST, &mut r);
                    let mut blob = render_gaussian(at, cfg.grid, cfg.sigma);
                    blob.scale(noise.clutter_amp);
                    m.add_assign(&blob);
                }
                m
            } else {
                let mut m = render_gaussian(gt_px, cfg.grid, cfg.sigma * noise.residual_sigma_scale);
                m.scale(noise.residual_amp);
                if r.bernoulli(noise.confusion) {
                    let at = random_far_cell(cfg.grid, &gt_px, DISTRACTOR_MIN_DIST, &mut r);
                    let mut blob = render_gaussian(at, cfg.grid, cfg.sigma);
                    blob.scale(noise.distractor_amp);
                    m.add_assign(&blob);
                } else {
                    for cell in &mut m.data {
                        *cell += noise.floor_noise * r.normal().abs();
                    }
                }
                m
            };
            row_maps.push(det);
            row_px.push(gt_px);
            row_gt.push(gt_map);
            row_vis.push(visible);
        }
        views.push(row_maps);
        gt_pixels.push(row_px);
        gt_heatmaps.push(row_gt);
        visibility.push(row_vis);
    }
    MultiViewSample {
        shape: cfg.grid,
        cams: (0..v).collect(),
        views,
        gt_pixels,
        gt_heatmaps,
        visibility,
        joints_world: scene.joints.clone(),
    }
}

/// One meta-learning episode: an ordered camera pair with disjoint train and
/// test sample splits.
#[derive(Debug, Clone)]
pub struct Task {
    pub pair: PairKey,
    pub train: Vec<MultiViewSample>,
    pub test: Vec<MultiViewSample>,
}

/// How task pairs are drawn from the rig.
#[derive(Debug, Clone)]
pub enum PairSelection {
    /// Uniform over all ordered pairs, never repeating the previous task's pair.
    Random,
    /// Enumerate all ordered pairs in order, cycling if needed.
    Exhaustive,
    /// Uniform over an explicit pair subset, never repeating the previous pair.
    FromSet(Vec<PairKey>),
    /// Enumerate an explicit pair subset in order, cycling if needed.
    ExhaustiveFrom(Vec<PairKey>),
}

/// Generate two-view samples for one ordered pair. Sample `i` is derived
/// from `(cfg.seed, stream_key, i)`, so disjoint key ranges give disjoint
/// datasets.
pub fn pair_samples(
    rig: &Rig,
    pair: PairKey,
    n: usize,
    cfg: &WorldConfig,
    stream_key: u64,
) -> Result<Vec<MultiViewSample>, WorldError> {
    let sub = rig.pair_rig(pair);
    let root = Stream::new(cfg.seed).derive(stream_key);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut scene_rng = root.derive2(i as u64, 0);
        let scene = sample_scene(&sub, cfg, &mut scene_rng)?;
        let det_rng = root.derive2(i as u64, 1);
        let mut sample = render_detections(&scene, &sub, cfg, &det_rng);
        sample.cams = vec![pair.0, pair.1];
        out.push(sample);
    }
    Ok(out)
}

/// Stream key namespaces so train/test/eval datasets never collide.
pub mod keys {
    pub const TASK: u64 = 0x10_00;
    pub const FINETUNE: u64 = 0x20_00;
    pub const EVAL: u64 = 0x30_00;

    pub fn for_pair(ns: u64, pair: (usize, usize)) -> u64 {
        ns ^ ((pair.0 as u64) << 32 | pair.1 as u64).wrapping_mul(0x9e37_79b9)
    }
}

/// Draw `n_tasks` episodes of K train + K test samples each.
pub fn sample_tasks(
    rig: &Rig,
    n_tasks: usize,
    k: usize,
    cfg: &WorldConfig,
    selection: &PairSelection,
) -> Result<Vec<Task>, WorldError> {
    if rig.n_cams() < 2 {
        return Err(WorldError::DegenerateRig);
    }
    assert!(n_tasks >= 1 && k >= 1, "need n_tasks >= 1 and k >= 1");
    let all_pairs = rig.ordered_pairs();
    let pool: &[PairKey] = match selection {
        PairSelection::FromSet(set) | PairSelection::ExhaustiveFrom(set) => set,
        _ => &all_pairs,
    };
    let mut pair_rng = Stream::new(cfg.seed).derive(0x9a1d);
    let mut tasks = Vec::with_capacity(n_tasks);
    let mut prev: Option<PairKey> = None;
    for t in 0..n_tasks {
        let pair = match selection {
            PairSelection::Exhaustive => all_pairs[t % all_pairs.len()],
            PairSelection::ExhaustiveFrom(set) => set[t % set.len()],
            _ => loop {
                let cand = pool[pair_rng.below(pool.len() as u64) as usize];
                if pool.len() == 1 || Some(cand) != prev {
                    break cand;
                }
            },
        };
        prev = Some(pair);
        // Per-task sample stream keyed by the task index.
        let key = keys::TASK ^ ((t as u64) << 20);
        let samples = pair_samples(rig, pair, 2 * k, cfg, key)?;
        let mut train = samples;
        let test = train.split_off(k);
        tasks.push(Task { pair, train, test });
    }
    Ok(tasks)
}
