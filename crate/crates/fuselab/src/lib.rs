//! fuselab: a desk-scale laboratory for cross-view heatmap fusion.
//!
//! The crate models multi-view keypoint localization on synthetic camera
//! rigs: pinhole geometry with an analytic epipolar oracle, the additive
//! cross-view fusion rule, its factorization into a shared base weight plus
//! per-pixel affine warps, episodic meta-training of that factorization for
//! rapid adaptation to unseen camera pairs, and an evaluation harness that
//! compares the fusion baselines on held-out pairs.
//!
//! Start with the runnable programs under `examples/`; each demonstrates one
//! capability end to end. The `fuselab` binary drives the same machinery
//! from configuration files.

pub mod cli;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod grad;
pub mod heatmap;
pub mod io;
pub mod rng;
pub mod synthworld;
pub mod train;

pub use fusion::{FactorizedFusionParams, FuseConfig, FusionParams};
pub use heatmap::{GridShape, HeatmapGrid, MultiViewSample};
pub use synthworld::{Rig, Task, WorldConfig};
