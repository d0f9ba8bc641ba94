//! Cross-view fusion parameterizations and the forward fusion computation.
//!
//! Two families of weights connect an ordered camera pair (target <- source):
//! a dense matrix with one scalar per (target cell, source cell), or the
//! factorized form of a single shared base weight map warped by a per-target-
//! cell six-parameter affine transform. Fusion itself is the additive update
//! `out_i = target_i + sum_j w_i[j] * source_j`, applied per joint channel
//! with weights shared across channels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heatmap::{softmax_temperature, GridShape, HeatmapGrid, MultiViewSample};
use crate::rng::Stream;

/// Ordered camera pair: (target camera index, source camera index).
pub type PairKey = (usize, usize);

/// The identity affine parameters [a, b, tx, c, d, ty].
pub const THETA_IDENTITY: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("shape mismatch between weights ({0} targets x {1} sources) and grids ({2} cells)")]
    ShapeError(usize, usize, usize),
    #[error("no fusion weights for ordered pair ({0}, {1})")]
    MissingPairParams(usize, usize),
}

/// Per-target-cell weight maps for one ordered pair, stored target-major:
/// row i holds the weight map over source cells for target cell i. The
/// logical dense model of one scalar per (source j, target i) is this
/// matrix transposed; files store the source-major form.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub n_target: usize,
    pub n_source: usize,
    pub data: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(n_target: usize, n_source: usize) -> Self {
        WeightMatrix {
            n_target,
            n_source,
            data: vec![0.0; n_target * n_source],
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_source..(i + 1) * self.n_source]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_source..(i + 1) * self.n_source]
    }
}

/// Dense pairwise fusion weights: one full matrix per ordered camera pair.
#[derive(Debug, Clone)]
pub struct DenseFusionParams {
    pub grid: GridShape,
    pub pairs: BTreeMap<PairKey, WeightMatrix>,
}

impl DenseFusionParams {
    /// Zero-initialized weights (fusion starts as the identity).
    pub fn zeros(grid: GridShape, pairs: &[PairKey]) -> Self {
        let n = grid.cells();
        DenseFusionParams {
            grid,
            pairs: pairs
                .iter()
                .map(|p| (*p, WeightMatrix::zeros(n, n)))
                .collect(),
        }
    }
}

/// Factorized fusion weights: a shared base map plus per-target-cell affine
/// parameters. `theta_init` is the generic parameter block that new pairs
/// start from; `pair_thetas` holds blocks trained for specific pairs.
#[derive(Debug, Clone)]
pub struct FactorizedFusionParams {
    pub grid: GridShape,
    /// Shared base weight map, h*w values.
    pub base: Vec<f64>,
    /// Generic affine block, 6 values per target cell.
    pub theta_init: Vec<f64>,
    /// Affine blocks adapted to specific ordered pairs.
    pub pair_thetas: BTreeMap<PairKey, Vec<f64>>,
    /// Set when meta-training finishes; finetuning then never touches `base`.
    pub base_frozen: bool,
}

impl FactorizedFusionParams {
    /// Random initialization. The base is a smooth random field (a bilinear
    /// warp of white noise has incoherent coordinate gradients, so smooth
    /// structure is what makes the affine parameters trainable); the affine
    /// blocks scatter widely around the identity so different target cells
    /// start with visibly different warps, breaking the symmetry that
    /// otherwise makes early factorized gradients cancel.
    pub fn random_init(grid: GridShape, seed: u64) -> Self {
        let mut rng = Stream::new(seed).derive(0x0f);
        let n = grid.cells();
        let mut base = vec![0.0; n];
        let bump_sigma = (grid.h.min(grid.w) as f64 / 6.0).max(1.5);
        for _ in 0..12 {
            let cx = rng.uniform(0.0, grid.w as f64);
            let cy = rng.uniform(0.0, grid.h as f64);
            let amp = 0.12 * rng.normal();
            let inv = 1.0 / (2.0 * bump_sigma * bump_sigma);
            for r in 0..grid.h {
                for c in 0..grid.w {
                    let dx = c as f64 + 0.5 - cx;
                    let dy = r as f64 + 0.5 - cy;
                    base[r * grid.w + c] += amp * (-(dx * dx + dy * dy) * inv).exp();
                }
            }
        }
        let mut theta_init = Vec::with_capacity(6 * n);
        for _ in 0..n {
            for (k, t) in THETA_IDENTITY.iter().enumerate() {
                let spread = if k == 2 || k == 5 { 0.5 } else { 0.35 };
                theta_init.push(t + spread * rng.normal());
            }
        }
        FactorizedFusionParams {
            grid,
            base,
            theta_init,
            pair_thetas: BTreeMap::new(),
            base_frozen: false,
        }
    }

    /// Ridge initialization: the base starts as a canonical Gaussian ridge
    /// through the grid center (the line-like pattern pre-training converges
    /// to at scale), affine blocks scattered as in [`Self::random_init`].
    /// Per-cell warps of a ridge stay ridge-shaped, so adapted weights keep
    /// their mass on a line while training only has to orient it.
    pub fn ridge_init(grid: GridShape, seed: u64) -> Self {
        let mut out = Self::random_init(grid, seed);
        let sigma = 1.5f64;
        let mid = grid.h as f64 / 2.0;
        let mut rng = Stream::new(seed).derive(0x41d6e);
        for r in 0..grid.h {
            let dy = r as f64 + 0.5 - mid;
            let v = 0.3 * (-dy * dy / (2.0 * sigma * sigma)).exp();
            for c in 0..grid.w {
                out.base[r * grid.w + c] = v + 0.01 * rng.normal();
            }
        }
        out
    }

    /// Affine block used when fusing the given ordered pair.
    pub fn theta_for(&self, pair: PairKey) -> &[f64] {
        self.pair_thetas
            .get(&pair)
            .map(|v| v.as_slice())
            .unwrap_or(&self.theta_init)
    }

    /// Instantiate explicit blocks for both directions of a pair from the
    /// generic block, so they can be finetuned independently.
    pub fn instantiate_pair(&mut self, a: usize, b: usize) {
        for key in [(a, b), (b, a)] {
            self.pair_thetas
                .entry(key)
                .or_insert_with(|| self.theta_init.clone());
        }
    }

    /// Materialize the warped weight matrix for one ordered pair.
    pub fn materialize(&self, pair: PairKey) -> WeightMatrix {
        let n = self.grid.cells();
        let theta = self.theta_for(pair);
        let mut w = WeightMatrix::zeros(n, n);
        for i in 0..n {
            warp_into(
                &self.base,
                self.grid,
                &theta[6 * i..6 * i + 6],
                w.row_mut(i),
            );
        }
        w
    }
}

/// Either fusion parameterization.
#[derive(Debug, Clone)]
pub enum FusionParams {
    Dense(DenseFusionParams),
    Factorized(FactorizedFusionParams),
}

impl FusionParams {
    pub fn grid(&self) -> GridShape {
        match self {
            FusionParams::Dense(d) => d.grid,
            FusionParams::Factorized(f) => f.grid,
        }
    }

    /// Total learnable parameter count over `n_pairs` ordered pairs. The
    /// shared base is counted once.
    pub fn param_count(&self, n_pairs: usize) -> usize {
        let z = self.grid().cells();
        match self {
            FusionParams::Dense(_) => n_pairs * z * z,
            FusionParams::Factorized(_) => z + n_pairs * 6 * z,
        }
    }
}

/// Parameters learnable when adapting to one new ordered pair direction:
/// theta only, 6 per target cell.
pub fn finetune_param_count(grid: GridShape) -> usize {
    6 * grid.cells()
}

/// Fusion behaviour switches shared by forward fusion and training.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FuseConfig {
    /// Temperature of the per-channel softmax applied to fused maps.
    pub softmax_t: f64,
    /// Apply the softmax when producing fused samples (inference side).
    pub apply_softmax: bool,
    /// Compute the training MSE after the softmax instead of before it.
    pub loss_on_softmax: bool,
}

impl Default for FuseConfig {
    fn default() -> Self {
        FuseConfig {
            softmax_t: 0.2,
            apply_softmax: true,
            loss_on_softmax: false,
        }
    }
}

/// Bilinear warp of `base` by one affine block, writing into `out`.
///
/// Output cell (r, c) is addressed by normalized coordinates
/// g = (2c/(w-1) - 1, 2r/(h-1) - 1); it samples `base` at
/// (a gx + b gy + tx, c gx + d gy + ty), mapped back to indices, with
/// bilinear interpolation and zero padding outside the grid.
pub fn warp_into(base: &[f64], grid: GridShape, theta: &[f64], out: &mut [f64]) {
    debug_assert_eq!(base.len(), grid.cells());
    debug_assert_eq!(out.len(), grid.cells());
    debug_assert_eq!(theta.len(), 6);
    let (h, w) = (grid.h, grid.w);
    let (a, b, tx, c_, d, ty) = (theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]);
    let sx = (w - 1) as f64 / 2.0;
    let sy = (h - 1) as f64 / 2.0;
    for r in 0..h {
        let gy = r as f64 / sy - 1.0;
        for c in 0..w {
            let gx = c as f64 / sx - 1.0;
            let ix = (a * gx + b * gy + tx + 1.0) * sx;
            let iy = (c_ * gx + d * gy + ty + 1.0) * sy;
            let x0 = ix.floor();
            let y0 = iy.floor();
            let fx = ix - x0;
            let fy = iy - y0;
            let (x0, y0) = (x0 as i64, y0 as i64);
            let mut acc = 0.0;
            for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
                let yy = y0 + dy;
                if yy < 0 || yy >= h as i64 || wy == 0.0 {
                    continue;
                }
                for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                    let xx = x0 + dx;
                    if xx < 0 || xx >= w as i64 || wx == 0.0 {
                        continue;
                    }
                    acc += wy * wx * base[yy as usize * w + xx as usize];
                }
            }
            out[r * w + c] = acc;
        }
    }
}

/// Bilinear warp returning a fresh heatmap.
pub fn warp_affine(base: &HeatmapGrid, theta: &[f64; 6]) -> HeatmapGrid {
    let mut out = HeatmapGrid::zeros(base.shape);
    warp_into(&base.data, base.shape, theta, &mut out.data);
    out
}

/// Additive pairwise fusion: `out_i = target_i + sum_j w_i[j] source_j`.
pub fn fuse_pair(
    target: &HeatmapGrid,
    source: &HeatmapGrid,
    weights: &WeightMatrix,
) -> Result<HeatmapGrid, FusionError> {
    let n = target.shape.cells();
    if source.shape != target.shape || weights.n_target != n || weights.n_source != n {
        return Err(FusionError::ShapeError(
            weights.n_target,
            weights.n_source,
            n,
        ));
    }
    let mut out = target.clone();
    for i in 0..n {
        let row = weights.row(i);
        let mut acc = 0.0;
        for (wj, sj) in row.iter().zip(&source.data) {
            acc += wj * sj;
        }
        out.data[i] += acc;
    }
    Ok(out)
}

/// Fuse every view of a sample from all other views, one weight matrix per
/// ordered (target, source) camera pair, then optionally sharpen each channel
/// with the temperature softmax.
pub fn fuse_multiview(
    sample: &MultiViewSample,
    params: &FusionParams,
    cfg: &FuseConfig,
) -> Result<MultiViewSample, FusionError> {
    let v = sample.n_views();
    let j = sample.n_joints();
    // Collect the weight matrix per ordered pair present in this sample.
    let mut mats: BTreeMap<PairKey, WeightMatrix> = BTreeMap::new();
    for tv in 0..v {
        for sv in 0..v {
            if tv == sv {
                continue;
            }
            let key = (sample.cams[tv], sample.cams[sv]);
            if mats.contains_key(&key) {
                continue;
            }
            let mat = match params {
                FusionParams::Dense(d) => d
                    .pairs
                    .get(&key)
                    .cloned()
                    .ok_or(FusionError::MissingPairParams(key.0, key.1))?,
                FusionParams::Factorized(f) => f.materialize(key),
            };
            mats.insert(key, mat);
        }
    }
    let mut out = sample.clone();
    for tv in 0..v {
        for jc in 0..j {
            let mut fused = sample.views[tv][jc].clone();
            for sv in 0..v {
                if sv == tv {
                    continue;
                }
                let mat = &mats[&(sample.cams[tv], sample.cams[sv])];
                let contribution = fuse_pair(
                    &HeatmapGrid::zeros(sample.shape),
                    &sample.views[sv][jc],
                    mat,
                )?;
                fused.add_assign(&contribution);
            }
            if cfg.apply_softmax {
                fused = softmax_temperature(&fused, cfg.softmax_t)
                    .expect("softmax_t validated positive");
            }
            out.views[tv][jc] = fused;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;

    fn grid() -> GridShape {
        GridShape::new(8, 8)
    }

    fn random_grid(shape: GridShape, rng: &mut Stream) -> HeatmapGrid {
        let mut g = HeatmapGrid::zeros(shape);
        for v in &mut g.data {
            *v = rng.normal();
        }
        g
    }

    #[test]
    fn warp_identity_reproduces_base() {
        let mut rng = Stream::new(1);
        let base = random_grid(grid(), &mut rng);
        let out = warp_affine(&base, &THETA_IDENTITY);
        for (a, b) in out.data.iter().zip(&base.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn warp_integer_shift_moves_columns() {
        let mut rng = Stream::new(2);
        let s = grid();
        let base = random_grid(s, &mut rng);
        let shift = 2i64;
        let theta = [
            1.0,
            0.0,
            2.0 * shift as f64 / (s.w - 1) as f64,
            0.0,
            1.0,
            0.0,
        ];
        let out = warp_affine(&base, &theta);
        // Output column c samples base column c + shift.
        for r in 0..s.h {
            for c in 0..s.w - shift as usize {
                assert!(
                    (out.at(r, c) - base.at(r, c + shift as usize)).abs() < 1e-9,
                    "({r},{c})"
                );
            }
        }
    }

    #[test]
    fn warp_matches_naive_oracle() {
        // Independent re-derivation of the sampling rule, straight from the
        // normalized-coordinate definition.
        let mut rng = Stream::new(3);
        let s = grid();
        let base = random_grid(s, &mut rng);
        for _ in 0..10 {
            let theta = [
                1.0 + 0.3 * rng.normal(),
                0.3 * rng.normal(),
                0.5 * rng.normal(),
                0.3 * rng.normal(),
                1.0 + 0.3 * rng.normal(),
                0.5 * rng.normal(),
            ];
            let out = warp_affine(&base, &theta);
            for r in 0..s.h {
                for c in 0..s.w {
                    let gx = 2.0 * c as f64 / (s.w - 1) as f64 - 1.0;
                    let gy = 2.0 * r as f64 / (s.h - 1) as f64 - 1.0;
                    let sxn = theta[0] * gx + theta[1] * gy + theta[2];
                    let syn = theta[3] * gx + theta[4] * gy + theta[5];
                    let ix = (sxn + 1.0) * (s.w - 1) as f64 / 2.0;
                    let iy = (syn + 1.0) * (s.h - 1) as f64 / 2.0;
                    let sample = |x: i64, y: i64| -> f64 {
                        if x < 0 || y < 0 || x >= s.w as i64 || y >= s.h as i64 {
                            0.0
                        } else {
                            base.at(y as usize, x as usize)
                        }
                    };
                    let (x0, y0) = (ix.floor() as i64, iy.floor() as i64);
                    let (fx, fy) = (ix - ix.floor(), iy - iy.floor());
                    let expect = (1.0 - fx) * (1.0 - fy) * sample(x0, y0)
                        + fx * (1.0 - fy) * sample(x0 + 1, y0)
                        + (1.0 - fx) * fy * sample(x0, y0 + 1)
                        + fx * fy * sample(x0 + 1, y0 + 1);
                    assert!((out.at(r, c) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fuse_zero_weights_is_identity() {
        let mut rng = Stream::new(4);
        let s = grid();
        let target = random_grid(s, &mut rng);
        let source = random_grid(s, &mut rng);
        let w = WeightMatrix::zeros(s.cells(), s.cells());
        let out = fuse_pair(&target, &source, &w).unwrap();
        assert_eq!(out.data, target.data);
    }

    #[test]
    fn fuse_one_hot_adds_single_source_cell() {
        let mut rng = Stream::new(5);
        let s = grid();
        let target = random_grid(s, &mut rng);
        let source = random_grid(s, &mut rng);
        let j_star = 13usize;
        let mut w = WeightMatrix::zeros(s.cells(), s.cells());
        for i in 0..s.cells() {
            w.row_mut(i)[j_star] = 1.0;
        }
        let out = fuse_pair(&target, &source, &w).unwrap();
        for i in 0..s.cells() {
            assert!((out.data[i] - (target.data[i] + source.data[j_star])).abs() < 1e-12);
        }
    }

    #[test]
    fn fuse_is_linear() {
        let mut rng = Stream::new(6);
        let s = grid();
        let t = random_grid(s, &mut rng);
        let src = random_grid(s, &mut rng);
        let mut w = WeightMatrix::zeros(s.cells(), s.cells());
        for v in &mut w.data {
            *v = 0.2 * rng.normal();
        }
        let alpha = 2.75;
        let mut t2 = t.clone();
        t2.scale(alpha);
        let mut s2 = src.clone();
        s2.scale(alpha);
        let scaled = fuse_pair(&t2, &s2, &w).unwrap();
        let mut plain = fuse_pair(&t, &src, &w).unwrap();
        plain.scale(alpha);
        for (a, b) in scaled.data.iter().zip(&plain.data) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn sample_with(views: Vec<Vec<HeatmapGrid>>, shape: GridShape) -> MultiViewSample {
        let v = views.len();
        let j = views[0].len();
        MultiViewSample {
            shape,
            cams: (0..v).collect(),
            views,
            gt_pixels: vec![vec![crate::geometry::Pixel::zeros(); j]; v],
            gt_heatmaps: vec![vec![HeatmapGrid::zeros(shape); j]; v],
            visibility: vec![vec![true; j]; v],
            joints_world: vec![Point3::zeros(); j],
        }
    }

    #[test]
    fn multiview_zero_weights_identity_and_missing_pair() {
        let mut rng = Stream::new(7);
        let s = grid();
        let views = vec![
            vec![random_grid(s, &mut rng)],
            vec![random_grid(s, &mut rng)],
        ];
        let sample = sample_with(views, s);
        let params = FusionParams::Dense(DenseFusionParams::zeros(s, &[(0, 1), (1, 0)]));
        let cfg = FuseConfig {
            apply_softmax: false,
            ..Default::default()
        };
        let out = fuse_multiview(&sample, &params, &cfg).unwrap();
        for v in 0..2 {
            assert_eq!(out.views[v][0].data, sample.views[v][0].data);
        }
        let missing = FusionParams::Dense(DenseFusionParams::zeros(s, &[(0, 1)]));
        assert!(matches!(
            fuse_multiview(&sample, &missing, &cfg),
            Err(FusionError::MissingPairParams(1, 0))
        ));
    }

    #[test]
    fn multiview_four_views_accumulate_three_contributions() {
        let s = grid();
        let n = s.cells();
        // Each view's map is a distinct constant; identity one-hot weights
        // then add exactly the sum of the other views' constants.
        let consts = [1.0, 10.0, 100.0, 1000.0];
        let views: Vec<Vec<HeatmapGrid>> = consts
            .iter()
            .map(|k| vec![HeatmapGrid::from_vec(s, vec![*k; n])])
            .collect();
        let sample = sample_with(views, s);
        let mut pairs = BTreeMap::new();
        for tv in 0..4usize {
            for sv in 0..4usize {
                if tv != sv {
                    let mut w = WeightMatrix::zeros(n, n);
                    for i in 0..n {
                        w.row_mut(i)[i] = 1.0;
                    }
                    pairs.insert((tv, sv), w);
                }
            }
        }
        let params = FusionParams::Dense(DenseFusionParams { grid: s, pairs });
        let cfg = FuseConfig {
            apply_softmax: false,
            ..Default::default()
        };
        let out = fuse_multiview(&sample, &params, &cfg).unwrap();
        for tv in 0..4 {
            let expect: f64 =
                consts[tv] + consts.iter().enumerate().filter(|(i, _)| *i != tv).map(|(_, k)| k).sum::<f64>();
            assert!((out.views[tv][0].data[0] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn multiview_commutes_with_channel_permutation() {
        let mut rng = Stream::new(8);
        let s = grid();
        let views = vec![
            vec![random_grid(s, &mut rng), random_grid(s, &mut rng)],
            vec![random_grid(s, &mut rng), random_grid(s, &mut rng)],
        ];
        let sample = sample_with(views.clone(), s);
        let mut permuted_views = views;
        for v in &mut permuted_views {
            v.swap(0, 1);
        }
        let permuted = sample_with(permuted_views, s);
        let params = {
            let mut f = FactorizedFusionParams::random_init(s, 9);
            f.instantiate_pair(0, 1);
            FusionParams::Factorized(f)
        };
        let cfg = FuseConfig {
            apply_softmax: false,
            ..Default::default()
        };
        let a = fuse_multiview(&sample, &params, &cfg).unwrap();
        let b = fuse_multiview(&permuted, &params, &cfg).unwrap();
        for v in 0..2 {
            assert_eq!(a.views[v][0].data, b.views[v][1].data);
            assert_eq!(a.views[v][1].data, b.views[v][0].data);
        }
    }

    #[test]
    fn factorized_equals_dense_with_materialized_weights() {
        let mut rng = Stream::new(10);
        let s = grid();
        let views = vec![
            vec![random_grid(s, &mut rng)],
            vec![random_grid(s, &mut rng)],
        ];
        let sample = sample_with(views, s);
        let mut fac = FactorizedFusionParams::random_init(s, 11);
        fac.instantiate_pair(0, 1);
        // Perturb the two directions so they differ.
        for v in fac.pair_thetas.get_mut(&(0, 1)).unwrap() {
            *v += 0.1 * rng.normal();
        }
        let dense_pairs: BTreeMap<PairKey, WeightMatrix> = [(0, 1), (1, 0)]
            .into_iter()
            .map(|k| (k, fac.materialize(k)))
            .collect();
        let facp = FusionParams::Factorized(fac);
        let densep = FusionParams::Dense(DenseFusionParams {
            grid: s,
            pairs: dense_pairs,
        });
        let cfg = FuseConfig {
            apply_softmax: false,
            ..Default::default()
        };
        let a = fuse_multiview(&sample, &facp, &cfg).unwrap();
        let b = fuse_multiview(&sample, &densep, &cfg).unwrap();
        for v in 0..2 {
            for (x, y) in a.views[v][0].data.iter().zip(&b.views[v][0].data) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn warp_then_identity_equals_warp() {
        let mut rng = Stream::new(12);
        let base = random_grid(grid(), &mut rng);
        let theta = [0.9, 0.1, 0.2, -0.05, 1.1, -0.3];
        let once = warp_affine(&base, &theta);
        let twice = warp_affine(&once, &THETA_IDENTITY);
        for (a, b) in once.data.iter().zip(&twice.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn param_counts_match_closed_forms() {
        let s64 = GridShape::new(64, 64);
        let dense = FusionParams::Dense(DenseFusionParams::zeros(s64, &[(0, 1)]));
        assert_eq!(dense.param_count(1), 16_777_216);
        let fac = FusionParams::Factorized(FactorizedFusionParams::random_init(s64, 1));
        assert_eq!(fac.param_count(1), 28_672);
        assert_eq!(finetune_param_count(s64), 24_576);
    }
}
