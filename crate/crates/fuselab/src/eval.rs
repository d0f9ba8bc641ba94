//! Metrics (JDR, MPJPE), weight-quality scoring against the epipolar
//! oracle, and the baseline comparison harness over held-out camera pairs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{
    fuse_multiview, DenseFusionParams, FactorizedFusionParams, FuseConfig, FusionParams, PairKey,
    WeightMatrix,
};
use crate::geometry::{
    epipolar_line, fundamental_from_cameras, point_line_distance, triangulate_dlt,
    FundamentalMatrix, Pixel, Point3,
};
use crate::heatmap::{argmax_subpixel, mse, softmax_temperature, GridShape, HeatmapGrid, MultiViewSample};
use crate::rng::Stream;
use crate::synthworld::{keys, pair_samples, Rig, WorldConfig};
use crate::train::{finetune, train_supervised, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction/ground-truth count mismatch: {0} vs {1}")]
    ShapeError(usize, usize),
    #[error("a meta-trained checkpoint is required for the meta baseline rows")]
    MissingCheckpoint,
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    World(#[from] crate::synthworld::WorldError),
    #[error(transparent)]
    Fusion(#[from] crate::fusion::FusionError),
    #[error(transparent)]
    Grad(#[from] crate::grad::GradError),
}

/// Percentage of predictions within `threshold` (cells) of the ground truth.
pub fn jdr(pred: &[Pixel], gt: &[Pixel], threshold: f64) -> Result<f64, EvalError> {
    assert!(threshold > 0.0, "threshold must be positive");
    if pred.len() != gt.len() {
        return Err(EvalError::ShapeError(pred.len(), gt.len()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let hits = pred
        .iter()
        .zip(gt)
        .filter(|(p, g)| (*p - *g).norm() <= threshold)
        .count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

/// Mean per-joint position error in world units, without alignment.
pub fn mpjpe(pred3d: &[Point3], gt3d: &[Point3]) -> Result<f64, EvalError> {
    if pred3d.len() != gt3d.len() {
        return Err(EvalError::ShapeError(pred3d.len(), gt3d.len()));
    }
    if pred3d.is_empty() {
        return Ok(0.0);
    }
    Ok(pred3d
        .iter()
        .zip(gt3d)
        .map(|(p, g)| (p - g).norm())
        .sum::<f64>()
        / pred3d.len() as f64)
}

/// Outcome of scoring weight maps against the epipolar geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandScore {
    /// Mean fraction of absolute weight mass within the band, over scored cells.
    pub mean_fraction: f64,
    /// True when no cell could be scored (the mean is then meaningless).
    pub undefined: bool,
    pub scored_cells: usize,
    pub skipped_low_mass: usize,
    pub skipped_degenerate: usize,
}

/// Fraction of |weights| within `band` cells of a line, or None for
/// negligible total mass.
fn band_fraction(
    weights: &[f64],
    line: &crate::geometry::Line2,
    grid: GridShape,
    band: f64,
) -> Option<f64> {
    let mut total = 0.0;
    let mut in_band = 0.0;
    for r in 0..grid.h {
        for c in 0..grid.w {
            let w = weights[r * grid.w + c].abs();
            total += w;
            if point_line_distance(line, &grid.cell_center(r, c)) <= band {
                in_band += w;
            }
        }
    }
    if total < 1e-8 {
        None
    } else {
        Some(in_band / total)
    }
}

/// Score arbitrary per-target-cell weight maps against the epipolar oracle.
/// `weights_of` returns the map over source cells for a target cell index.
pub fn score_weight_maps(
    weights_of: &dyn Fn(usize) -> Vec<f64>,
    f: &FundamentalMatrix,
    grid: GridShape,
    band: f64,
    stride: usize,
) -> BandScore {
    assert!(band > 0.0, "band must be positive");
    let stride = stride.max(1);
    let mut sum = 0.0;
    let mut scored = 0usize;
    let mut low_mass = 0usize;
    let mut degenerate = 0usize;
    for i in (0..grid.cells()).step_by(stride) {
        let (r, c) = (i / grid.w, i % grid.w);
        let line = match epipolar_line(f, &grid.cell_center(r, c)) {
            Ok(l) => l,
            Err(_) => {
                degenerate += 1;
                continue;
            }
        };
        match band_fraction(&weights_of(i), &line, grid, band) {
            Some(frac) => {
                sum += frac;
                scored += 1;
            }
            None => low_mass += 1,
        }
    }
    BandScore {
        mean_fraction: if scored > 0 {
            sum / scored as f64
        } else {
            f64::NAN
        },
        undefined: scored == 0,
        scored_cells: scored,
        skipped_low_mass: low_mass,
        skipped_degenerate: degenerate,
    }
}

/// Fraction of learned (warped) weight mass within `band` cells of the true
/// epipolar line, averaged over a strided subsample of target cells.
pub fn epipolar_mass_score(
    params: &FactorizedFusionParams,
    pair: PairKey,
    f: &FundamentalMatrix,
    band: f64,
    stride: usize,
) -> BandScore {
    let grid = params.grid;
    let theta = params.theta_for(pair).to_vec();
    let base = params.base.clone();
    let weights_of = move |i: usize| -> Vec<f64> {
        let mut out = vec![0.0; grid.cells()];
        crate::fusion::warp_into(&base, grid, &theta[6 * i..6 * i + 6], &mut out);
        out
    };
    score_weight_maps(&weights_of, f, grid, band, stride)
}

/// The same score for uniform weight maps: the band-coverage fraction of the
/// grid, used as the no-structure reference.
pub fn uniform_band_score(
    f: &FundamentalMatrix,
    grid: GridShape,
    band: f64,
    stride: usize,
) -> BandScore {
    let weights_of = move |_i: usize| vec![1.0; grid.cells()];
    score_weight_maps(&weights_of, f, grid, band, stride)
}

/// Decoded peak per (view, joint).
pub fn decode_sample(sample: &MultiViewSample) -> Vec<Vec<Pixel>> {
    sample
        .views
        .iter()
        .map(|joints| joints.iter().map(argmax_subpixel).collect())
        .collect()
}

/// Metrics of one model variant on one held-out pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairResult {
    pub pair: (usize, usize),
    pub jdr_all: f64,
    pub jdr_visible: f64,
    pub jdr_occluded: f64,
    pub per_joint_jdr: Vec<f64>,
    pub mpjpe: f64,
    pub test_loss: f64,
    pub detections: usize,
    pub occluded_detections: usize,
    pub triangulation_failures: usize,
}

/// Evaluate decoded 2D peaks and triangulated 3D joints of (optionally
/// fused) samples against ground truth. The loss column matches the
/// training objective: pre-softmax fused-map MSE, or the softmaxed variant
/// when `fuse_cfg.loss_on_softmax` is set.
pub fn evaluate_samples(
    rig: &Rig,
    samples: &[MultiViewSample],
    params: Option<&FusionParams>,
    fuse_cfg: &FuseConfig,
    jdr_threshold: f64,
) -> Result<PairResult, EvalError> {
    assert!(!samples.is_empty());
    let pair = (samples[0].cams[0], samples[0].cams[1]);
    let mut all_pred = Vec::new();
    let mut all_gt = Vec::new();
    let mut vis_pred = Vec::new();
    let mut vis_gt = Vec::new();
    let mut occ_pred = Vec::new();
    let mut occ_gt = Vec::new();
    let n_joints = samples[0].n_joints();
    let mut joint_pred: Vec<Vec<Pixel>> = vec![Vec::new(); n_joints];
    let mut joint_gt: Vec<Vec<Pixel>> = vec![Vec::new(); n_joints];
    let mut pred3d = Vec::new();
    let mut gt3d = Vec::new();
    let mut tri_failures = 0usize;
    let mut loss_acc = 0.0;
    let raw_cfg = FuseConfig {
        apply_softmax: false,
        ..*fuse_cfg
    };
    for sample in samples {
        let (fused, pre_softmax) = match params {
            Some(p) => {
                let pre = fuse_multiview(sample, p, &raw_cfg)?;
                let post = if fuse_cfg.apply_softmax {
                    fuse_multiview(sample, p, fuse_cfg)?
                } else {
                    pre.clone()
                };
                (post, pre)
            }
            None => (sample.clone(), sample.clone()),
        };
        for v in 0..sample.n_views() {
            loss_acc += if fuse_cfg.loss_on_softmax {
                let sm = |g: &HeatmapGrid| {
                    softmax_temperature(g, fuse_cfg.softmax_t).expect("positive temperature")
                };
                let fused_sm: Vec<HeatmapGrid> = pre_softmax.views[v].iter().map(sm).collect();
                let gt_sm: Vec<HeatmapGrid> = sample.gt_heatmaps[v].iter().map(sm).collect();
                mse(&fused_sm, &gt_sm).expect("shapes match by construction")
            } else {
                mse(&pre_softmax.views[v], &sample.gt_heatmaps[v])
                    .expect("shapes match by construction")
            };
        }
        let decoded = decode_sample(&fused);
        for v in 0..sample.n_views() {
            for j in 0..n_joints {
                if !sample.shape.contains(&sample.gt_pixels[v][j]) {
                    continue;
                }
                let (p, g) = (decoded[v][j], sample.gt_pixels[v][j]);
                all_pred.push(p);
                all_gt.push(g);
                joint_pred[j].push(p);
                joint_gt[j].push(g);
                if sample.visibility[v][j] {
                    vis_pred.push(p);
                    vis_gt.push(g);
                } else {
                    occ_pred.push(p);
                    occ_gt.push(g);
                }
            }
        }
        let cams: Vec<_> = sample
            .cams
            .iter()
            .map(|c| rig.cameras[*c].clone())
            .collect();
        for j in 0..n_joints {
            let pixels: Vec<Pixel> = (0..sample.n_views()).map(|v| decoded[v][j]).collect();
            match triangulate_dlt(&cams, &pixels) {
                Ok(p) => {
                    pred3d.push(p);
                    gt3d.push(sample.joints_world[j]);
                }
                Err(_) => tri_failures += 1,
            }
        }
    }
    let per_joint_jdr = joint_pred
        .iter()
        .zip(&joint_gt)
        .map(|(p, g)| jdr(p, g, jdr_threshold).unwrap_or(0.0))
        .collect();
    Ok(PairResult {
        pair,
        jdr_all: jdr(&all_pred, &all_gt, jdr_threshold)?,
        jdr_visible: jdr(&vis_pred, &vis_gt, jdr_threshold)?,
        jdr_occluded: jdr(&occ_pred, &occ_gt, jdr_threshold)?,
        per_joint_jdr,
        mpjpe: mpjpe(&pred3d, &gt3d)?,
        test_loss: loss_acc / (samples.len() * samples[0].n_views()) as f64,
        detections: all_pred.len(),
        occluded_detections: occ_pred.len(),
        triangulation_failures: tri_failures,
    })
}

/// Evaluation-side configuration of the baseline harness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k_list: Vec<usize>,
    pub jdr_threshold: f64,
    pub band: f64,
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    #[serde(default = "default_full_train")]
    pub full_train_samples: usize,
    #[serde(default = "default_holdout_cams")]
    pub holdout_cams: usize,
    #[serde(default = "default_holdout_pairs")]
    pub holdout_pairs: usize,
    /// Epoch budget shared by every K-shot adaptation row (dense training
    /// and factorized finetuning alike), so baselines differ only in what
    /// they adapt, not in how long.
    #[serde(default = "default_adapt_epochs")]
    pub adapt_epochs: usize,
}

fn default_eval_samples() -> usize {
    80
}
fn default_full_train() -> usize {
    400
}
fn default_holdout_cams() -> usize {
    4
}
fn default_holdout_pairs() -> usize {
    6
}
fn default_adapt_epochs() -> usize {
    6
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k_list: vec![50, 100, 200, 500],
            jdr_threshold: 2.0,
            band: 3.0,
            eval_samples: default_eval_samples(),
            full_train_samples: default_full_train(),
            holdout_cams: default_holdout_cams(),
            holdout_pairs: default_holdout_pairs(),
            adapt_epochs: default_adapt_epochs(),
        }
    }
}

/// Deterministic split of a rig's cameras into meta-training and held-out
/// sets, returning (training pairs, held-out evaluation pairs).
pub fn holdout_split(
    rig: &Rig,
    holdout_cams: usize,
    holdout_pairs: usize,
    seed: u64,
) -> (Vec<PairKey>, Vec<PairKey>) {
    let n = rig.n_cams();
    let holdout_cams = holdout_cams.min(n.saturating_sub(2));
    let mut cams: Vec<usize> = (0..n).collect();
    let mut rng = Stream::new(seed).derive(0x401d);
    rng.shuffle(&mut cams);
    let held: Vec<usize> = cams[n - holdout_cams..].to_vec();
    let train: Vec<usize> = cams[..n - holdout_cams].to_vec();
    let mut train_pairs = Vec::new();
    for &a in &train {
        for &b in &train {
            if a != b {
                train_pairs.push((a, b));
            }
        }
    }
    train_pairs.sort();
    let mut held_pairs = Vec::new();
    for &a in &held {
        for &b in &held {
            if a != b {
                held_pairs.push((a, b));
            }
        }
    }
    held_pairs.sort();
    let mut rng2 = Stream::new(seed).derive(0x401e);
    rng2.shuffle(&mut held_pairs);
    held_pairs.truncate(holdout_pairs);
    held_pairs.sort();
    (train_pairs, held_pairs)
}

/// One line of the comparison table: a baseline at a finetuning budget, with
/// per-pair detail and median aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineRow {
    pub baseline: String,
    pub k: Option<usize>,
    pub pairs: Vec<PairResult>,
    pub jdr_all: f64,
    pub jdr_visible: f64,
    pub jdr_occluded: f64,
    pub mpjpe: f64,
    pub test_loss: f64,
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn aggregate(baseline: &str, k: Option<usize>, pairs: Vec<PairResult>) -> BaselineRow {
    let pick = |f: &dyn Fn(&PairResult) -> f64| {
        let mut v: Vec<f64> = pairs.iter().map(f).collect();
        median(&mut v)
    };
    BaselineRow {
        baseline: baseline.to_string(),
        k,
        jdr_all: pick(&|p| p.jdr_all),
        jdr_visible: pick(&|p| p.jdr_visible),
        jdr_occluded: pick(&|p| p.jdr_occluded),
        mpjpe: pick(&|p| p.mpjpe),
        test_loss: pick(&|p| p.test_loss),
        pairs,
    }
}

/// The full comparison report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub config_fingerprint: String,
    pub holdout_pairs: Vec<(usize, usize)>,
    pub rows: Vec<BaselineRow>,
}

impl EvalReport {
    pub fn row(&self, baseline: &str, k: Option<usize>) -> Option<&BaselineRow> {
        self.rows
            .iter()
            .find(|r| r.baseline == baseline && r.k == k)
    }
}

/// Pre-trained models the harness adapts per held-out pair.
pub struct BaselineModels<'a> {
    /// Meta-trained factorized checkpoint (required).
    pub meta: &'a FactorizedFusionParams,
    /// Plainly pre-trained factorized checkpoint; its rows are skipped when
    /// absent.
    pub affine: Option<&'a FactorizedFusionParams>,
    /// Dense weights pre-trained on a source pair; the K-sample dense rows
    /// start from these (position-sensitive) weights remapped onto the
    /// target pair. Zero weights are used when absent.
    pub dense_source: Option<&'a DenseFusionParams>,
}

/// Remap a source-pair dense model onto a target pair: the two direction
/// matrices of the source pair initialize the target pair's directions.
fn remap_dense(source: &DenseFusionParams, target: PairKey) -> DenseFusionParams {
    let mut mats: Vec<WeightMatrix> = source.pairs.values().cloned().collect();
    let n = source.grid.cells();
    while mats.len() < 2 {
        mats.push(WeightMatrix::zeros(n, n));
    }
    let mut pairs = std::collections::BTreeMap::new();
    pairs.insert(target, mats[0].clone());
    pairs.insert((target.1, target.0), mats[1].clone());
    DenseFusionParams {
        grid: source.grid,
        pairs,
    }
}

/// Supervised dense pre-training on one source pair, for the K-shot dense
/// baseline's initialization.
pub fn pretrain_dense_source(
    rig: &Rig,
    source_pair: PairKey,
    n_samples: usize,
    world: &WorldConfig,
    train_cfg: &TrainConfig,
) -> Result<DenseFusionParams, EvalError> {
    let data = pair_samples(
        rig,
        source_pair,
        n_samples,
        world,
        keys::for_pair(keys::TASK, source_pair) ^ 0xde45e,
    )?;
    let init = FusionParams::Dense(DenseFusionParams::zeros(
        world.grid,
        &[source_pair, (source_pair.1, source_pair.0)],
    ));
    match train_supervised(&init, &data, train_cfg)? {
        FusionParams::Dense(d) => Ok(d),
        _ => unreachable!(),
    }
}

/// Run the baseline comparison on held-out pairs: no fusion, dense weights
/// trained on K samples, dense weights trained on a full per-pair set,
/// factorized weights finetuned from plain pre-training, and factorized
/// weights finetuned from the meta-trained initialization.
pub fn run_baselines(
    rig: &Rig,
    world: &WorldConfig,
    train_cfg: &TrainConfig,
    eval_cfg: &EvalConfig,
    models: &BaselineModels,
) -> Result<EvalReport, EvalError> {
    let (_train_pairs, held) = holdout_split(
        rig,
        eval_cfg.holdout_cams,
        eval_cfg.holdout_pairs,
        world.seed,
    );
    let fuse_cfg = FuseConfig {
        loss_on_softmax: train_cfg.loss_on_softmax,
        ..FuseConfig::default()
    };
    let adapt_cfg = TrainConfig {
        epochs: eval_cfg.adapt_epochs,
        ..train_cfg.clone()
    };
    let max_k = eval_cfg.k_list.iter().copied().max().unwrap_or(0);

    struct PairData {
        pair: PairKey,
        pool: Vec<MultiViewSample>,
        eval: Vec<MultiViewSample>,
        full: Vec<MultiViewSample>,
    }
    let data: Vec<PairData> = held
        .par_iter()
        .map(|&pair| -> Result<PairData, EvalError> {
            Ok(PairData {
                pair,
                pool: pair_samples(rig, pair, max_k, world, keys::for_pair(keys::FINETUNE, pair))?,
                eval: pair_samples(
                    rig,
                    pair,
                    eval_cfg.eval_samples,
                    world,
                    keys::for_pair(keys::EVAL, pair),
                )?,
                full: pair_samples(
                    rig,
                    pair,
                    eval_cfg.full_train_samples,
                    world,
                    keys::for_pair(keys::FINETUNE, pair) ^ 0xf011,
                )?,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut rows: Vec<BaselineRow> = Vec::new();

    // No fusion: identical across K by definition.
    let no_fusion: Vec<PairResult> = data
        .par_iter()
        .map(|d| evaluate_samples(rig, &d.eval, None, &fuse_cfg, eval_cfg.jdr_threshold))
        .collect::<Result<_, _>>()?;
    rows.push(aggregate("no-fusion", None, no_fusion));

    // Dense weights trained on the full per-pair set.
    let dense_full: Vec<PairResult> = data
        .par_iter()
        .map(|d| -> Result<PairResult, EvalError> {
            let init = FusionParams::Dense(DenseFusionParams::zeros(
                world.grid,
                &[d.pair, (d.pair.1, d.pair.0)],
            ));
            let trained = train_supervised(&init, &d.full, train_cfg)?;
            evaluate_samples(
                rig,
                &d.eval,
                Some(&trained),
                &fuse_cfg,
                eval_cfg.jdr_threshold,
            )
        })
        .collect::<Result<_, _>>()?;
    rows.push(aggregate("dense-full", None, dense_full));

    for &k in &eval_cfg.k_list {
        let k = k.min(max_k);
        let dense_k: Vec<PairResult> = data
            .par_iter()
            .map(|d| -> Result<PairResult, EvalError> {
                let init = FusionParams::Dense(match models.dense_source {
                    Some(src) => remap_dense(src, d.pair),
                    None => DenseFusionParams::zeros(world.grid, &[d.pair, (d.pair.1, d.pair.0)]),
                });
                let trained = train_supervised(&init, &d.pool[..k], &adapt_cfg)?;
                evaluate_samples(
                    rig,
                    &d.eval,
                    Some(&trained),
                    &fuse_cfg,
                    eval_cfg.jdr_threshold,
                )
            })
            .collect::<Result<_, _>>()?;
        rows.push(aggregate("dense-k", Some(k), dense_k));

        if let Some(affine) = models.affine {
            let affine_k: Vec<PairResult> = data
                .par_iter()
                .map(|d| -> Result<PairResult, EvalError> {
                    let adapted = finetune(
                        &FusionParams::Factorized(affine.clone()),
                        d.pair,
                        &d.pool[..k],
                        &adapt_cfg,
                    )?;
                    evaluate_samples(
                        rig,
                        &d.eval,
                        Some(&adapted),
                        &fuse_cfg,
                        eval_cfg.jdr_threshold,
                    )
                })
                .collect::<Result<_, _>>()?;
            rows.push(aggregate("affine-k", Some(k), affine_k));
        }

        let meta_k: Vec<PairResult> = data
            .par_iter()
            .map(|d| -> Result<PairResult, EvalError> {
                let adapted = finetune(
                    &FusionParams::Factorized(models.meta.clone()),
                    d.pair,
                    &d.pool[..k],
                    &adapt_cfg,
                )?;
                evaluate_samples(
                    rig,
                    &d.eval,
                    Some(&adapted),
                    &fuse_cfg,
                    eval_cfg.jdr_threshold,
                )
            })
            .collect::<Result<_, _>>()?;
        rows.push(aggregate("meta-k", Some(k), meta_k));
    }

    Ok(EvalReport {
        seed: world.seed,
        config_fingerprint: String::new(),
        holdout_pairs: held,
        rows,
    })
}

/// Fundamental matrix of an ordered pair in the weight-map direction: lines
/// of target-view pixels drawn in the source view.
pub fn pair_fundamental(rig: &Rig, pair: PairKey) -> Result<FundamentalMatrix, EvalError> {
    fundamental_from_cameras(&rig.cameras[pair.0], &rig.cameras[pair.1])
        .map_err(|e| EvalError::World(e.into()))
}
