//! Reverse-mode gradients of the fusion pipeline, the one-inner-step
//! meta-gradient, and a finite-difference verifier.
//!
//! The meta-gradient follows the standard factorization for a single plain
//! gradient-descent inner step: with u = p - alpha * grad L_train(p),
//! d/dp L_test(u) = g_test(u) - alpha * H_train(p) * g_test(u). The
//! Hessian-vector product is computed exactly by running the whole
//! forward-and-backward pass on dual numbers (forward-over-reverse), never
//! by assembling a Hessian.

pub mod dual;
pub mod tape;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::fusion::{FactorizedFusionParams, FusionParams, PairKey};
use crate::heatmap::{softmax_temperature, GridShape, MultiViewSample};
use crate::rng::Stream;
use crate::synthworld::Task;

pub use dual::{Dual, Scalar};
pub use tape::{Op, Tape};

#[derive(Debug, Error)]
pub enum GradError {
    #[error("non-finite value produced at tape node {node}")]
    NumericalOverflow { node: usize },
    #[error("operation requires factorized fusion parameters")]
    WrongModelKind,
    #[error("no fusion weights for ordered pair ({0}, {1})")]
    MissingPairParams(usize, usize),
}

/// How factorized theta blocks map onto tape leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaBinding {
    /// Directions without an explicit per-pair block share one generic-init
    /// leaf; its gradient accumulates over all of them (joint pre-training).
    SharedInit,
    /// Every direction gets an independent leaf, copied from its block or
    /// from the generic init (per-task adaptation).
    PerDirection,
}

/// Loss-side configuration.
#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    /// Compare softmaxed fused maps against softmaxed targets instead of raw
    /// fused maps against raw targets.
    pub loss_on_softmax: bool,
    pub softmax_t: f64,
    /// Weight of an additional raw fused-map MSE term on top of the
    /// softmaxed one. Only meaningful with `loss_on_softmax`; the raw term
    /// penalizes weights in proportion to the response they inject, which
    /// prunes fusion mass that the sharpened term is indifferent to.
    pub pre_softmax_mix: f64,
    pub theta_binding: ThetaBinding,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            loss_on_softmax: false,
            softmax_t: 0.2,
            pre_softmax_mix: 0.0,
            theta_binding: ThetaBinding::SharedInit,
        }
    }
}

/// Gradients shaped exactly like the parameters they refer to.
#[derive(Debug, Clone, Default)]
pub struct GradientBundle {
    pub d_base: Vec<f64>,
    /// Gradient of the shared generic block; empty when unused.
    pub d_theta_init: Vec<f64>,
    pub d_pair_thetas: BTreeMap<PairKey, Vec<f64>>,
    pub d_dense: BTreeMap<PairKey, Vec<f64>>,
}

/// Ordered (target, source) camera pairs a batch needs weights for.
fn needed_dirs(batch: &[MultiViewSample]) -> BTreeSet<PairKey> {
    let mut dirs = BTreeSet::new();
    for s in batch {
        for tv in 0..s.n_views() {
            for sv in 0..s.n_views() {
                if tv != sv {
                    dirs.insert((s.cams[tv], s.cams[sv]));
                }
            }
        }
    }
    dirs
}

/// Append the fused-MSE loss graph for a batch, given one weights node per
/// direction. Returns the scalar loss node.
fn build_loss_graph<T: Scalar>(
    tape: &mut Tape<T>,
    dir_weights: &BTreeMap<PairKey, usize>,
    batch: &[MultiViewSample],
    cfg: &LossConfig,
) -> usize {
    let mut total: Option<usize> = None;
    let mut cells = 0usize;
    for sample in batch {
        let v = sample.n_views();
        let j = sample.n_joints();
        for tv in 0..v {
            for jc in 0..j {
                let mut node = tape.leaf_f64(&sample.views[tv][jc].data);
                for sv in 0..v {
                    if sv == tv {
                        continue;
                    }
                    let w = dir_weights[&(sample.cams[tv], sample.cams[sv])];
                    let src = tape.leaf_f64(&sample.views[sv][jc].data);
                    node = tape.fuse_matvec(node, w, src);
                }
                let gt = &sample.gt_heatmaps[tv][jc];
                let sq = if cfg.loss_on_softmax {
                    let sm = tape.softmax_t(node, cfg.softmax_t);
                    let gt_sm = softmax_temperature(gt, cfg.softmax_t)
                        .expect("softmax_t validated positive");
                    let gt_leaf = tape.leaf_f64(&gt_sm.data);
                    let sharp = tape.sq_diff_sum(sm, gt_leaf);
                    if cfg.pre_softmax_mix > 0.0 {
                        let gt_raw = tape.leaf_f64(&gt.data);
                        let raw = tape.sq_diff_sum(node, gt_raw);
                        let scaled = tape.scale(raw, cfg.pre_softmax_mix);
                        tape.add(sharp, scaled)
                    } else {
                        sharp
                    }
                } else {
                    let gt_leaf = tape.leaf_f64(&gt.data);
                    tape.sq_diff_sum(node, gt_leaf)
                };
                total = Some(match total {
                    None => sq,
                    Some(t) => tape.add(t, sq),
                });
                cells += sample.shape.cells();
            }
        }
    }
    let total = total.expect("non-empty batch");
    tape.scale(total, 1.0 / cells as f64)
}

/// Tape leaves bound to the learnable tensors of a parameter set.
struct Bound {
    base: Option<usize>,
    init: Option<usize>,
    thetas: BTreeMap<PairKey, usize>,
    dense: BTreeMap<PairKey, usize>,
    dir_weights: BTreeMap<PairKey, usize>,
}

fn bind_params<T: Scalar>(
    tape: &mut Tape<T>,
    params: &FusionParams,
    dirs: &BTreeSet<PairKey>,
    binding: ThetaBinding,
    tangent: Option<&GradientBundle>,
) -> Result<Bound, GradError> {
    let lift = |vals: &[f64], tan: Option<&Vec<f64>>| -> Vec<T> {
        match tan {
            Some(t) => vals
                .iter()
                .zip(t)
                .map(|(v, tk)| T::with_tangent(*v, *tk))
                .collect(),
            None => vals.iter().map(|v| T::from_f64(*v)).collect(),
        }
    };
    match params {
        FusionParams::Dense(d) => {
            let mut dense = BTreeMap::new();
            let mut dir_weights = BTreeMap::new();
            for dir in dirs {
                let w = d
                    .pairs
                    .get(dir)
                    .ok_or(GradError::MissingPairParams(dir.0, dir.1))?;
                let tan = tangent.and_then(|t| t.d_dense.get(dir));
                let leaf = tape.leaf(lift(&w.data, tan));
                dense.insert(*dir, leaf);
                dir_weights.insert(*dir, leaf);
            }
            Ok(Bound {
                base: None,
                init: None,
                thetas: BTreeMap::new(),
                dense,
                dir_weights,
            })
        }
        FusionParams::Factorized(f) => {
            let base = tape.leaf(lift(&f.base, tangent.map(|t| &t.d_base)));
            let mut init = None;
            let mut thetas = BTreeMap::new();
            let mut dir_weights = BTreeMap::new();
            let mut warp_cache: BTreeMap<usize, usize> = BTreeMap::new();
            for dir in dirs {
                let explicit = f.pair_thetas.contains_key(dir);
                let leaf = if explicit || binding == ThetaBinding::PerDirection {
                    let tan = tangent.and_then(|t| t.d_pair_thetas.get(dir));
                    let leaf = tape.leaf(lift(f.theta_for(*dir), tan));
                    thetas.insert(*dir, leaf);
                    leaf
                } else {
                    *init.get_or_insert_with(|| {
                        let tan = tangent.map(|t| &t.d_theta_init);
                        tape.leaf(lift(&f.theta_init, tan))
                    })
                };
                let w = *warp_cache
                    .entry(leaf)
                    .or_insert_with(|| tape.warp(base, leaf, f.grid));
                dir_weights.insert(*dir, w);
            }
            Ok(Bound {
                base: Some(base),
                init,
                thetas,
                dense: BTreeMap::new(),
                dir_weights,
            })
        }
    }
}

fn extract_bundle<T: Scalar>(adj: &[Vec<T>], bound: &Bound) -> GradientBundle {
    let pick = |v: &T| v.primal();
    GradientBundle {
        d_base: bound
            .base
            .map(|id| adj[id].iter().map(&pick).collect())
            .unwrap_or_default(),
        d_theta_init: bound
            .init
            .map(|id| adj[id].iter().map(&pick).collect())
            .unwrap_or_default(),
        d_pair_thetas: bound
            .thetas
            .iter()
            .map(|(k, id)| (*k, adj[*id].iter().map(&pick).collect()))
            .collect(),
        d_dense: bound
            .dense
            .iter()
            .map(|(k, id)| (*k, adj[*id].iter().map(&pick).collect()))
            .collect(),
    }
}

fn finite_or_overflow(tape: &Tape<f64>, loss_node: usize) -> Result<f64, GradError> {
    let loss = tape.value(loss_node)[0];
    if loss.is_finite() {
        Ok(loss)
    } else {
        let node = tape.first_non_finite().unwrap_or(loss_node);
        Err(GradError::NumericalOverflow { node })
    }
}

/// Batch loss (Eq.-style fused-map MSE averaged over all channels) and exact
/// reverse-mode gradients for every learnable tensor the batch touches.
pub fn loss_and_grad(
    params: &FusionParams,
    batch: &[MultiViewSample],
    cfg: &LossConfig,
) -> Result<(f64, GradientBundle), GradError> {
    assert!(!batch.is_empty(), "non-empty batch required");
    let dirs = needed_dirs(batch);
    let mut tape: Tape<f64> = Tape::new();
    let bound = bind_params(&mut tape, params, &dirs, cfg.theta_binding, None)?;
    let loss_node = build_loss_graph(&mut tape, &bound.dir_weights, batch, cfg);
    let loss = finite_or_overflow(&tape, loss_node)?;
    let adj = tape.backward(loss_node);
    Ok((loss, extract_bundle(&adj, &bound)))
}

/// Forward-only batch loss.
pub fn loss_only(
    params: &FusionParams,
    batch: &[MultiViewSample],
    cfg: &LossConfig,
) -> Result<f64, GradError> {
    assert!(!batch.is_empty(), "non-empty batch required");
    let dirs = needed_dirs(batch);
    let mut tape: Tape<f64> = Tape::new();
    let bound = bind_params(&mut tape, params, &dirs, cfg.theta_binding, None)?;
    let loss_node = build_loss_graph(&mut tape, &bound.dir_weights, batch, cfg);
    finite_or_overflow(&tape, loss_node)
}

/// An objective with exact gradient and Hessian-vector products over a flat
/// parameter vector. The MAML composition below is written against this so
/// closed-form toy objectives exercise the same code path as the fusion loss.
pub trait MetaObjective {
    fn dim(&self) -> usize;
    fn loss_and_grad(&self, p: &[f64]) -> Result<(f64, Vec<f64>), GradError>;
    fn hvp(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>, GradError>;
}

/// Result of one meta-gradient evaluation.
#[derive(Debug, Clone)]
pub struct MamlStep {
    /// Loss on the train split at the original parameters.
    pub train_loss: f64,
    /// Loss on the test split at the one-step-adapted parameters.
    pub test_loss: f64,
    /// Gradient of the adapted test loss w.r.t. the original parameters.
    pub grad: Vec<f64>,
}

/// Gradient of `L_test(p - alpha * grad L_train(p))` with respect to `p`.
/// With `first_order` the inner gradient is treated as a constant.
pub fn maml_meta_grad(
    train: &dyn MetaObjective,
    test: &dyn MetaObjective,
    p: &[f64],
    alpha: f64,
    first_order: bool,
) -> Result<MamlStep, GradError> {
    let (train_loss, g_train) = train.loss_and_grad(p)?;
    let adapted: Vec<f64> = p.iter().zip(&g_train).map(|(x, g)| x - alpha * g).collect();
    let (test_loss, g_test) = test.loss_and_grad(&adapted)?;
    if first_order || alpha == 0.0 {
        return Ok(MamlStep {
            train_loss,
            test_loss,
            grad: g_test,
        });
    }
    let hv = train.hvp(p, &g_test)?;
    let grad: Vec<f64> = g_test
        .iter()
        .zip(&hv)
        .map(|(g, h)| g - alpha * h)
        .collect();
    Ok(MamlStep {
        train_loss,
        test_loss,
        grad,
    })
}

/// The two-direction fusion loss of one task's camera pair as a flat-vector
/// objective: layout [base | theta(dir0) | theta(dir1)], directions sorted.
pub struct PairObjective<'a> {
    pub grid: GridShape,
    pub dirs: [PairKey; 2],
    pub batch: &'a [MultiViewSample],
    pub cfg: LossConfig,
}

impl<'a> PairObjective<'a> {
    pub fn new(
        grid: GridShape,
        pair: PairKey,
        batch: &'a [MultiViewSample],
        cfg: LossConfig,
    ) -> Self {
        let mut dirs = [(pair.0, pair.1), (pair.1, pair.0)];
        dirs.sort();
        PairObjective {
            grid,
            dirs,
            batch,
            cfg,
        }
    }

    pub fn flatten(&self, f: &FactorizedFusionParams) -> Vec<f64> {
        let mut p = f.base.clone();
        for d in self.dirs {
            p.extend_from_slice(f.theta_for(d));
        }
        p
    }

    fn slices<'p>(&self, p: &'p [f64]) -> (&'p [f64], &'p [f64], &'p [f64]) {
        let n = self.grid.cells();
        (&p[..n], &p[n..n + 6 * n], &p[n + 6 * n..n + 12 * n])
    }

    fn graph<T: Scalar>(&self, p: &[f64], tangent: Option<&[f64]>) -> (Tape<T>, [usize; 3], usize) {
        let (b, t0, t1) = self.slices(p);
        let mut tape: Tape<T> = Tape::new();
        let lift = |tape: &mut Tape<T>, vals: &[f64], off: usize| -> usize {
            match tangent {
                Some(tan) => tape.leaf(
                    vals.iter()
                        .enumerate()
                        .map(|(k, v)| T::with_tangent(*v, tan[off + k]))
                        .collect(),
                ),
                None => tape.leaf_f64(vals),
            }
        };
        let n = self.grid.cells();
        let base = lift(&mut tape, b, 0);
        let th0 = lift(&mut tape, t0, n);
        let th1 = lift(&mut tape, t1, n + 6 * n);
        let w0 = tape.warp(base, th0, self.grid);
        let w1 = tape.warp(base, th1, self.grid);
        let dir_weights: BTreeMap<PairKey, usize> =
            [(self.dirs[0], w0), (self.dirs[1], w1)].into();
        let loss = build_loss_graph(&mut tape, &dir_weights, self.batch, &self.cfg);
        (tape, [base, th0, th1], loss)
    }
}

impl MetaObjective for PairObjective<'_> {
    fn dim(&self) -> usize {
        13 * self.grid.cells()
    }

    fn loss_and_grad(&self, p: &[f64]) -> Result<(f64, Vec<f64>), GradError> {
        let (tape, leaves, loss_node) = self.graph::<f64>(p, None);
        let loss = finite_or_overflow(&tape, loss_node)?;
        let adj = tape.backward(loss_node);
        let mut g = Vec::with_capacity(p.len());
        for id in leaves {
            g.extend_from_slice(&adj[id]);
        }
        Ok((loss, g))
    }

    fn hvp(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>, GradError> {
        let (tape, leaves, loss_node) = self.graph::<Dual>(p, Some(v));
        if let Some(node) = tape.first_non_finite() {
            return Err(GradError::NumericalOverflow { node });
        }
        let adj = tape.backward(loss_node);
        let mut h = Vec::with_capacity(p.len());
        for id in leaves {
            h.extend(adj[id].iter().map(|d| d.tangent()));
        }
        Ok(h)
    }
}

/// Detailed meta-gradient evaluation: both losses plus the gradient bundle.
#[derive(Debug, Clone)]
pub struct MetaEval {
    pub train_loss: f64,
    pub test_loss: f64,
    pub d_base: Vec<f64>,
    /// Sum over both direction copies of the generic block.
    pub d_theta_init: Vec<f64>,
    pub d_pair_thetas: BTreeMap<PairKey, Vec<f64>>,
}

impl MetaEval {
    /// Bundle carrying gradients for the shared (base, generic theta) only,
    /// as consumed by the outer meta update.
    pub fn fold_to_init(&self) -> GradientBundle {
        GradientBundle {
            d_base: self.d_base.clone(),
            d_theta_init: self.d_theta_init.clone(),
            d_pair_thetas: BTreeMap::new(),
            d_dense: BTreeMap::new(),
        }
    }
}

/// Inner- and outer-loss evaluation of one task at the given factorized
/// parameters, with the meta-gradient taken with respect to the ORIGINAL
/// (base, generic theta). Gradients flowing through both direction copies
/// of the generic block are summed into `d_theta_init`; per-direction parts
/// are also reported.
pub fn meta_grad_detailed(
    params: &FusionParams,
    task: &Task,
    alpha: f64,
    first_order: bool,
    cfg: &LossConfig,
) -> Result<MetaEval, GradError> {
    assert!(alpha >= 0.0, "alpha must be non-negative");
    let f = match params {
        FusionParams::Factorized(f) => f,
        FusionParams::Dense(_) => return Err(GradError::WrongModelKind),
    };
    assert!(
        !task.train.is_empty() && !task.test.is_empty(),
        "task splits must be non-empty"
    );
    let train_obj = PairObjective::new(f.grid, task.pair, &task.train, *cfg);
    let test_obj = PairObjective::new(f.grid, task.pair, &task.test, *cfg);
    let p = train_obj.flatten(f);
    let step = maml_meta_grad(&train_obj, &test_obj, &p, alpha, first_order)?;
    let n = f.grid.cells();
    let mg = &step.grad;
    let d_base = mg[..n].to_vec();
    let d0 = &mg[n..n + 6 * n];
    let d1 = &mg[n + 6 * n..n + 12 * n];
    let d_theta_init: Vec<f64> = d0.iter().zip(d1).map(|(a, b)| a + b).collect();
    let mut d_pair_thetas = BTreeMap::new();
    d_pair_thetas.insert(train_obj.dirs[0], d0.to_vec());
    d_pair_thetas.insert(train_obj.dirs[1], d1.to_vec());
    Ok(MetaEval {
        train_loss: step.train_loss,
        test_loss: step.test_loss,
        d_base,
        d_theta_init,
        d_pair_thetas,
    })
}

/// The adapted test loss of a task and its gradient w.r.t. the original
/// (base, generic theta), differentiating through the inner step unless
/// `first_order` is set.
pub fn meta_grad(
    params: &FusionParams,
    task: &Task,
    alpha: f64,
    first_order: bool,
    cfg: &LossConfig,
) -> Result<(f64, GradientBundle), GradError> {
    let eval = meta_grad_detailed(params, task, alpha, first_order, cfg)?;
    let bundle = GradientBundle {
        d_base: eval.d_base.clone(),
        d_theta_init: eval.d_theta_init.clone(),
        d_pair_thetas: eval.d_pair_thetas.clone(),
        d_dense: BTreeMap::new(),
    };
    Ok((eval.test_loss, bundle))
}

/// Random affine blocks whose sampling coordinates all sit at least
/// `margin` cells away from bilinear cell boundaries. Finite-difference
/// verification of warp gradients needs such points: the warp is piecewise
/// bilinear and central differences straddling a boundary are meaningless.
pub fn boundary_safe_thetas(grid: GridShape, seed: u64, margin: f64) -> Vec<f64> {
    let n = grid.cells();
    let (h, w) = (grid.h, grid.w);
    let (sx, sy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    let root = Stream::new(seed).derive(0xb5af);
    let mut out = Vec::with_capacity(6 * n);
    for i in 0..n {
        'attempt: for attempt in 0..1000u64 {
            let mut rng = root.derive2(i as u64, attempt);
            let th = [
                1.0 + 0.15 * rng.normal(),
                0.15 * rng.normal(),
                0.4 * rng.normal(),
                0.15 * rng.normal(),
                1.0 + 0.15 * rng.normal(),
                0.4 * rng.normal(),
            ];
            for r in 0..h {
                let gy = r as f64 / sy - 1.0;
                for c in 0..w {
                    let gx = c as f64 / sx - 1.0;
                    let ix = (th[0] * gx + th[1] * gy + th[2] + 1.0) * sx;
                    let iy = (th[3] * gx + th[4] * gy + th[5] + 1.0) * sy;
                    for coord in [ix, iy] {
                        let frac = coord - coord.floor();
                        if frac < margin || frac > 1.0 - margin {
                            continue 'attempt;
                        }
                    }
                }
            }
            out.extend_from_slice(&th);
            break;
        }
        assert_eq!(out.len(), 6 * (i + 1), "no boundary-safe block found");
    }
    out
}

/// Maximum relative error between an analytic gradient and central finite
/// differences of `f`. Above 10k parameters a seeded random subsample of
/// coordinates is checked. The denominator is max(|analytic|, |fd|, 1e-8).
pub fn fd_check(
    f: &mut dyn FnMut(&[f64]) -> f64,
    p: &[f64],
    analytic: &[f64],
    eps: f64,
) -> f64 {
    assert!(eps > 0.0);
    assert_eq!(p.len(), analytic.len());
    let coords: Vec<usize> = if p.len() > 10_000 {
        let mut rng = Stream::new(0xfdc);
        (0..2_000)
            .map(|_| rng.below(p.len() as u64) as usize)
            .collect()
    } else {
        (0..p.len()).collect()
    };
    let mut x = p.to_vec();
    let mut worst = 0.0f64;
    for k in coords {
        let orig = x[k];
        x[k] = orig + eps;
        let fp = f(&x);
        x[k] = orig - eps;
        let fm = f(&x);
        x[k] = orig;
        let fd = (fp - fm) / (2.0 * eps);
        let denom = analytic[k].abs().max(fd.abs()).max(1e-8);
        worst = worst.max(((analytic[k] - fd) / denom).abs());
    }
    worst
}
