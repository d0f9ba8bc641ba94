//! Optimizers and the three training procedures: supervised training of
//! dense/factorized weights, episodic meta-training of the factorized model,
//! and theta-only finetuning for a new camera pair.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{FactorizedFusionParams, FusionParams, PairKey};
use crate::grad::{
    self, loss_and_grad, GradError, GradientBundle, LossConfig, ThetaBinding,
};
use crate::heatmap::MultiViewSample;
use crate::rng::Stream;
use crate::synthworld::Task;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("meta-training needs at least one task")]
    NoTasks,
    #[error("this procedure requires factorized fusion parameters")]
    WrongModelKind,
    #[error("numerical overflow at step {step}; last good parameters preserved")]
    Overflow {
        step: usize,
        checkpoint: Box<FusionParams>,
    },
    #[error(transparent)]
    Grad(#[from] GradError),
}

/// Names of the learnable tensors across both parameterizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TensorKey {
    Base,
    ThetaInit,
    Theta(PairKey),
    Dense(PairKey),
}

impl GradientBundle {
    /// Tensor-keyed view over the present gradients, in a fixed order.
    pub fn entries(&self) -> Vec<(TensorKey, &Vec<f64>)> {
        let mut out = Vec::new();
        if !self.d_base.is_empty() {
            out.push((TensorKey::Base, &self.d_base));
        }
        if !self.d_theta_init.is_empty() {
            out.push((TensorKey::ThetaInit, &self.d_theta_init));
        }
        for (k, g) in &self.d_pair_thetas {
            out.push((TensorKey::Theta(*k), g));
        }
        for (k, g) in &self.d_dense {
            out.push((TensorKey::Dense(*k), g));
        }
        out
    }
}

fn tensor_mut<'p>(params: &'p mut FusionParams, key: &TensorKey) -> Option<&'p mut Vec<f64>> {
    match (params, key) {
        (FusionParams::Factorized(f), TensorKey::Base) => Some(&mut f.base),
        (FusionParams::Factorized(f), TensorKey::ThetaInit) => Some(&mut f.theta_init),
        (FusionParams::Factorized(f), TensorKey::Theta(k)) => f.pair_thetas.get_mut(k),
        (FusionParams::Dense(d), TensorKey::Dense(k)) => d.pairs.get_mut(k).map(|w| &mut w.data),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimKind {
    Sgd,
    Adam,
}

/// Optimizer state: learning rate plus per-tensor Adam moment buffers.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub kind: OptimKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub moments: BTreeMap<TensorKey, (Vec<f64>, Vec<f64>)>,
}

impl OptimState {
    pub fn adam(lr: f64) -> Self {
        OptimState {
            kind: OptimKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        OptimState {
            kind: OptimKind::Sgd,
            lr,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
            step: 0,
            moments: BTreeMap::new(),
        }
    }
}

/// One optimizer step over every gradient tensor accepted by `learnable`.
/// `weight_decay` applies decoupled L2 shrinkage to the spatial weight
/// tensors (base and dense matrices) only; affine blocks are anchored to the
/// identity and never decayed.
pub fn adam_step(
    state: &mut OptimState,
    params: &mut FusionParams,
    grads: &GradientBundle,
    learnable: &dyn Fn(&TensorKey) -> bool,
    weight_decay: f64,
) {
    state.step += 1;
    let t = state.step;
    for (key, g) in grads.entries() {
        if !learnable(&key) {
            continue;
        }
        let Some(p) = tensor_mut(params, &key) else {
            continue;
        };
        let decay = match key {
            TensorKey::Base | TensorKey::Dense(_) => weight_decay,
            _ => 0.0,
        };
        if decay > 0.0 {
            let shrink = 1.0 - state.lr * decay;
            for pk in p.iter_mut() {
                *pk *= shrink;
            }
        }
        match state.kind {
            OptimKind::Sgd => {
                for (pk, gk) in p.iter_mut().zip(g) {
                    *pk -= state.lr * gk;
                }
            }
            OptimKind::Adam => {
                let (m, v) = state
                    .moments
                    .entry(key)
                    .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
                let bc1 = 1.0 - state.beta1.powi(t as i32);
                let bc2 = 1.0 - state.beta2.powi(t as i32);
                for k in 0..g.len() {
                    m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
                    v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
                    let mhat = m[k] / bc1;
                    let vhat = v[k] / bc2;
                    p[k] -= state.lr * mhat / (vhat.sqrt() + state.eps);
                }
            }
        }
    }
}

/// Training hyper-parameters. `inner_lr` is the plain-gradient step inside
/// the meta objective; `outer_lr` drives the meta update; `finetune_lr`
/// drives per-pair adaptation. Adam is used for every outer/supervised/
/// finetune phase, the inner step is plain gradient descent by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub finetune_lr: f64,
    pub epochs: usize,
    pub meta_iterations: usize,
    pub k: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Decoupled L2 shrinkage on spatial weight tensors during supervised
    /// and outer meta updates.
    #[serde(default)]
    pub weight_decay: f64,
    /// Raw-MSE admixture for the softmaxed training objective.
    #[serde(default)]
    pub pre_softmax_mix: f64,
    /// Outer learning-rate decay over meta-training: the rate is multiplied
    /// by this factor at 1/3 and 2/3 of the iteration budget.
    #[serde(default = "default_outer_lr_decay")]
    pub outer_lr_decay: f64,
    pub first_order: bool,
    pub loss_on_softmax: bool,
    pub seed: u64,
}

fn default_batch_size() -> usize {
    16
}

fn default_outer_lr_decay() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            inner_lr: 1e-3,
            outer_lr: 1e-3,
            finetune_lr: 5e-3,
            epochs: 60,
            meta_iterations: 1000,
            k: 8,
            batch_size: default_batch_size(),
            weight_decay: 0.0,
            pre_softmax_mix: 0.0,
            outer_lr_decay: default_outer_lr_decay(),
            first_order: false,
            loss_on_softmax: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.inner_lr <= 0.0 || self.outer_lr <= 0.0 || self.finetune_lr <= 0.0 {
            return Err("learning rates must be positive".into());
        }
        if self.k < 1 {
            return Err("k must be at least 1".into());
        }
        if self.batch_size < 1 {
            return Err("batch_size must be at least 1".into());
        }
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            loss_on_softmax: self.loss_on_softmax,
            softmax_t: 0.2,
            pre_softmax_mix: self.pre_softmax_mix,
            theta_binding: ThetaBinding::SharedInit,
        }
    }
}

fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Stream::new(seed).derive2(0x0e90c4, epoch as u64);
    rng.shuffle(&mut order);
    order
        .chunks(batch_size.max(1))
        .map(|c| c.to_vec())
        .collect()
}

/// Mini-batch Adam on the fused-map MSE. Trains every tensor present in the
/// parameters (the base is skipped when frozen). On numerical overflow the
/// parameters from before the failing step ride along in the error.
pub fn train_supervised(
    params: &FusionParams,
    data: &[MultiViewSample],
    cfg: &TrainConfig,
) -> Result<FusionParams, TrainError> {
    assert!(!data.is_empty(), "non-empty training data required");
    let mut current = params.clone();
    let frozen = matches!(&current, FusionParams::Factorized(f) if f.base_frozen);
    let learnable = move |key: &TensorKey| !(frozen && *key == TensorKey::Base);
    let mut optim = OptimState::adam(cfg.outer_lr);
    let lcfg = cfg.loss_config();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        for batch_idx in epoch_batches(data.len(), cfg.batch_size, cfg.seed, epoch) {
            let batch: Vec<MultiViewSample> =
                batch_idx.iter().map(|i| data[*i].clone()).collect();
            step += 1;
            match loss_and_grad(&current, &batch, &lcfg) {
                Ok((_loss, grads)) => {
                    adam_step(&mut optim, &mut current, &grads, &learnable, cfg.weight_decay);
                }
                Err(GradError::NumericalOverflow { .. }) => {
                    return Err(TrainError::Overflow {
                        step,
                        checkpoint: Box::new(current),
                    });
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(current)
}

/// One row of the meta-training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaLogRow {
    pub iteration: usize,
    pub task_index: usize,
    pub train_loss: f64,
    pub test_loss: f64,
}

/// Optimizer state plus progress cursor; serializing this alongside the
/// parameters makes meta-training resumable bit-for-bit.
#[derive(Debug, Clone)]
pub struct MetaTrainState {
    pub optim: OptimState,
    pub next_iteration: usize,
}

impl MetaTrainState {
    pub fn fresh(cfg: &TrainConfig) -> Self {
        MetaTrainState {
            optim: OptimState::adam(cfg.outer_lr),
            next_iteration: 0,
        }
    }
}

fn task_order(n_tasks: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_tasks).collect();
    let mut rng = Stream::new(seed).derive2(0x0d_e7, epoch as u64);
    rng.shuffle(&mut order);
    order
}

/// Run meta-training iterations `state.next_iteration .. until`, mutating
/// `params` and `state` in place and reporting one log row per iteration.
/// Iteration order is a pure function of (seed, iteration), so an
/// interrupted run resumed from saved state reproduces an uninterrupted one.
pub fn meta_train_resumable(
    params: &mut FactorizedFusionParams,
    tasks: &[Task],
    cfg: &TrainConfig,
    state: &mut MetaTrainState,
    until: usize,
    on_row: &mut dyn FnMut(MetaLogRow),
) -> Result<(), TrainError> {
    if tasks.is_empty() {
        return Err(TrainError::NoTasks);
    }
    let lcfg = cfg.loss_config();
    while state.next_iteration < until {
        let it = state.next_iteration;
        let epoch = it / tasks.len();
        let pos = it % tasks.len();
        let task_index = task_order(tasks.len(), cfg.seed, epoch)[pos];
        let task = &tasks[task_index];
        let wrapped = FusionParams::Factorized(params.clone());
        let eval = grad::meta_grad_detailed(&wrapped, task, cfg.inner_lr, cfg.first_order, &lcfg)?;
        let mut working = wrapped;
        // Stepped learning-rate schedule, a pure function of the iteration.
        let phase = (3 * it / cfg.meta_iterations.max(1)).min(2) as i32;
        state.optim.lr = cfg.outer_lr * cfg.outer_lr_decay.powi(phase);
        adam_step(
            &mut state.optim,
            &mut working,
            &eval.fold_to_init(),
            &|_| true,
            cfg.weight_decay,
        );
        let FusionParams::Factorized(updated) = working else {
            unreachable!()
        };
        *params = updated;
        on_row(MetaLogRow {
            iteration: it,
            task_index,
            train_loss: eval.train_loss,
            test_loss: eval.test_loss,
        });
        state.next_iteration += 1;
    }
    Ok(())
}

/// Episodic meta-training over the task list (Adam outer updates with
/// `outer_lr`, one plain inner gradient step with `inner_lr` inside the
/// objective). Returns the meta-initialization with the base marked frozen.
pub fn meta_train(
    params: &FactorizedFusionParams,
    tasks: &[Task],
    cfg: &TrainConfig,
) -> Result<(FactorizedFusionParams, Vec<MetaLogRow>), TrainError> {
    let mut out = params.clone();
    let mut state = MetaTrainState::fresh(cfg);
    let mut log = Vec::with_capacity(cfg.meta_iterations);
    meta_train_resumable(
        &mut out,
        tasks,
        cfg,
        &mut state,
        cfg.meta_iterations,
        &mut |row| log.push(row),
    )?;
    out.base_frozen = true;
    Ok((out, log))
}

/// Adapt a factorized model to one new ordered pair: instantiate both
/// direction blocks from the generic init and run Adam on them alone. The
/// base never changes. Empty data returns the input unchanged.
pub fn finetune(
    params: &FusionParams,
    pair: PairKey,
    data: &[MultiViewSample],
    cfg: &TrainConfig,
) -> Result<FusionParams, TrainError> {
    let FusionParams::Factorized(f) = params else {
        return Err(TrainError::WrongModelKind);
    };
    if data.is_empty() {
        return Ok(FusionParams::Factorized(f.clone()));
    }
    let mut fac = f.clone();
    fac.instantiate_pair(pair.0, pair.1);
    let mut current = FusionParams::Factorized(fac);
    let keys = [
        TensorKey::Theta((pair.0, pair.1)),
        TensorKey::Theta((pair.1, pair.0)),
    ];
    let learnable = move |key: &TensorKey| keys.contains(key);
    let mut optim = OptimState::adam(cfg.finetune_lr);
    let lcfg = cfg.loss_config();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        for batch_idx in epoch_batches(data.len(), cfg.batch_size, cfg.seed, epoch) {
            let batch: Vec<MultiViewSample> =
                batch_idx.iter().map(|i| data[*i].clone()).collect();
            step += 1;
            match loss_and_grad(&current, &batch, &lcfg) {
                Ok((_loss, grads)) => {
                    adam_step(&mut optim, &mut current, &grads, &learnable, 0.0);
                }
                Err(GradError::NumericalOverflow { .. }) => {
                    return Err(TrainError::Overflow {
                        step,
                        checkpoint: Box::new(current),
                    });
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(current)
}
