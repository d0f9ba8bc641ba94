//! Finite-difference verification of the fusion-loss gradient and of the
//! meta-gradient through the inner adaptation step, on an 8x8 grid.
//!
//!     cargo run --release --example gradient_check

use std::time::Instant;

use fuselab::fusion::{DenseFusionParams, FactorizedFusionParams, FusionParams};
use fuselab::grad::{
    boundary_safe_thetas, fd_check, loss_and_grad, loss_only, maml_meta_grad, LossConfig,
    MetaObjective, PairObjective,
};
use fuselab::heatmap::GridShape;
use fuselab::rng::Stream;
use fuselab::synthworld::{make_dome_rig, pair_samples, sample_tasks, PairSelection, WorldConfig};

fn main() {
    let t0 = Instant::now();
    let cfg = WorldConfig {
        n_cams: 3,
        n_joints: 2,
        grid: GridShape::new(8, 8),
        ..WorldConfig::small(5)
    };
    let rig = make_dome_rig(cfg.n_cams, cfg.radius, cfg.grid, cfg.seed).unwrap();
    let batch = pair_samples(&rig, (0, 1), 2, &cfg, 0x11).unwrap();
    let lcfg = LossConfig::default();

    // Dense path.
    let mut dense = DenseFusionParams::zeros(cfg.grid, &[(0, 1), (1, 0)]);
    let mut rng = Stream::new(9);
    for w in dense.pairs.values_mut() {
        for v in &mut w.data {
            *v = 0.05 * rng.normal();
        }
    }
    let params = FusionParams::Dense(dense.clone());
    let (_l, g) = loss_and_grad(&params, &batch, &lcfg).unwrap();
    let p0 = dense.pairs[&(0, 1)].data.clone();
    let mut probe = |p: &[f64]| -> f64 {
        let mut d = dense.clone();
        d.pairs.get_mut(&(0, 1)).unwrap().data = p.to_vec();
        loss_only(&FusionParams::Dense(d), &batch, &lcfg).unwrap()
    };
    let err = fd_check(&mut probe, &p0, &g.d_dense[&(0, 1)], 1e-4);
    println!("dense loss gradient:      max relative error {err:.3e}");

    // Factorized path (base + shared theta), sampling points kept away from
    // bilinear cell boundaries.
    let mut fac = FactorizedFusionParams::random_init(cfg.grid, 5);
    fac.theta_init = boundary_safe_thetas(cfg.grid, 5, 5e-3);
    let params = FusionParams::Factorized(fac.clone());
    let (_l, g) = loss_and_grad(&params, &batch, &lcfg).unwrap();
    let n = cfg.grid.cells();
    let mut flat = fac.base.clone();
    flat.extend_from_slice(&fac.theta_init);
    let mut analytic = g.d_base.clone();
    analytic.extend_from_slice(&g.d_theta_init);
    let mut probe = |p: &[f64]| -> f64 {
        let mut f = fac.clone();
        f.base = p[..n].to_vec();
        f.theta_init = p[n..].to_vec();
        loss_only(&FusionParams::Factorized(f), &batch, &lcfg).unwrap()
    };
    let err = fd_check(&mut probe, &flat, &analytic, 1e-5);
    println!("factorized loss gradient: max relative error {err:.3e}");

    // Meta-objective: gradient through one plain inner step, second-order
    // term included.
    let tasks = sample_tasks(&rig, 1, 2, &cfg, &PairSelection::Random).unwrap();
    let task = &tasks[0];
    let alpha = 0.1;
    let train_obj = PairObjective::new(cfg.grid, task.pair, &task.train, lcfg);
    let test_obj = PairObjective::new(cfg.grid, task.pair, &task.test, lcfg);
    let p = train_obj.flatten(&fac);
    let analytic = maml_meta_grad(&train_obj, &test_obj, &p, alpha, false)
        .unwrap()
        .grad;
    let mut probe = |pv: &[f64]| -> f64 {
        let (_lt, g) = train_obj.loss_and_grad(pv).unwrap();
        let adapted: Vec<f64> = pv.iter().zip(&g).map(|(x, gk)| x - alpha * gk).collect();
        test_obj.loss_and_grad(&adapted).unwrap().0
    };
    let err = fd_check(&mut probe, &p, &analytic, 1e-4);
    println!("meta-objective gradient:  max relative error {err:.3e}");
    println!("total {:.2?}", t0.elapsed());
}
