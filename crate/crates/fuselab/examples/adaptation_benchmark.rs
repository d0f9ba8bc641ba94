//! Few-shot adaptation benchmark on a synthetic dome: meta-train the
//! factorized fusion model on the non-held-out camera pairs, pre-train the
//! plain (non-meta) variant on the same data, then compare all baselines on
//! held-out pairs at several finetuning budgets.
//!
//!     cargo run --release --example adaptation_benchmark [seed] [grid] [iters] [alpha]

use std::time::Instant;

use fuselab::eval::{
    epipolar_mass_score, holdout_split, pair_fundamental, run_baselines, uniform_band_score,
    BaselineModels, EvalConfig,
};
use fuselab::fusion::{FactorizedFusionParams, FusionParams};
use fuselab::heatmap::GridShape;
use fuselab::synthworld::{sample_tasks, PairSelection, WorldConfig};
use fuselab::train::{finetune, meta_train, train_supervised, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map_or(1, |s| s.parse().unwrap());
    let grid: usize = args.get(2).map_or(24, |s| s.parse().unwrap());
    let iters: usize = args.get(3).map_or(800, |s| s.parse().unwrap());
    let alpha: f64 = args.get(4).map_or(20.0, |s| s.parse().unwrap());

    let world = WorldConfig {
        n_cams: 20,
        radius: 4.0,
        grid: GridShape::new(grid, grid),
        n_joints: 2,
        occl_rate: 0.4,
        noise: Default::default(),
        seed,
        sigma: 1.5,
        volume_extent: Some(4.0 * 0.45),
    };
    let train_cfg = TrainConfig {
        inner_lr: alpha,
        outer_lr: 3e-3,
        finetune_lr: 1e-2,
        epochs: 12,
        meta_iterations: iters,
        k: 8,
        batch_size: 16,
        weight_decay: 0.0,
        pre_softmax_mix: args.get(6).map_or(0.005, |s| s.parse().unwrap()),
        outer_lr_decay: 0.4,
        first_order: false,
        loss_on_softmax: true,
        seed,
    };
    let k_list: Vec<usize> = args
        .get(5)
        .map_or(vec![50, 100, 200], |s| {
            s.split(',').map(|x| x.parse().unwrap()).collect()
        });
    let eval_cfg = EvalConfig {
        k_list,
        jdr_threshold: 2.0,
        band: 3.0,
        eval_samples: 60,
        full_train_samples: 300,
        holdout_cams: 4,
        holdout_pairs: 5,
        adapt_epochs: 6,
    };

    let rig = fuselab::synthworld::rig_for(&world).unwrap();
    let (train_pairs, held) = holdout_split(&rig, eval_cfg.holdout_cams, eval_cfg.holdout_pairs, world.seed);
    println!("rig: {} cams, {} train pairs, held-out {:?}", rig.n_cams(), train_pairs.len(), held);

    let t0 = Instant::now();
    let tasks = sample_tasks(&rig, train_pairs.len(), train_cfg.k, &world,
        &PairSelection::ExhaustiveFrom(train_pairs.clone())).unwrap();
    println!("task generation: {:.1?} for {} tasks", t0.elapsed(), tasks.len());

    let init = FactorizedFusionParams::ridge_init(world.grid, seed);
    let t1 = Instant::now();
    let (meta, log) = meta_train(&init, &tasks, &train_cfg).unwrap();
    println!("meta-train {} iters: {:.1?} ({:.0} ms/iter)", iters, t1.elapsed(),
        t1.elapsed().as_millis() as f64 / iters.max(1) as f64);
    for w in log.chunks(iters.max(1) / 10.max(1)) {
        let avg_tr: f64 = w.iter().map(|r| r.train_loss).sum::<f64>() / w.len() as f64;
        let avg_te: f64 = w.iter().map(|r| r.test_loss).sum::<f64>() / w.len() as f64;
        println!("  it {:5}  train {:.6}  post-step test {:.6}", w[0].iteration, avg_tr, avg_te);
    }

    // Plain pre-training on pooled task data (same budget).
    let t2 = Instant::now();
    let pool: Vec<_> = tasks.iter().flat_map(|t| t.train.iter().cloned().chain(t.test.iter().cloned())).collect();
    let affine_cfg = TrainConfig { epochs: 4, outer_lr: 3e-3, ..train_cfg.clone() };
    let affine = match train_supervised(&FusionParams::Factorized(init.clone()), &pool, &affine_cfg) {
        Ok(FusionParams::Factorized(f)) => f,
        _ => panic!(),
    };
    println!("affine pre-train on {} samples: {:.1?}", pool.len(), t2.elapsed());

    let t2b = Instant::now();
    let dense_source = fuselab::eval::pretrain_dense_source(&rig, train_pairs[0], eval_cfg.full_train_samples, &world, &train_cfg).unwrap();
    println!("dense source pre-train: {:.1?}", t2b.elapsed());
    let models = BaselineModels { meta: &meta, affine: Some(&affine), dense_source: Some(&dense_source) };
    let t3 = Instant::now();
    let adapt_train_cfg = TrainConfig { pre_softmax_mix: 0.003, ..train_cfg.clone() };
    let report = run_baselines(&rig, &world, &adapt_train_cfg, &eval_cfg, &models).unwrap();
    println!("baselines: {:.1?}", t3.elapsed());
    print!("{}", fuselab::io::report_csv(&report));

    // Epipolar concentration after K=100 finetune on the first held-out pair.
    let pair = held[0];
    let pool100 = fuselab::synthworld::pair_samples(&rig, pair, 100, &world,
        fuselab::synthworld::keys::for_pair(fuselab::synthworld::keys::FINETUNE, pair)).unwrap();
    let ft_cfg = TrainConfig { epochs: 6, pre_softmax_mix: 0.003, ..train_cfg.clone() };
    let adapted = finetune(&FusionParams::Factorized(meta.clone()), pair, &pool100, &ft_cfg).unwrap();
    let FusionParams::Factorized(adapted) = adapted else { panic!() };
    let fm = pair_fundamental(&rig, pair).unwrap();
    let learned = epipolar_mass_score(&adapted, pair, &fm, eval_cfg.band, 7);
    let uniform = uniform_band_score(&fm, world.grid, eval_cfg.band, 7);
    println!("band-mass: learned {:.3} vs uniform {:.3} (need >= +0.25)", learned.mean_fraction, uniform.mean_fraction);
    let dump = std::path::Path::new("/tmp/fuselab-dumps");
    std::fs::create_dir_all(dump).unwrap();
    fuselab::io::write_pgm(&fuselab::heatmap::HeatmapGrid::from_vec(world.grid, meta.base.clone()),
        &dump.join("meta-base.pgm")).unwrap();
    let n = world.grid.cells();
    let theta = adapted.theta_for(pair);
    for i in [n / 2 + 5, n / 3] {
        let mut w = vec![0.0; n];
        fuselab::fusion::warp_into(&adapted.base, world.grid, &theta[6 * i..6 * i + 6], &mut w);
        fuselab::io::write_pgm(&fuselab::heatmap::HeatmapGrid::from_vec(world.grid, w.iter().map(|v| v.abs()).collect()),
            &dump.join(format!("meta-w{i}.pgm"))).unwrap();
    }
    println!("total: {:.1?}", t0.elapsed());
}
