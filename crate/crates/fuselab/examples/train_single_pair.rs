//! Supervised fusion training on a single camera pair: dense weights versus
//! the factorized base-plus-affine model, with loss/JDR trajectories and a
//! comparison of the learned weights against the epipolar oracle.
//!
//!     cargo run --release --example train_single_pair [seed] [grid] [n_train] [epochs] [lr]

use fuselab::eval::{epipolar_mass_score, evaluate_samples, pair_fundamental, uniform_band_score};
use fuselab::fusion::{DenseFusionParams, FactorizedFusionParams, FuseConfig, FusionParams};
use fuselab::grad::{loss_only, LossConfig};
use fuselab::heatmap::GridShape;
use fuselab::synthworld::{keys, make_dome_rig, pair_samples, WorldConfig};
use fuselab::train::{train_supervised, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map_or(1, |s| s.parse().unwrap());
    let grid: usize = args.get(2).map_or(24, |s| s.parse().unwrap());
    let n_train: usize = args.get(3).map_or(300, |s| s.parse().unwrap());
    let epochs: usize = args.get(4).map_or(40, |s| s.parse().unwrap());
    let lr: f64 = args.get(5).map_or(0.01, |s| s.parse().unwrap());
    let wd: f64 = args.get(6).map_or(0.0, |s| s.parse().unwrap());
    let mix: f64 = args.get(7).map_or(0.0, |s| s.parse().unwrap());
    let extent: f64 = args.get(8).map_or(0.25, |s| s.parse().unwrap());

    let world = WorldConfig {
        n_cams: 4,
        radius: 4.0,
        grid: GridShape::new(grid, grid),
        n_joints: args.get(9).map_or(2, |s| s.parse().unwrap()),
        occl_rate: 0.4,
        noise: Default::default(),
        seed,
        sigma: 1.5,
        volume_extent: Some(extent * 4.0),
    };
    let rig = fuselab::synthworld::rig_for(&world).unwrap();
    let pair = (0usize, 1usize);
    let train = pair_samples(&rig, pair, n_train, &world, keys::for_pair(keys::TASK, pair)).unwrap();
    let test = pair_samples(&rig, pair, 60, &world, keys::for_pair(keys::EVAL, pair)).unwrap();
    let lcfg = LossConfig { loss_on_softmax: true, ..Default::default() };
    let fuse_cfg = FuseConfig { loss_on_softmax: true, ..Default::default() };

    let nf = evaluate_samples(&rig, &test, None, &fuse_cfg, 2.0).unwrap();
    println!("no-fusion: loss {:.6} jdr_occ {:.1} jdr_all {:.1} mpjpe {:.3}",
        nf.test_loss, nf.jdr_occluded, nf.jdr_all, nf.mpjpe);

    for (name, mut params) in [
        ("dense", FusionParams::Dense(DenseFusionParams::zeros(world.grid, &[pair, (pair.1, pair.0)]))),
        ("factorized", {
            let mut f = FactorizedFusionParams::random_init(world.grid, seed);
            f.instantiate_pair(pair.0, pair.1);
            FusionParams::Factorized(f)
        }),
        ("factorized-ridge", {
            let mut f = FactorizedFusionParams::random_init(world.grid, seed);
            // Canonical horizontal ridge through the grid center.
            for r in 0..world.grid.h {
                for c in 0..world.grid.w {
                    let dy = r as f64 + 0.5 - world.grid.h as f64 / 2.0;
                    f.base[r * world.grid.w + c] = 0.25 * (-dy * dy / (2.0 * 1.5 * 1.5)).exp();
                }
            }
            f.instantiate_pair(pair.0, pair.1);
            FusionParams::Factorized(f)
        }),
    ] {
        println!("== {name} ==");
        for round in 0..4 {
            let cfg = TrainConfig {
                outer_lr: lr,
                epochs: epochs / 4,
                batch_size: 16,
                seed: seed + round as u64,
                loss_on_softmax: true,
                pre_softmax_mix: mix,
                weight_decay: wd,
                ..Default::default()
            };
            params = train_supervised(&params, &train, &cfg).unwrap();
            let tr = loss_only(&params, &train[..60.min(n_train)], &lcfg).unwrap();
            let r = evaluate_samples(&rig, &test, Some(&params), &fuse_cfg, 2.0).unwrap();
            println!("  after {:3} epochs: train {:.6} test {:.6} jdr_occ {:.1} jdr_all {:.1} mpjpe {:.3}",
                (round + 1) * (epochs / 4), tr, r.test_loss, r.jdr_occluded, r.jdr_all, r.mpjpe);
        }
        if let FusionParams::Factorized(f) = &params {
            let fm = pair_fundamental(&rig, pair).unwrap();
            let learned = epipolar_mass_score(f, pair, &fm, 3.0, 7);
            let uniform = uniform_band_score(&fm, world.grid, 3.0, 7);
            println!("  band-mass learned {:.3} uniform {:.3} (scored {} lowmass {} degen {})",
                learned.mean_fraction, uniform.mean_fraction,
                learned.scored_cells, learned.skipped_low_mass, learned.skipped_degenerate);
            // Dump a few weight rows beside their oracle lines.
            let dump = std::path::Path::new("/tmp/fuselab-dumps");
            std::fs::create_dir_all(dump).unwrap();
            let n = world.grid.cells();
            fuselab::io::write_pgm(&fuselab::heatmap::HeatmapGrid::from_vec(world.grid, f.base.clone()),
                &dump.join(format!("{name}-base.pgm"))).unwrap();
            let theta = f.theta_for(pair);
            for i in [n / 2 + 5, n / 3, 2 * n / 3 + 7] {
                let mut w = vec![0.0; n];
                fuselab::fusion::warp_into(&f.base, world.grid, &theta[6 * i..6 * i + 6], &mut w);
                let pos: f64 = w.iter().filter(|v| **v > 0.0).sum();
                let neg: f64 = -w.iter().filter(|v| **v < 0.0).sum::<f64>();
                println!("    row {i}: pos mass {:.3} neg mass {:.3}", pos, neg);
                fuselab::io::write_pgm(&fuselab::heatmap::HeatmapGrid::from_vec(world.grid, w.iter().map(|v| v.abs()).collect()),
                    &dump.join(format!("{name}-w{i}.pgm"))).unwrap();
                if let Ok(o) = fuselab::geometry::ideal_fusion_weight(&fm, (i / world.grid.w, i % world.grid.w), world.grid, 1.5) {
                    fuselab::io::write_pgm(&o, &dump.join(format!("{name}-oracle{i}.pgm"))).unwrap();
                }
            }
        }
    }
}
