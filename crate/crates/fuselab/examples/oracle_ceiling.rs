//! Upper bound for linear fusion on the synthetic world: fuse with the
//! analytic epipolar oracle weights at a range of amplitudes and report the
//! loss and decode quality each amplitude achieves.
//!
//!     cargo run --release --example oracle_ceiling [seed] [grid] [occl_rate]

use fuselab::eval::{evaluate_samples, pair_fundamental};
use fuselab::grad::{loss_only, LossConfig};
use fuselab::fusion::{DenseFusionParams, FuseConfig, FusionParams, WeightMatrix};
use fuselab::geometry::ideal_fusion_weight;
use fuselab::heatmap::GridShape;
use fuselab::synthworld::{keys, make_dome_rig, pair_samples, WorldConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map_or(1, |s| s.parse().unwrap());
    let grid: usize = args.get(2).map_or(24, |s| s.parse().unwrap());
    let occl: f64 = args.get(3).map_or(0.4, |s| s.parse().unwrap());

    let world = WorldConfig {
        n_cams: 4,
        radius: 4.0,
        grid: GridShape::new(grid, grid),
        n_joints: 3,
        occl_rate: occl,
        noise: Default::default(),
        seed,
        sigma: 1.5,
        volume_extent: Some(args.get(4).map_or(0.25, |s| s.parse().unwrap()) * 4.0),
    };
    let rig = fuselab::synthworld::rig_for(&world).unwrap();
    let pair = (0usize, 1usize);
    let test = pair_samples(&rig, pair, 60, &world, keys::for_pair(keys::EVAL, pair)).unwrap();
    let fuse_cfg = FuseConfig::default();

    let nf = evaluate_samples(&rig, &test, None, &fuse_cfg, 2.0).unwrap();
    let zero = FusionParams::Dense(DenseFusionParams::zeros(world.grid, &[pair, (pair.1, pair.0)]));
    let nf_sm = loss_only(&zero, &test, &LossConfig { loss_on_softmax: true, ..Default::default() }).unwrap();
    println!("no-fusion: loss {:.6} smloss {:.6} jdr_occ {:.1} jdr_all {:.1} mpjpe {:.3}",
        nf.test_loss, nf_sm, nf.jdr_occluded, nf.jdr_all, nf.mpjpe);

    // Materialize ideal weights once per direction.
    let n = world.grid.cells();
    let mut mats = Vec::new();
    for dir in [pair, (pair.1, pair.0)] {
        let fm = pair_fundamental(&rig, dir).unwrap();
        let mut w = WeightMatrix::zeros(n, n);
        for i in 0..n {
            let ideal = ideal_fusion_weight(&fm, (i / world.grid.w, i % world.grid.w), world.grid, world.sigma).unwrap();
            w.row_mut(i).copy_dir_from(&ideal.data);
        }
        mats.push((dir, w));
    }

    for lambda in [0.1, 0.2, 0.4, 0.7, 1.0, 1.5, 2.5, 4.0] {
        let mut dense = DenseFusionParams::zeros(world.grid, &[pair, (pair.1, pair.0)]);
        for (dir, w) in &mats {
            let scaled: Vec<f64> = w.data.iter().map(|v| v * lambda).collect();
            dense.pairs.get_mut(dir).unwrap().data = scaled;
        }
        let params = FusionParams::Dense(dense);
        let r = evaluate_samples(&rig, &test, Some(&params), &fuse_cfg, 2.0).unwrap();
        let sm_loss = loss_only(&params, &test, &LossConfig { loss_on_softmax: true, ..Default::default() }).unwrap();
        println!("oracle x{lambda:<4}: loss {:.6} smloss {:.6} jdr_occ {:.1} jdr_all {:.1} mpjpe {:.3}",
            r.test_loss, sm_loss, r.jdr_occluded, r.jdr_all, r.mpjpe);
    }
}

trait CopyDir { fn copy_dir_from(&mut self, src: &[f64]); }
impl CopyDir for [f64] {
    fn copy_dir_from(&mut self, src: &[f64]) { self.copy_from_slice(src); }
}
