//! Generate a synthetic multi-camera world and dump detector heatmaps next
//! to their ground-truth targets as PGM images.
//!
//!     cargo run --release --example render_world [seed] [out_dir]

use std::path::PathBuf;

use fuselab::heatmap::argmax_subpixel;
use fuselab::io::{write_pgm, write_stack};
use fuselab::rng::Stream;
use fuselab::synthworld::{make_dome_rig, render_detections, sample_scene, WorldConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map_or(3, |s| s.parse().unwrap());
    let out: PathBuf = args
        .get(2)
        .map_or_else(|| std::env::temp_dir().join("fuselab-world"), PathBuf::from);
    std::fs::create_dir_all(&out).unwrap();

    let cfg = WorldConfig {
        n_cams: 4,
        occl_rate: 0.4,
        seed,
        ..WorldConfig::small(seed)
    };
    let rig = make_dome_rig(cfg.n_cams, cfg.radius, cfg.grid, cfg.seed).unwrap();
    let mut rng = Stream::new(seed).derive(1);
    let scene = sample_scene(&rig, &cfg, &mut rng).unwrap();
    let sample = render_detections(&scene, &rig, &cfg, &rng.derive(2));

    println!("scene with {} joints over {} views:", cfg.n_joints, rig.n_cams());
    for v in 0..sample.n_views() {
        for j in 0..sample.n_joints() {
            let decoded = argmax_subpixel(&sample.views[v][j]);
            let truth = sample.gt_pixels[v][j];
            let err = (decoded - truth).norm();
            let status = if sample.visibility[v][j] { "visible " } else { "occluded" };
            println!(
                "  view {v} joint {j} [{status}]: decoded ({:5.2}, {:5.2}) truth ({:5.2}, {:5.2}) err {:.2}",
                decoded.x, decoded.y, truth.x, truth.y, err
            );
            write_pgm(&sample.views[v][j], &out.join(format!("det-v{v}-j{j}.pgm"))).unwrap();
            write_pgm(&sample.gt_heatmaps[v][j], &out.join(format!("gt-v{v}-j{j}.pgm"))).unwrap();
        }
    }
    write_stack(&out.join("detections"), &sample.views).unwrap();
    println!("PGMs and a raw f32 stack written to {}", out.display());
}
