//! End-to-end artifact pipeline: gen-world -> meta-train -> finetune -> eval
//! at a tiny scale, exercising resumability, hash chaining and report
//! determinism through the on-disk formats.

use std::fs;
use std::path::{Path, PathBuf};

use fuselab::cli::{
    cmd_eval, cmd_finetune, cmd_gen_world, cmd_inspect_weights, cmd_meta_train, ExperimentConfig,
    PathsConfig,
};
use fuselab::eval::EvalConfig;
use fuselab::heatmap::GridShape;
use fuselab::synthworld::{NoiseSpec, WorldConfig};
use fuselab::train::TrainConfig;

fn tmp(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("fuselab-pipe-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn config(root: &Path) -> ExperimentConfig {
    ExperimentConfig {
        world: WorldConfig {
            n_cams: 5,
            radius: 4.0,
            grid: GridShape::new(10, 10),
            n_joints: 2,
            occl_rate: 0.3,
            noise: NoiseSpec::default(),
            seed: 33,
            sigma: 1.2,
            volume_extent: None,
        },
        train: TrainConfig {
            epochs: 2,
            meta_iterations: 8,
            k: 2,
            inner_lr: 10.0,
            outer_lr: 0.01,
            loss_on_softmax: true,
            seed: 33,
            ..Default::default()
        },
        eval: EvalConfig {
            k_list: vec![3],
            jdr_threshold: 2.0,
            band: 3.0,
            eval_samples: 4,
            full_train_samples: 6,
            holdout_cams: 2,
            holdout_pairs: 2,
            adapt_epochs: 2,
        },
        paths: PathsConfig {
            world_dir: root.join("world"),
            checkpoint_dir: root.join("ckpt"),
            report_dir: root.join("report"),
        },
    }
}

#[test]
fn interrupted_meta_training_resumes_bitwise() {
    let root_a = tmp("straight");
    let root_b = tmp("resumed");
    let cfg_a = config(&root_a);
    let mut cfg_b = config(&root_b);

    // Uninterrupted run to 8 iterations.
    cmd_gen_world(&cfg_a).unwrap();
    let rows = cmd_meta_train(&cfg_a).unwrap();
    assert_eq!(rows.len(), 8);

    // Interrupted at 5, then resumed to 8 from the sidecar.
    cfg_b.train.meta_iterations = 5;
    cmd_gen_world(&cfg_b).unwrap();
    cmd_meta_train(&cfg_b).unwrap();
    cfg_b.train.meta_iterations = 8;
    let more = cmd_meta_train(&cfg_b).unwrap();
    assert_eq!(more.len(), 3);

    let blob_a = fs::read(cfg_a.paths.checkpoint_dir.join("meta.blob")).unwrap();
    let blob_b = fs::read(cfg_b.paths.checkpoint_dir.join("meta.blob")).unwrap();
    assert_eq!(blob_a, blob_b, "resumed checkpoint must match bitwise");

    // Logs cover every iteration exactly once.
    let log = fs::read_to_string(cfg_b.paths.checkpoint_dir.join("meta-log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 8);
}

#[test]
fn full_chain_with_hash_guard_and_deterministic_reports() {
    let root = tmp("chain");
    let cfg = config(&root);
    cmd_gen_world(&cfg).unwrap();
    cmd_meta_train(&cfg).unwrap();
    let ck = cfg.paths.checkpoint_dir.join("meta");

    // Finetune one held-out pair; adapted checkpoint keeps the base bytes.
    let manifest: fuselab::cli::WorldManifest =
        fuselab::io::read_json(&cfg.paths.world_dir.join("manifest.json")).unwrap();
    let pair = manifest.holdout_pairs[0];
    let (learnable, _before, _after) = cmd_finetune(&cfg, &ck, pair, 3, false).unwrap();
    assert_eq!(learnable, 6 * cfg.world.grid.cells());

    // Reports are byte-identical across reruns.
    let r1 = cmd_eval(&cfg, &ck, None).unwrap();
    let csv1 = fs::read(cfg.paths.report_dir.join("report.csv")).unwrap();
    let json1 = fs::read(cfg.paths.report_dir.join("report.json")).unwrap();
    let _r2 = cmd_eval(&cfg, &ck, None).unwrap();
    let csv2 = fs::read(cfg.paths.report_dir.join("report.csv")).unwrap();
    let json2 = fs::read(cfg.paths.report_dir.join("report.json")).unwrap();
    assert_eq!(csv1, csv2);
    assert_eq!(json1, json2);
    assert!(!r1.rows.is_empty());

    // A checkpoint from one world cannot be evaluated against another.
    let root2 = tmp("chain-other");
    let mut cfg2 = config(&root2);
    cfg2.world.seed = 34;
    cfg2.train.seed = 34;
    cmd_gen_world(&cfg2).unwrap();
    let err = cmd_eval(&cfg2, &ck, None).unwrap_err();
    assert_eq!(err.exit_code(), 2, "stale checkpoint must be rejected: {err}");

    // Weight inspection dumps PGM pairs.
    let dumps = root.join("dumps");
    cmd_inspect_weights(&cfg, &ck, pair, 17, &dumps).unwrap();
    let names: Vec<String> = fs::read_dir(&dumps)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().any(|n| n == "base.pgm"));
    assert!(names.iter().any(|n| n.starts_with("w-")));
    assert!(names.iter().any(|n| n.starts_with("oracle-")));
}
