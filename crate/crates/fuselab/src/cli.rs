//! Experiment orchestration behind the `fuselab` binary: configuration,
//! artifact directories, and the gen-world / meta-train / finetune / eval /
//! inspect-weights commands.
//!
//! Artifacts chain by content hash: the world manifest hashes the config and
//! rig, checkpoints record the world hash they were trained against, and
//! eval refuses to mix artifacts from different worlds. Every pipeline stage
//! consumes procedurally regenerated f64 sample streams (pure functions of
//! the config and seed); the dataset blobs written by gen-world are the
//! exported, hash-pinned copies of those streams.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{
    epipolar_mass_score, holdout_split, pair_fundamental, run_baselines, uniform_band_score,
    BaselineModels, EvalConfig,
};
use crate::fusion::{FactorizedFusionParams, FusionParams, PairKey};
use crate::geometry::ideal_fusion_weight;
use crate::grad::loss_only;
use crate::heatmap::HeatmapGrid;
use crate::io::{
    self, hash_hex, load_meta_sidecar, load_model, read_json, save_meta_sidecar, save_model,
    write_dataset, write_json, write_pgm, IoError,
};
use crate::synthworld::{
    make_dome_rig, pair_samples, sample_tasks, PairSelection, Rig, WorldConfig,
};
use crate::train::{
    meta_train_resumable, MetaLogRow, MetaTrainState, TrainConfig, TrainError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// Process exit code: 0 success, 2 config, 3 missing artifact, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Overflow { step, .. } => {
                CliError::Numerical(format!("overflow at training step {step}"))
            }
            TrainError::Grad(crate::grad::GradError::NumericalOverflow { node }) => {
                CliError::Numerical(format!("overflow at tape node {node}"))
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<crate::eval::EvalError> for CliError {
    fn from(e: crate::eval::EvalError) -> Self {
        match e {
            crate::eval::EvalError::MissingCheckpoint => {
                CliError::MissingArtifact("meta checkpoint".into())
            }
            crate::eval::EvalError::Train(t) => t.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<crate::synthworld::WorldError> for CliError {
    fn from(e: crate::synthworld::WorldError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsConfig {
    pub world_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
}

/// Top-level experiment configuration, stored as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::MissingArtifact(format!("config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.train
            .validate()
            .map_err(CliError::Config)?;
        if cfg.world.n_cams < 2 {
            return Err(CliError::Config("world.n_cams: need at least 2".into()));
        }
        if !(0.0..1.0).contains(&cfg.world.occl_rate) {
            return Err(CliError::Config(
                "world.occl_rate: must be in [0, 1)".into(),
            ));
        }
        Ok(cfg)
    }

    /// Stable fingerprint of the configuration content.
    pub fn fingerprint(&self) -> String {
        hash_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Hash of the generated world: config plus rig content.
fn world_hash(cfg: &ExperimentConfig, rig: &Rig) -> String {
    let mut bytes = serde_json::to_string(&cfg.world).unwrap().into_bytes();
    bytes.extend(serde_json::to_string(rig).unwrap().into_bytes());
    hash_hex(&bytes)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldManifest {
    pub world_hash: String,
    pub config_fingerprint: String,
    pub n_cams: usize,
    pub n_ordered_pairs: usize,
    pub holdout_pairs: Vec<(usize, usize)>,
    /// Relative file path -> content hash.
    pub files: std::collections::BTreeMap<String, String>,
}

fn load_world(cfg: &ExperimentConfig) -> Result<(Rig, WorldManifest), CliError> {
    let dir = &cfg.paths.world_dir;
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(CliError::MissingArtifact(format!(
            "world manifest {} (run gen-world first)",
            manifest_path.display()
        )));
    }
    let manifest: WorldManifest = read_json(&manifest_path)?;
    let rig: Rig = read_json(&dir.join("rig.json"))?;
    let expect = world_hash(cfg, &rig);
    if manifest.world_hash != expect {
        return Err(CliError::Config(format!(
            "world at {} was generated from a different config (hash {} vs {})",
            dir.display(),
            manifest.world_hash,
            expect
        )));
    }
    Ok((rig, manifest))
}

/// Generate the rig and the exported per-pair datasets, with a hash manifest.
/// Idempotent for a fixed config and seed.
pub fn cmd_gen_world(cfg: &ExperimentConfig) -> Result<WorldManifest, CliError> {
    let dir = &cfg.paths.world_dir;
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Io(IoError::Io {
            path: dir.clone(),
            source: e,
        })
    })?;
    let rig = make_dome_rig(cfg.world.n_cams, cfg.world.radius, cfg.world.grid, cfg.world.seed)?;
    write_json(&dir.join("rig.json"), &rig)?;
    write_json(&dir.join("config.json"), &cfg.world)?;
    let (_, held) = holdout_split(
        &rig,
        cfg.eval.holdout_cams,
        cfg.eval.holdout_pairs,
        cfg.world.seed,
    );
    let pairs_dir = dir.join("pairs");
    fs::create_dir_all(&pairs_dir).map_err(|e| {
        CliError::Io(IoError::Io {
            path: pairs_dir.clone(),
            source: e,
        })
    })?;
    let max_k = cfg.eval.k_list.iter().copied().max().unwrap_or(0);
    let mut files = std::collections::BTreeMap::new();
    let mut add = |rel: String, path: &Path| -> Result<(), CliError> {
        files.insert(rel, io::hash_file(path)?);
        Ok(())
    };
    add("rig.json".into(), &dir.join("rig.json"))?;
    add("config.json".into(), &dir.join("config.json"))?;
    for pair in &held {
        let tag = format!("{}-{}", pair.0, pair.1);
        let pool = pair_samples(
            &rig,
            *pair,
            max_k,
            &cfg.world,
            crate::synthworld::keys::for_pair(crate::synthworld::keys::FINETUNE, *pair),
        )?;
        let eval_set = pair_samples(
            &rig,
            *pair,
            cfg.eval.eval_samples,
            &cfg.world,
            crate::synthworld::keys::for_pair(crate::synthworld::keys::EVAL, *pair),
        )?;
        let pool_base = pairs_dir.join(format!("{tag}-finetune"));
        let eval_base = pairs_dir.join(format!("{tag}-eval"));
        write_dataset(&pool_base, &pool, cfg.world.sigma)?;
        write_dataset(&eval_base, &eval_set, cfg.world.sigma)?;
        for b in [&pool_base, &eval_base] {
            for ext in ["json", "f32"] {
                let p = b.with_extension(ext);
                let rel = format!(
                    "pairs/{}",
                    p.file_name().unwrap().to_string_lossy()
                );
                add(rel, &p)?;
            }
        }
    }
    let manifest = WorldManifest {
        world_hash: world_hash(cfg, &rig),
        config_fingerprint: cfg.fingerprint(),
        n_cams: rig.n_cams(),
        n_ordered_pairs: rig.ordered_pairs().len(),
        holdout_pairs: held,
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Meta-train the factorized model over tasks drawn from the non-held-out
/// pairs; resumable from the optimizer sidecar if one exists. Returns the
/// meta log rows executed in this invocation.
pub fn cmd_meta_train(cfg: &ExperimentConfig) -> Result<Vec<MetaLogRow>, CliError> {
    let (rig, manifest) = load_world(cfg)?;
    let dir = &cfg.paths.checkpoint_dir;
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Io(IoError::Io {
            path: dir.clone(),
            source: e,
        })
    })?;
    let (train_pairs, _) = holdout_split(
        &rig,
        cfg.eval.holdout_cams,
        cfg.eval.holdout_pairs,
        cfg.world.seed,
    );
    let tasks = sample_tasks(
        &rig,
        train_pairs.len(),
        cfg.train.k,
        &cfg.world,
        &PairSelection::ExhaustiveFrom(train_pairs),
    )?;
    let sidecar_base = dir.join("meta-sidecar");
    let (mut params, mut state) = if sidecar_base.with_extension("json").exists() {
        load_meta_sidecar(&sidecar_base, cfg.world.grid)?
    } else {
        (
            FactorizedFusionParams::random_init(cfg.world.grid, cfg.train.seed),
            MetaTrainState::fresh(&cfg.train),
        )
    };
    let mut rows = Vec::new();
    let result = meta_train_resumable(
        &mut params,
        &tasks,
        &cfg.train,
        &mut state,
        cfg.train.meta_iterations,
        &mut |row| rows.push(row),
    );
    match result {
        Ok(()) => {}
        Err(TrainError::Grad(crate::grad::GradError::NumericalOverflow { node })) => {
            return Err(CliError::Numerical(format!(
                "overflow at tape node {node}, iteration {}",
                state.next_iteration
            )));
        }
        Err(e) => return Err(e.into()),
    }
    save_meta_sidecar(&sidecar_base, &params, &state)?;
    let mut frozen = params.clone();
    frozen.base_frozen = true;
    save_model(
        &dir.join("meta"),
        &FusionParams::Factorized(frozen),
        0.2,
        Some(manifest.world_hash.clone()),
    )?;
    // Append this invocation's rows to the log.
    let log_path = dir.join("meta-log.csv");
    let mut csv = if log_path.exists() {
        fs::read_to_string(&log_path).map_err(|e| {
            CliError::Io(IoError::Io {
                path: log_path.clone(),
                source: e,
            })
        })?
    } else {
        String::from("iteration,task_id,train_loss,test_loss\n")
    };
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{:.9},{:.9}\n",
            r.iteration, r.task_index, r.train_loss, r.test_loss
        ));
    }
    fs::write(&log_path, csv).map_err(|e| {
        CliError::Io(IoError::Io {
            path: log_path.clone(),
            source: e,
        })
    })?;
    Ok(rows)
}

/// Adapt a checkpoint to one held-out pair on K samples. Prints the
/// learnable-parameter count and before/after test loss, writes the adapted
/// checkpoint, and returns (learnable, before, after).
pub fn cmd_finetune(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    pair: PairKey,
    k: usize,
    allow_raw: bool,
) -> Result<(usize, f64, f64), CliError> {
    let (rig, manifest) = load_world(cfg)?;
    if pair.0 >= rig.n_cams() || pair.1 >= rig.n_cams() || pair.0 == pair.1 {
        return Err(CliError::Config(format!(
            "unknown pair {}-{}",
            pair.0, pair.1
        )));
    }
    if !checkpoint.with_extension("json").exists() {
        return Err(CliError::MissingArtifact(format!(
            "checkpoint {}",
            checkpoint.display()
        )));
    }
    let ck = load_model(checkpoint)?;
    if let Some(h) = &ck.manifest.world_hash {
        if *h != manifest.world_hash {
            return Err(CliError::Config(
                "checkpoint was trained against a different world".into(),
            ));
        }
    }
    let FusionParams::Factorized(_) = &ck.params else {
        return Err(CliError::Config(
            "finetuning requires a factorized checkpoint".into(),
        ));
    };
    if !ck.manifest.frozen && !allow_raw {
        return Err(CliError::Config(
            "checkpoint is not meta-trained; pass --allow-raw to finetune anyway".into(),
        ));
    }
    let pool = pair_samples(
        &rig,
        pair,
        k,
        &cfg.world,
        crate::synthworld::keys::for_pair(crate::synthworld::keys::FINETUNE, pair),
    )?;
    let eval_set = pair_samples(
        &rig,
        pair,
        cfg.eval.eval_samples,
        &cfg.world,
        crate::synthworld::keys::for_pair(crate::synthworld::keys::EVAL, pair),
    )?;
    let lcfg = cfg.train.loss_config();
    let before = loss_only(&ck.params, &eval_set, &lcfg)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let adapted = crate::train::finetune(&ck.params, pair, &pool, &cfg.train)?;
    let after = loss_only(&adapted, &eval_set, &lcfg)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let learnable = crate::fusion::finetune_param_count(cfg.world.grid);
    fs::create_dir_all(&cfg.paths.checkpoint_dir).map_err(|e| {
        CliError::Io(IoError::Io {
            path: cfg.paths.checkpoint_dir.clone(),
            source: e,
        })
    })?;
    let out = cfg
        .paths
        .checkpoint_dir
        .join(format!("adapted-{}-{}-k{}", pair.0, pair.1, k));
    save_model(&out, &adapted, 0.2, Some(manifest.world_hash.clone()))?;
    Ok((learnable, before, after))
}

/// Run the baseline table and write CSV + JSON reports.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    meta_checkpoint: &Path,
    affine_checkpoint: Option<&Path>,
) -> Result<crate::eval::EvalReport, CliError> {
    let (rig, manifest) = load_world(cfg)?;
    if !meta_checkpoint.with_extension("json").exists() {
        return Err(CliError::MissingArtifact(format!(
            "checkpoint {}",
            meta_checkpoint.display()
        )));
    }
    let meta_ck = load_model(meta_checkpoint)?;
    if let Some(h) = &meta_ck.manifest.world_hash {
        if *h != manifest.world_hash {
            return Err(CliError::Config(
                "meta checkpoint was trained against a different world".into(),
            ));
        }
    }
    let FusionParams::Factorized(meta) = &meta_ck.params else {
        return Err(CliError::Config(
            "the meta checkpoint must be factorized".into(),
        ));
    };
    let affine_loaded = match affine_checkpoint {
        Some(p) => {
            if !p.with_extension("json").exists() {
                return Err(CliError::MissingArtifact(format!(
                    "checkpoint {}",
                    p.display()
                )));
            }
            let ck = load_model(p)?;
            match ck.params {
                FusionParams::Factorized(f) => Some(f),
                _ => {
                    return Err(CliError::Config(
                        "the affine checkpoint must be factorized".into(),
                    ))
                }
            }
        }
        None => None,
    };
    // The K-shot dense rows start from weights pre-trained on the first
    // meta-training pair, following the cross-camera transfer protocol.
    let (train_pairs, _) = holdout_split(
        &rig,
        cfg.eval.holdout_cams,
        cfg.eval.holdout_pairs,
        cfg.world.seed,
    );
    let dense_source = crate::eval::pretrain_dense_source(
        &rig,
        train_pairs[0],
        cfg.eval.full_train_samples,
        &cfg.world,
        &cfg.train,
    )?;
    let models = BaselineModels {
        meta,
        affine: affine_loaded.as_ref(),
        dense_source: Some(&dense_source),
    };
    let mut report = run_baselines(&rig, &cfg.world, &cfg.train, &cfg.eval, &models)?;
    report.config_fingerprint = format!("{}:{}", cfg.fingerprint(), manifest.world_hash);
    fs::create_dir_all(&cfg.paths.report_dir).map_err(|e| {
        CliError::Io(IoError::Io {
            path: cfg.paths.report_dir.clone(),
            source: e,
        })
    })?;
    write_json(&cfg.paths.report_dir.join("report.json"), &report)?;
    fs::write(
        cfg.paths.report_dir.join("report.csv"),
        io::report_csv(&report),
    )
    .map_err(|e| {
        CliError::Io(IoError::Io {
            path: cfg.paths.report_dir.join("report.csv"),
            source: e,
        })
    })?;
    Ok(report)
}

/// Dump warped weight maps beside their epipolar oracle maps as PGM pairs,
/// and report the band-mass score against the uniform reference.
pub fn cmd_inspect_weights(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    pair: PairKey,
    stride: usize,
    out_dir: &Path,
) -> Result<(f64, f64), CliError> {
    let (rig, _) = load_world(cfg)?;
    let ck = load_model(checkpoint)?;
    let FusionParams::Factorized(f) = &ck.params else {
        return Err(CliError::Config(
            "weight inspection requires a factorized checkpoint".into(),
        ));
    };
    fs::create_dir_all(out_dir).map_err(|e| {
        CliError::Io(IoError::Io {
            path: out_dir.to_path_buf(),
            source: e,
        })
    })?;
    let fm = pair_fundamental(&rig, pair).map_err(|e| CliError::Other(e.to_string()))?;
    let grid = f.grid;
    write_pgm(
        &HeatmapGrid::from_vec(grid, f.base.clone()),
        &out_dir.join("base.pgm"),
    )?;
    let theta = f.theta_for(pair);
    for i in (0..grid.cells()).step_by(stride.max(1)) {
        let (r, c) = (i / grid.w, i % grid.w);
        let mut w = vec![0.0; grid.cells()];
        crate::fusion::warp_into(&f.base, grid, &theta[6 * i..6 * i + 6], &mut w);
        write_pgm(
            &HeatmapGrid::from_vec(grid, w.iter().map(|v| v.abs()).collect()),
            &out_dir.join(format!("w-{r}-{c}.pgm")),
        )?;
        if let Ok(oracle) = ideal_fusion_weight(&fm, (r, c), grid, cfg.world.sigma) {
            write_pgm(&oracle, &out_dir.join(format!("oracle-{r}-{c}.pgm")))?;
        }
    }
    let learned = epipolar_mass_score(f, pair, &fm, cfg.eval.band, stride.max(1));
    let uniform = uniform_band_score(&fm, grid, cfg.eval.band, stride.max(1));
    Ok((learned.mean_fraction, uniform.mean_fraction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::GridShape;
    use crate::synthworld::NoiseSpec;

    fn test_config(root: &Path) -> ExperimentConfig {
        ExperimentConfig {
            world: WorldConfig {
                n_cams: 5,
                radius: 4.0,
                grid: GridShape::new(12, 12),
                n_joints: 2,
                occl_rate: 0.3,
                noise: NoiseSpec::default(),
                seed: 21,
                sigma: 1.2,
                volume_extent: None,
            },
            train: TrainConfig {
                epochs: 2,
                meta_iterations: 4,
                k: 2,
                inner_lr: 0.5,
                outer_lr: 0.01,
                ..Default::default()
            },
            eval: EvalConfig {
                k_list: vec![4],
                jdr_threshold: 2.0,
                band: 3.0,
                eval_samples: 6,
                full_train_samples: 8,
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

    fn tmp(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("fuselab-cli-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn config_round_trips_bitwise() {
        let root = tmp("cfg");
        let cfg = test_config(&root);
        let s1 = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&s1).unwrap();
        let s2 = serde_json::to_string_pretty(&back).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn config_error_names_missing_field() {
        let root = tmp("cfgmiss");
        let p = root.join("bad.json");
        fs::write(&p, r#"{"world": {"n_cams": 4}}"#).unwrap();
        let err = ExperimentConfig::load(&p).unwrap_err();
        let msg = err.to_string();
        assert_eq!(err.exit_code(), 2);
        assert!(msg.contains("radius"), "message should name the field: {msg}");
    }

    #[test]
    fn gen_world_is_idempotent_and_manifest_counts_pairs() {
        let root = tmp("genworld");
        let mut cfg = test_config(&root);
        cfg.world.n_cams = 20;
        cfg.world.n_joints = 1;
        cfg.world.grid = GridShape::new(8, 8);
        cfg.eval.k_list = vec![2];
        cfg.eval.eval_samples = 2;
        let m1 = cmd_gen_world(&cfg).unwrap();
        let m2 = cmd_gen_world(&cfg).unwrap();
        assert_eq!(m1.n_ordered_pairs, 380);
        assert_eq!(m1.world_hash, m2.world_hash);
        assert_eq!(m1.files, m2.files);
    }

    #[test]
    fn meta_train_writes_resumable_artifacts() {
        let root = tmp("meta");
        let cfg = test_config(&root);
        cmd_gen_world(&cfg).unwrap();
        let rows = cmd_meta_train(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        let log = fs::read_to_string(cfg.paths.checkpoint_dir.join("meta-log.csv")).unwrap();
        assert_eq!(log.lines().count(), 1 + 4);
        // Second invocation with the same iteration budget is a no-op.
        let rows2 = cmd_meta_train(&cfg).unwrap();
        assert!(rows2.is_empty());
        // Continuation reaches the new budget and appends.
        let mut cfg2 = cfg.clone();
        cfg2.train.meta_iterations = 6;
        let rows3 = cmd_meta_train(&cfg2).unwrap();
        assert_eq!(rows3.len(), 2);
        let log = fs::read_to_string(cfg.paths.checkpoint_dir.join("meta-log.csv")).unwrap();
        assert_eq!(log.lines().count(), 1 + 6);
    }

    #[test]
    fn finetune_requires_roles_and_freezes_base() {
        let root = tmp("ft");
        let cfg = test_config(&root);
        cmd_gen_world(&cfg).unwrap();
        cmd_meta_train(&cfg).unwrap();
        let ck = cfg.paths.checkpoint_dir.join("meta");
        let held = load_world(&cfg).unwrap().1.holdout_pairs;
        let pair = held[0];
        let before_blob = fs::read(ck.with_extension("blob")).unwrap();
        let (learnable, before, after) = cmd_finetune(&cfg, &ck, pair, 3, false).unwrap();
        assert_eq!(learnable, 6 * cfg.world.grid.cells());
        assert!(before.is_finite() && after.is_finite());
        // The meta checkpoint on disk is untouched; the adapted copy shares
        // its base tensor bytes.
        assert_eq!(fs::read(ck.with_extension("blob")).unwrap(), before_blob);
        let adapted = load_model(
            &cfg.paths
                .checkpoint_dir
                .join(format!("adapted-{}-{}-k3", pair.0, pair.1)),
        )
        .unwrap();
        let (FusionParams::Factorized(meta), FusionParams::Factorized(ad)) =
            (load_model(&ck).unwrap().params, adapted.params)
        else {
            panic!()
        };
        assert_eq!(meta.base, ad.base);
        // Unknown pair is a config error.
        assert_eq!(
            cmd_finetune(&cfg, &ck, (0, 0), 1, false)
                .unwrap_err()
                .exit_code(),
            2
        );
    }

    #[test]
    fn eval_reports_are_deterministic() {
        let root = tmp("eval");
        let cfg = test_config(&root);
        cmd_gen_world(&cfg).unwrap();
        cmd_meta_train(&cfg).unwrap();
        let ck = cfg.paths.checkpoint_dir.join("meta");
        let r1 = cmd_eval(&cfg, &ck, None).unwrap();
        let csv1 = fs::read(cfg.paths.report_dir.join("report.csv")).unwrap();
        let r2 = cmd_eval(&cfg, &ck, None).unwrap();
        let csv2 = fs::read(cfg.paths.report_dir.join("report.csv")).unwrap();
        assert_eq!(csv1, csv2);
        assert_eq!(r1.rows.len(), r2.rows.len());
        // One row per baseline/K combination: no-fusion, dense-full, and
        // per-K dense + meta (no affine checkpoint given).
        assert_eq!(r1.rows.len(), 2 + 2 * cfg.eval.k_list.len());
        // Missing checkpoint surfaces as exit code 3.
        assert_eq!(
            cmd_eval(&cfg, &root.join("nope"), None)
                .unwrap_err()
                .exit_code(),
            3
        );
    }

    #[test]
    fn inspect_writes_pgm_pairs() {
        let root = tmp("inspect");
        let cfg = test_config(&root);
        cmd_gen_world(&cfg).unwrap();
        cmd_meta_train(&cfg).unwrap();
        let ck = cfg.paths.checkpoint_dir.join("meta");
        let held = load_world(&cfg).unwrap().1.holdout_pairs;
        let out = root.join("dumps");
        let (learned, uniform) =
            cmd_inspect_weights(&cfg, &ck, held[0], 37, &out).unwrap();
        assert!(learned.is_finite() && uniform.is_finite());
        let n_dumps = fs::read_dir(&out).unwrap().count();
        // base.pgm plus ceil(144/37) weight/oracle pairs.
        assert!(n_dumps >= 1 + 2 * (cfg.world.grid.cells() / 37));
    }
}
