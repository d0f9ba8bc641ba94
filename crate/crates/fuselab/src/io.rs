//! On-disk formats: model checkpoints (JSON manifest + raw little-endian f32
//! tensor blob), heatmap stacks (JSON header + raw f32), datasets, optimizer
//! sidecars for resumable training, PGM dumps for visual inspection, and the
//! content hashes that chain world -> checkpoint -> report artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{
    DenseFusionParams, FactorizedFusionParams, FusionParams, WeightMatrix,
};
use crate::geometry::{Pixel, Point3};
use crate::heatmap::{render_gaussian, GridShape, HeatmapGrid, MultiViewSample};
use crate::train::{MetaTrainState, OptimState, TensorKey};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io failure on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("json failure on {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> IoError + '_ {
    move |source| IoError::Json {
        path: path.to_path_buf(),
        source,
    }
}

/// FNV-1a 64-bit content hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn hash_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, IoError> {
    Ok(hash_hex(&fs::read(path).map_err(io_err(path))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let s = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    fs::write(path, s).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let s = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&s).map_err(json_err(path))
}

fn write_f32_blob(path: &Path, values: &[f64]) -> Result<(), IoError> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(io_err(path))
}

fn read_f32_blob(path: &Path) -> Result<Vec<f64>, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() % 4 != 0 {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            reason: format!("blob length {} not a multiple of 4", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn write_f64_blob(path: &Path, values: &[f64]) -> Result<(), IoError> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(io_err(path))
}

fn read_f64_blob(path: &Path) -> Result<Vec<f64>, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// 8-bit max-normalized binary PGM.
pub fn write_pgm(grid: &HeatmapGrid, path: &Path) -> Result<(), IoError> {
    let (h, w) = (grid.shape.h, grid.shape.w);
    let max = grid.max().max(1e-12);
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    write!(f, "P5\n{w} {h}\n255\n").map_err(io_err(path))?;
    let bytes: Vec<u8> = grid
        .data
        .iter()
        .map(|v| ((v / max).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    f.write_all(&bytes).map_err(io_err(path))
}

/// JSON header of a heatmap stack file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackHeader {
    pub v: usize,
    pub j: usize,
    pub h: usize,
    pub w: usize,
}

/// One multi-view heatmap stack as `<base>.json` + `<base>.f32`.
pub fn write_stack(base: &Path, views: &[Vec<HeatmapGrid>]) -> Result<(), IoError> {
    let v = views.len();
    let j = views.first().map_or(0, |r| r.len());
    let shape = views[0][0].shape;
    let header = StackHeader {
        v,
        j,
        h: shape.h,
        w: shape.w,
    };
    write_json(&base.with_extension("json"), &header)?;
    let mut flat = Vec::with_capacity(v * j * shape.cells());
    for row in views {
        for g in row {
            flat.extend_from_slice(&g.data);
        }
    }
    write_f32_blob(&base.with_extension("f32"), &flat)
}

pub fn read_stack(base: &Path) -> Result<Vec<Vec<HeatmapGrid>>, IoError> {
    let header: StackHeader = read_json(&base.with_extension("json"))?;
    let flat = read_f32_blob(&base.with_extension("f32"))?;
    let shape = GridShape::new(header.h, header.w);
    let n = shape.cells();
    if flat.len() != header.v * header.j * n {
        return Err(IoError::Format {
            path: base.to_path_buf(),
            reason: "stack blob size does not match header".into(),
        });
    }
    let mut out = Vec::with_capacity(header.v);
    let mut it = flat.chunks_exact(n);
    for _ in 0..header.v {
        let mut row = Vec::with_capacity(header.j);
        for _ in 0..header.j {
            row.push(HeatmapGrid::from_vec(shape, it.next().unwrap().to_vec()));
        }
        out.push(row);
    }
    Ok(out)
}

/// Dataset sidecar: everything but the detection heatmaps, which live in the
/// f32 blob. Ground-truth heatmaps are re-rendered from the exact pixels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub n: usize,
    pub v: usize,
    pub j: usize,
    pub h: usize,
    pub w: usize,
    pub sigma: f64,
    pub cams: Vec<usize>,
    /// [n][v][j][2]
    pub gt_pixels: Vec<Vec<Vec<[f64; 2]>>>,
    /// [n][v][j]
    pub visibility: Vec<Vec<Vec<bool>>>,
    /// [n][j][3]
    pub joints_world: Vec<Vec<[f64; 3]>>,
}

pub fn write_dataset(base: &Path, samples: &[MultiViewSample], sigma: f64) -> Result<(), IoError> {
    assert!(!samples.is_empty());
    let s0 = &samples[0];
    let header = DatasetHeader {
        n: samples.len(),
        v: s0.n_views(),
        j: s0.n_joints(),
        h: s0.shape.h,
        w: s0.shape.w,
        sigma,
        cams: s0.cams.clone(),
        gt_pixels: samples
            .iter()
            .map(|s| {
                s.gt_pixels
                    .iter()
                    .map(|row| row.iter().map(|p| [p.x, p.y]).collect())
                    .collect()
            })
            .collect(),
        visibility: samples.iter().map(|s| s.visibility.clone()).collect(),
        joints_world: samples
            .iter()
            .map(|s| s.joints_world.iter().map(|p| [p.x, p.y, p.z]).collect())
            .collect(),
    };
    write_json(&base.with_extension("json"), &header)?;
    let mut flat = Vec::new();
    for s in samples {
        for row in &s.views {
            for g in row {
                flat.extend_from_slice(&g.data);
            }
        }
    }
    write_f32_blob(&base.with_extension("f32"), &flat)
}

pub fn read_dataset(base: &Path) -> Result<Vec<MultiViewSample>, IoError> {
    let header: DatasetHeader = read_json(&base.with_extension("json"))?;
    let flat = read_f32_blob(&base.with_extension("f32"))?;
    let shape = GridShape::new(header.h, header.w);
    let n = shape.cells();
    if flat.len() != header.n * header.v * header.j * n {
        return Err(IoError::Format {
            path: base.to_path_buf(),
            reason: "dataset blob size does not match header".into(),
        });
    }
    let mut out = Vec::with_capacity(header.n);
    let mut chunks = flat.chunks_exact(n);
    for i in 0..header.n {
        let mut views = Vec::with_capacity(header.v);
        for _ in 0..header.v {
            let mut row = Vec::with_capacity(header.j);
            for _ in 0..header.j {
                row.push(HeatmapGrid::from_vec(shape, chunks.next().unwrap().to_vec()));
            }
            views.push(row);
        }
        let gt_pixels: Vec<Vec<Pixel>> = header.gt_pixels[i]
            .iter()
            .map(|row| row.iter().map(|p| Pixel::new(p[0], p[1])).collect())
            .collect();
        let gt_heatmaps = gt_pixels
            .iter()
            .map(|row| {
                row.iter()
                    .map(|p| render_gaussian(*p, shape, header.sigma))
                    .collect()
            })
            .collect();
        out.push(MultiViewSample {
            shape,
            cams: header.cams.clone(),
            views,
            gt_pixels,
            gt_heatmaps,
            visibility: header.visibility[i].clone(),
            joints_world: header.joints_world[i]
                .iter()
                .map(|p| Point3::new(p[0], p[1], p[2]))
                .collect(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    offset: usize,
    len: usize,
}

/// Model checkpoint manifest: `<base>.json` beside a raw little-endian f32
/// `<base>.blob`, tensors referenced by name and element offset. Dense
/// matrices are stored source-major (one scalar per (source j, target i)).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub kind: String,
    pub grid: GridShape,
    pub pairs: Vec<(usize, usize)>,
    pub t: f64,
    pub frozen: bool,
    /// Hash of the world the model was trained on, for stale-artifact checks.
    pub world_hash: Option<String>,
    tensors: Vec<TensorEntry>,
}

pub struct Checkpoint {
    pub params: FusionParams,
    pub manifest: ModelManifest,
}

/// Write a checkpoint as `<base>.json` + `<base>.blob`.
pub fn save_model(
    base: &Path,
    params: &FusionParams,
    softmax_t: f64,
    world_hash: Option<String>,
) -> Result<(), IoError> {
    let mut tensors = Vec::new();
    let mut blob: Vec<f64> = Vec::new();
    let push = |name: String, data: Vec<f64>, tensors: &mut Vec<TensorEntry>, blob: &mut Vec<f64>| {
        tensors.push(TensorEntry {
            name,
            offset: blob.len(),
            len: data.len(),
        });
        blob.extend(data);
    };
    let (kind, grid, pairs, frozen) = match params {
        FusionParams::Dense(d) => {
            let n = d.grid.cells();
            for (pair, w) in &d.pairs {
                // Transpose to the source-major wire layout.
                let mut wire = vec![0.0; n * n];
                for i in 0..n {
                    for jj in 0..n {
                        wire[jj * n + i] = w.data[i * n + jj];
                    }
                }
                push(format!("w:{}-{}", pair.0, pair.1), wire, &mut tensors, &mut blob);
            }
            ("dense", d.grid, d.pairs.keys().copied().collect(), false)
        }
        FusionParams::Factorized(f) => {
            push("base".into(), f.base.clone(), &mut tensors, &mut blob);
            push(
                "theta_init".into(),
                f.theta_init.clone(),
                &mut tensors,
                &mut blob,
            );
            for (pair, th) in &f.pair_thetas {
                push(
                    format!("theta:{}-{}", pair.0, pair.1),
                    th.clone(),
                    &mut tensors,
                    &mut blob,
                );
            }
            (
                "factorized",
                f.grid,
                f.pair_thetas.keys().copied().collect(),
                f.base_frozen,
            )
        }
    };
    let manifest = ModelManifest {
        kind: kind.into(),
        grid,
        pairs,
        t: softmax_t,
        frozen,
        world_hash,
        tensors,
    };
    write_json(&base.with_extension("json"), &manifest)?;
    write_f32_blob(&base.with_extension("blob"), &blob)
}

pub fn load_model(base: &Path) -> Result<Checkpoint, IoError> {
    let json_path = base.with_extension("json");
    let manifest: ModelManifest = read_json(&json_path)?;
    let blob = read_f32_blob(&base.with_extension("blob"))?;
    let tensor = |name: &str| -> Result<Vec<f64>, IoError> {
        let e = manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| IoError::Format {
                path: json_path.clone(),
                reason: format!("missing tensor {name}"),
            })?;
        Ok(blob[e.offset..e.offset + e.len].to_vec())
    };
    let n = manifest.grid.cells();
    let params = match manifest.kind.as_str() {
        "dense" => {
            let mut pairs = BTreeMap::new();
            for pair in &manifest.pairs {
                let wire = tensor(&format!("w:{}-{}", pair.0, pair.1))?;
                let mut w = WeightMatrix::zeros(n, n);
                for jj in 0..n {
                    for i in 0..n {
                        w.data[i * n + jj] = wire[jj * n + i];
                    }
                }
                pairs.insert(*pair, w);
            }
            FusionParams::Dense(DenseFusionParams {
                grid: manifest.grid,
                pairs,
            })
        }
        "factorized" => {
            let mut pair_thetas = BTreeMap::new();
            for pair in &manifest.pairs {
                pair_thetas.insert(*pair, tensor(&format!("theta:{}-{}", pair.0, pair.1))?);
            }
            FusionParams::Factorized(FactorizedFusionParams {
                grid: manifest.grid,
                base: tensor("base")?,
                theta_init: tensor("theta_init")?,
                pair_thetas,
                base_frozen: manifest.frozen,
            })
        }
        other => {
            return Err(IoError::Format {
                path: json_path,
                reason: format!("unknown model kind {other}"),
            })
        }
    };
    Ok(Checkpoint { params, manifest })
}

/// Optimizer sidecar for resumable meta-training: f64 master copies of the
/// trained tensors plus Adam moments and the iteration cursor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SidecarManifest {
    pub next_iteration: usize,
    pub step: u64,
    pub lr: f64,
    tensors: Vec<TensorEntry>,
}

pub fn save_meta_sidecar(
    base: &Path,
    params: &FactorizedFusionParams,
    state: &MetaTrainState,
) -> Result<(), IoError> {
    let mut tensors = Vec::new();
    let mut blob: Vec<f64> = Vec::new();
    let push = |name: &str, data: &[f64], tensors: &mut Vec<TensorEntry>, blob: &mut Vec<f64>| {
        tensors.push(TensorEntry {
            name: name.into(),
            offset: blob.len(),
            len: data.len(),
        });
        blob.extend_from_slice(data);
    };
    push("base", &params.base, &mut tensors, &mut blob);
    push("theta_init", &params.theta_init, &mut tensors, &mut blob);
    let zero = (Vec::new(), Vec::new());
    for (name, key) in [
        ("base", TensorKey::Base),
        ("theta_init", TensorKey::ThetaInit),
    ] {
        let (m, v) = state.optim.moments.get(&key).unwrap_or(&zero);
        push(&format!("m:{name}"), m, &mut tensors, &mut blob);
        push(&format!("v:{name}"), v, &mut tensors, &mut blob);
    }
    let manifest = SidecarManifest {
        next_iteration: state.next_iteration,
        step: state.optim.step,
        lr: state.optim.lr,
        tensors,
    };
    write_json(&base.with_extension("json"), &manifest)?;
    write_f64_blob(&base.with_extension("f64"), &blob)
}

pub fn load_meta_sidecar(
    base: &Path,
    grid: GridShape,
) -> Result<(FactorizedFusionParams, MetaTrainState), IoError> {
    let json_path = base.with_extension("json");
    let manifest: SidecarManifest = read_json(&json_path)?;
    let blob = read_f64_blob(&base.with_extension("f64"))?;
    let tensor = |name: &str| -> Result<Vec<f64>, IoError> {
        let e = manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| IoError::Format {
                path: json_path.clone(),
                reason: format!("missing tensor {name}"),
            })?;
        Ok(blob[e.offset..e.offset + e.len].to_vec())
    };
    let params = FactorizedFusionParams {
        grid,
        base: tensor("base")?,
        theta_init: tensor("theta_init")?,
        pair_thetas: BTreeMap::new(),
        base_frozen: false,
    };
    let mut optim = OptimState::adam(manifest.lr);
    optim.step = manifest.step;
    for (name, key) in [
        ("base", TensorKey::Base),
        ("theta_init", TensorKey::ThetaInit),
    ] {
        let m = tensor(&format!("m:{name}"))?;
        let v = tensor(&format!("v:{name}"))?;
        if !m.is_empty() {
            optim.moments.insert(key, (m, v));
        }
    }
    Ok((
        params,
        MetaTrainState {
            optim,
            next_iteration: manifest.next_iteration,
        },
    ))
}

/// CSV view of an evaluation report, one row per (baseline, K) aggregate.
pub fn report_csv(report: &crate::eval::EvalReport) -> String {
    let mut out =
        String::from("baseline,k,pairs,jdr_all,jdr_visible,jdr_occluded,mpjpe,test_loss\n");
    for row in &report.rows {
        let k = row.k.map_or(String::from("-"), |k| k.to_string());
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.9},{:.9}\n",
            row.baseline,
            k,
            row.pairs.len(),
            row.jdr_all,
            row.jdr_visible,
            row.jdr_occluded,
            row.mpjpe,
            row.test_loss
        ));
    }
    out
}

/// CSV view of a meta-training log.
pub fn meta_log_csv(rows: &[crate::train::MetaLogRow]) -> String {
    let mut out = String::from("iteration,task_id,train_loss,test_loss\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.9},{:.9}\n",
            r.iteration, r.task_index, r.train_loss, r.test_loss
        ));
    }
    out
}
