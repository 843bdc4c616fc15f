//! On-disk array interchange: for an array `NAME`, a JSON header `NAME.json`
//! and raw little-endian 32-bit floats in `NAME.bin` (interleaved real and
//! imaginary parts for complex data), row-major.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calib::{KernelGeometry, SliceGrappaKernels};
use crate::diffusion::{ConvDenoiser, DiffusionSchedule, LayerShape, ScheduleParams, TrainedScore};
use crate::error::Error;
use crate::tensor::{ComplexArray, RealArray, C64};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Complex64,
    Float32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayHeader {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub order: String,
    pub byte_order: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err<T>(path: &Path, msg: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        path: path.display().to_string(),
        msg: msg.into(),
    })
}

fn pair(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.json")), dir.join(format!("{name}.bin")))
}

/// Writes a JSON value with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).or_else(|e| format_err(path, e.to_string()))
}

fn write_raw(dir: &Path, name: &str, dtype: Dtype, shape: &[usize], values: impl Iterator<Item = f64>) -> Result<()> {
    let (hp, bp) = pair(dir, name);
    let header = ArrayHeader {
        dtype,
        shape: shape.to_vec(),
        order: "row-major".into(),
        byte_order: "little".into(),
    };
    write_json(&hp, &header)?;
    let bytes: Vec<u8> = values.flat_map(|v| (v as f32).to_le_bytes()).collect();
    fs::write(&bp, bytes).map_err(io_err(&bp))
}

pub fn write_complex(dir: &Path, name: &str, arr: &ComplexArray) -> Result<()> {
    write_raw(
        dir,
        name,
        Dtype::Complex64,
        arr.shape(),
        arr.data().iter().flat_map(|v| [v.re, v.im]),
    )
}

pub fn write_real(dir: &Path, name: &str, arr: &RealArray) -> Result<()> {
    write_raw(dir, name, Dtype::Float32, arr.shape(), arr.data().iter().copied())
}

fn read_raw(dir: &Path, name: &str, want: Dtype) -> Result<(Vec<usize>, Vec<f64>)> {
    let (hp, bp) = pair(dir, name);
    let header: ArrayHeader = read_json(&hp)?;
    if header.order != "row-major" || header.byte_order != "little" {
        return format_err(&hp, format!("unsupported layout {}/{}", header.order, header.byte_order));
    }
    if header.dtype != want {
        return format_err(&hp, format!("expected dtype {want:?}, found {:?}", header.dtype));
    }
    let count: usize = header.shape.iter().product::<usize>() * if want == Dtype::Complex64 { 2 } else { 1 };
    let bytes = fs::read(&bp).map_err(io_err(&bp))?;
    if bytes.len() != count * 4 {
        return format_err(
            &bp,
            format!("expected {} bytes for shape {:?}, found {}", count * 4, header.shape, bytes.len()),
        );
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((header.shape, values))
}

pub fn read_complex(dir: &Path, name: &str) -> Result<ComplexArray> {
    let (shape, v) = read_raw(dir, name, Dtype::Complex64)?;
    let data = v.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
    ComplexArray::new(shape, data)
}

pub fn read_real(dir: &Path, name: &str) -> Result<RealArray> {
    let (shape, v) = read_raw(dir, name, Dtype::Float32)?;
    RealArray::new(shape, v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelManifest {
    mb: usize,
    nc: usize,
    geometry: KernelGeometry,
    tikhonov: f64,
    fit_residual: Vec<f64>,
}

/// Writes `NAME.manifest.json` plus the weights array `NAME` of shape
/// `[mb * nc, nc, kh, kw]`.
pub fn write_kernels(dir: &Path, name: &str, k: &SliceGrappaKernels) -> Result<()> {
    let m = KernelManifest {
        mb: k.mb,
        nc: k.nc,
        geometry: k.geometry,
        tikhonov: k.tikhonov,
        fit_residual: k.fit_residual.clone(),
    };
    write_json(&dir.join(format!("{name}.manifest.json")), &m)?;
    write_complex(dir, name, &ComplexArray::stack(&k.weights)?)
}

pub fn read_kernels(dir: &Path, name: &str) -> Result<SliceGrappaKernels> {
    let mp = dir.join(format!("{name}.manifest.json"));
    let m: KernelManifest = read_json(&mp)?;
    let w = read_complex(dir, name)?;
    let g = m.geometry;
    if w.shape() != [m.mb * m.nc, m.nc, g.kh, g.kw] {
        return format_err(&mp, format!("weights shape {:?} does not match manifest", w.shape()));
    }
    Ok(SliceGrappaKernels {
        mb: m.mb,
        nc: m.nc,
        geometry: g,
        weights: w.unstack()?,
        tikhonov: m.tikhonov,
        fit_residual: m.fit_residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelManifest {
    kind: String,
    /// `[cin, cout, dilation]` per layer, 3x3 kernels.
    layers: Vec<[usize; 3]>,
    grid: [usize; 2],
    schedule: ScheduleParams,
    schedule_hash: String,
    params: String,
}

/// Writes `model.json` and the flat parameter vector `model_params`.
pub fn write_model(dir: &Path, model: &TrainedScore) -> Result<()> {
    let net = model.network();
    let sched = crate::diffusion::ScoreModel::schedule(model);
    let (ny, nx) = sched.dims();
    let m = ModelManifest {
        kind: "conv-residual-denoiser".into(),
        layers: net.layers().iter().map(|l| [l.cin, l.cout, l.dilation]).collect(),
        grid: [ny, nx],
        schedule: sched.params().clone(),
        schedule_hash: sched.hash(),
        params: "model_params".into(),
    };
    write_json(&dir.join("model.json"), &m)?;
    let p = RealArray::new(vec![net.n_params()], net.params().to_vec())?;
    write_real(dir, "model_params", &p)
}

pub fn read_model(dir: &Path) -> Result<TrainedScore> {
    let mp = dir.join("model.json");
    let m: ModelManifest = read_json(&mp)?;
    let sched = DiffusionSchedule::new(m.grid[0], m.grid[1], m.schedule)?;
    if sched.hash() != m.schedule_hash {
        return format_err(&mp, "schedule hash does not match the stored schedule");
    }
    let p = read_real(dir, &m.params)?;
    let layers = m.layers.iter().map(|&[cin, cout, dilation]| LayerShape { cin, cout, dilation }).collect();
    let net = ConvDenoiser::from_parts(layers, p.data().to_vec()).or_else(|e| format_err(&mp, e.to_string()))?;
    Ok(TrainedScore::new(net, sched))
}
