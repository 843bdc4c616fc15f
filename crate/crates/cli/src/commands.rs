//! The five pipeline verbs. Each writes its outputs plus the resolved config
//! and its hash into the output directory.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use log::info;
use serde::{Deserialize, Serialize};

use smsdiff::calib::{calibrate_slice_grappa, estimate_sensitivities};
use smsdiff::diffusion::{train_score, DiffusionSchedule, ScoreModel};
use smsdiff::io::{self, read_json, write_json};
use smsdiff::metrics::recon_report_with;
use smsdiff::recon::sg_sense_pipeline;
use smsdiff::sampler::{sms_reconstruct, RunLog, SmsProblem};
use smsdiff::scene::{build_scene, training_set};
use smsdiff::sim::{make_uniform_mask, SamplingMask};
use smsdiff::{CoilSensitivities, ComplexArray, Error, RealArray, Result};

use crate::config::{MapSource, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SgSense,
    Proposed,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::SgSense => "sg-sense",
            Method::Proposed => "proposed",
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

/// Writes `config.json` and `config.sha256`.
fn stamp(dir: &Path, cfg: &RunConfig) -> Result<String> {
    create_dir(dir)?;
    write_json(&dir.join("config.json"), cfg)?;
    let hash = cfg.hash();
    let path = dir.join("config.sha256");
    fs::write(&path, format!("{hash}\n")).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(hash)
}

fn stack_maps(maps: &[CoilSensitivities]) -> Result<ComplexArray> {
    let items: Vec<ComplexArray> = maps.iter().map(|m| m.maps().clone()).collect();
    ComplexArray::stack(&items)
}

fn unstack_maps(arr: &ComplexArray) -> Result<Vec<CoilSensitivities>> {
    if arr.ndim() != 4 {
        return Err(Error::Shape(format!("maps must be [mb, nc, ny, nx], got {:?}", arr.shape())));
    }
    arr.unstack()?.into_iter().map(CoilSensitivities::new).collect()
}

fn format_error(dir: &Path, name: &str, msg: String) -> Error {
    Error::Format {
        path: dir.join(name).display().to_string(),
        msg,
    }
}

fn read_mask(dir: &Path) -> Result<SamplingMask> {
    let mask: SamplingMask = read_json(&dir.join("mask.meta.json"))?;
    let pattern = io::read_real(dir, "mask")?;
    let rebuilt = make_uniform_mask(mask.ny, mask.accel, mask.acs_lines)?;
    let stored: Vec<bool> = pattern.data().iter().map(|&v| v != 0.0).collect();
    if stored != rebuilt.pattern || mask != rebuilt {
        return Err(format_error(dir, "mask.bin", "line pattern disagrees with mask.meta.json".into()));
    }
    Ok(rebuilt)
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    stamp(out, cfg)?;
    let scene = build_scene(&cfg.sim, cfg.seed)?;
    let acq = &scene.acquisition;
    io::write_complex(out, "truth", &scene.truth)?;
    io::write_complex(out, "maps", &stack_maps(&scene.maps)?)?;
    io::write_complex(out, "sms_ksp", &acq.sms_ksp)?;
    io::write_complex(out, "acs", &acq.acs)?;
    let pattern = acq.mask.pattern.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    io::write_real(out, "mask", &RealArray::new(vec![acq.mask.ny], pattern)?)?;
    write_json(&out.join("mask.meta.json"), &acq.mask)?;
    write_json(&out.join("acquisition.json"), &scene.spec)?;
    info!("simulated {}x{} MB-{} scene into {}", cfg.sim.ny, cfg.sim.nx, cfg.sim.mb, out.display());
    Ok(())
}

pub fn calibrate(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    stamp(out, cfg)?;
    let acs = io::read_complex(input, "acs")?;
    let mask = read_mask(input)?;
    let spec = read_json(&input.join("acquisition.json"))?;
    let kernels = calibrate_slice_grappa(&acs, &spec, mask.ny, cfg.sg_geometry(), cfg.calib.tikhonov)?;
    io::write_kernels(out, "sg_kernels", &kernels)?;
    let dense = calibrate_slice_grappa(&acs, &spec, mask.ny, cfg.calib.dc_kernel, cfg.calib.tikhonov)?;
    io::write_kernels(out, "dc_kernels", &dense)?;
    let maps = match cfg.calib.maps {
        MapSource::True => io::read_complex(input, "maps")?,
        MapSource::Estimated => {
            let nx = acs.shape()[3];
            let est: Vec<CoilSensitivities> = acs
                .unstack()?
                .iter()
                .map(|a| estimate_sensitivities(a, mask.ny, nx, cfg.calib.rss_threshold))
                .collect::<Result<_>>()?;
            stack_maps(&est)?
        }
    };
    io::write_complex(out, "maps", &maps)?;
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    n_items: usize,
    initial_holdout_loss: f64,
    final_holdout_loss: f64,
    loss_history: &'a [f64],
}

pub fn train(cfg: &RunConfig, out: &Path) -> Result<()> {
    stamp(out, cfg)?;
    let sched = DiffusionSchedule::new(cfg.sim.ny, cfg.sim.nx, cfg.diffusion.schedule.clone())?;
    let (data, maps) = training_set(&cfg.sim, cfg.diffusion.n_train, cfg.seed)?;
    let (model, report) = train_score(&data, &maps, &sched, &cfg.diffusion.train)?;
    io::write_model(out, &model)?;
    write_json(
        &out.join("train_report.json"),
        &TrainSummary {
            n_items: data.len(),
            initial_holdout_loss: report.initial_holdout_loss,
            final_holdout_loss: report.final_holdout_loss,
            loss_history: &report.loss_history,
        },
    )?;
    info!(
        "held-out loss {:.4e} -> {:.4e}",
        report.initial_holdout_loss, report.final_holdout_loss
    );
    Ok(())
}

/// Splits the sampler log into `run_log.json`, which reruns reproduce byte for
/// byte, and the wall-clock `timing.json`, which they do not.
fn write_run_log(out: &Path, log: &RunLog) -> Result<()> {
    let mut value = serde_json::to_value(log).map_err(|e| format_error(out, "run_log.json", e.to_string()))?;
    let mut timing = serde_json::Map::new();
    let top = value.as_object_mut().expect("run log is an object");
    for key in ["init_seconds", "total_seconds"] {
        if let Some(v) = top.remove(key) {
            timing.insert(key.into(), v);
        }
    }
    let steps: Vec<serde_json::Value> = top
        .get_mut("steps")
        .and_then(|s| s.as_array_mut())
        .map(|steps| steps.iter_mut().filter_map(|s| s.as_object_mut()?.remove("seconds")).collect())
        .unwrap_or_default();
    timing.insert("step_seconds".into(), steps.into());
    write_json(&out.join("run_log.json"), &value)?;
    write_json(&out.join("timing.json"), &timing)
}

pub fn recon(
    cfg: &RunConfig,
    method: Method,
    input: &Path,
    calib: &Path,
    model_dir: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let hash = stamp(out, cfg)?;
    let sms_ksp = io::read_complex(input, "sms_ksp")?;
    let mask = read_mask(input)?;
    let spec = read_json(&input.join("acquisition.json"))?;
    let kernels = io::read_kernels(calib, "sg_kernels")?;
    let maps = unstack_maps(&io::read_complex(calib, "maps")?)?;
    let images = match method {
        Method::SgSense => sg_sense_pipeline(&sms_ksp, &kernels, &maps, &mask, &spec)?,
        Method::Proposed => {
            let dir = model_dir.ok_or_else(|| Error::Argument("--model is required for the proposed method".into()))?;
            let model = io::read_model(dir)?;
            let schedule = model.schedule().clone();
            let problem = SmsProblem {
                sms_ksp,
                mask,
                kernels: io::read_kernels(calib, "dc_kernels")?,
                init_kernels: Some(kernels),
                acs: io::read_complex(input, "acs")?,
                maps_per_slice: maps,
                spec,
                schedule,
                score_model: Arc::new(model) as Arc<dyn ScoreModel>,
            };
            let mut result = sms_reconstruct(&problem, &cfg.sampler, cfg.seed)?;
            result.log.config_hash = Some(hash);
            write_run_log(out, &result.log)?;
            result.images
        }
    };
    io::write_complex(out, "recon", &images)?;
    io::write_real(out, "recon_magnitude", &images.abs())?;
    write_json(&out.join("method.json"), &method)?;
    Ok(())
}

/// C `%.6g` formatting.
pub fn sig6(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v.is_nan() {
        return "nan".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = format!("{v:.5e}");
    let (mantissa, e) = exp.split_once('e').expect("exponent form");
    let e: i32 = e.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-4..6).contains(&e) {
        trim(&format!("{:.*}", (5 - e).max(0) as usize, v))
    } else {
        format!("{}e{}{:02}", trim(mantissa), if e < 0 { '-' } else { '+' }, e.abs())
    }
}

pub fn eval(cfg: &RunConfig, truth_dir: &Path, recon_dir: &Path, out: &Path) -> Result<()> {
    stamp(out, cfg)?;
    let truth = io::read_complex(truth_dir, "truth")?;
    let recon = io::read_complex(recon_dir, "recon")?;
    let method = read_json::<Method>(&recon_dir.join("method.json"))
        .map(|m| m.name().to_string())
        .unwrap_or_else(|_| "recon".into());
    if truth.shape() != recon.shape() {
        return Err(format_error(
            recon_dir,
            "recon.json",
            format!("shape {:?} does not match truth {:?}", recon.shape(), truth.shape()),
        ));
    }
    let rows = recon_report_with(&truth, &recon, &method, &cfg.metrics.ssim)?;
    let (n, ny, nx) = truth.plane_dims()?;
    let (ta, ra) = (truth.abs(), recon.abs());
    let plane = ny * nx;
    let mut error_maps = Vec::with_capacity(n * plane);
    for s in 0..n {
        let t = &ta.data()[s * plane..(s + 1) * plane];
        let r = &ra.data()[s * plane..(s + 1) * plane];
        let peak = t.iter().fold(0.0f64, |m, v| m.max(*v));
        error_maps.extend(t.iter().zip(r).map(|(a, b)| (b - a).abs() / peak));
    }
    let mut csv = String::from("method,slice,nmse,psnr_db,ssim\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{},{}\n", r.method, r.slice, sig6(r.nmse), sig6(r.psnr_db), sig6(r.ssim)));
    }
    let path = out.join("metrics.csv");
    fs::write(&path, csv).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    // JSON numbers cannot hold infinity; PSNR of an exact match is written as the string "inf".
    let json_rows: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "method": r.method,
                "slice": r.slice,
                "nmse": r.nmse,
                "psnr_db": if r.psnr_db.is_finite() { serde_json::json!(r.psnr_db) } else { serde_json::json!(sig6(r.psnr_db)) },
                "ssim": r.ssim,
            })
        })
        .collect();
    write_json(&out.join("metrics.json"), &json_rows)?;
    io::write_real(out, "error_map", &RealArray::new(vec![n, ny, nx], error_maps)?)?;
    io::write_real(out, "truth_magnitude", &ta)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::sig6;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.2), "0.2");
        assert_eq!(sig6(38.080_123_4), "38.0801");
        assert_eq!(sig6(0.012_345_678), "0.0123457");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(1.234_567e-7), "1.23457e-07");
        assert_eq!(sig6(123_456_789.0), "1.23457e+08");
        assert_eq!(sig6(f64::INFINITY), "inf");
        assert_eq!(sig6(0.0), "0");
    }
}
