//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion reports one PASS or FAIL line, then exits nonzero on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use smsdiff::calib::{
    calibrate_slice_grappa, calibrate_spirit, leakage_lfactor, KernelGeometry, DEFAULT_TIKHONOV,
};
use smsdiff::diffusion::{
    analytic_gaussian_score, denoiser_loss, forward_perturb, make_schedule, reverse_sample, train_score,
    ChainConfig, DiffusionSchedule, ScheduleParams, ScoreModel, TrainConfig,
};
use smsdiff::fft::{fft2c, ifft2c};
use smsdiff::metrics::{recon_report, MetricsRow};
use smsdiff::recon::{sense_unfold, sg_sense_pipeline, spirit_recon};
use smsdiff::rng::{child_seed, complex_normal, seeded, Noise};
use smsdiff::sampler::{sms_reconstruct, SamplerConfig, SmsProblem};
use smsdiff::scene::{build_scene, training_set, SceneConfig};
use smsdiff::sim::{caipi_shift, extract_rows, make_phantom, make_uniform_mask, simulate_coils, AcquisitionSpec};
use smsdiff::{CoilSensitivities, ComplexArray, C64};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(started: Instant, limit: Duration) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < limit, format!("took {:.1} s, limit {} s", took.as_secs_f64(), limit.as_secs()))
}

fn random_array(shape: &[usize], seed: u64) -> ComplexArray {
    let mut rng = seeded(seed);
    ComplexArray::from_fn(shape, |_| complex_normal(&mut rng))
}

fn max_abs_diff(a: &ComplexArray, b: &ComplexArray) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn nmse(test: &ComplexArray, reference: &ComplexArray) -> f64 {
    test.sub(reference).unwrap().norm_sqr() / reference.norm_sqr()
}

fn roll_rows(arr: &ComplexArray, dy: usize) -> ComplexArray {
    let (planes, ny, nx) = arr.plane_dims().unwrap();
    let mut out = ComplexArray::zeros(arr.shape());
    for p in 0..planes {
        for y in 0..ny {
            for x in 0..nx {
                out.data_mut()[(p * ny + (y + dy) % ny) * nx + x] = arr.data()[(p * ny + y) * nx + x];
            }
        }
    }
    out
}

fn direct_dft(plane: &[C64], n: usize) -> Vec<C64> {
    let c = (n / 2) as f64;
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for ky in 0..n {
        for kx in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for y in 0..n {
                for x in 0..n {
                    let turns = ((ky as f64 - c) * (y as f64 - c) + (kx as f64 - c) * (x as f64 - c)) / n as f64;
                    acc += plane[y * n + x] * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * turns);
                }
            }
            out[ky * n + kx] = acc / n as f64;
        }
    }
    out
}

fn fft_correctness() -> Check {
    let started = Instant::now();
    let mut rng = seeded(101);
    use rand::Rng;
    let (mut worst_rt, mut worst_parseval) = (0.0f64, 0.0f64);
    for k in 0..200 {
        let (ny, nx) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let x = random_array(&[ny, nx], child_seed(102, k));
        let k_space = fft2c(&x).unwrap();
        worst_rt = worst_rt.max(ifft2c(&k_space).unwrap().rel_err(&x).unwrap());
        worst_parseval = worst_parseval.max((k_space.norm_sqr() - x.norm_sqr()).abs() / x.norm_sqr());
    }
    ensure(worst_rt < 1e-10, format!("roundtrip error {worst_rt:e}"))?;
    ensure(worst_parseval < 1e-10, format!("Parseval error {worst_parseval:e}"))?;
    let x = random_array(&[8, 8], 103);
    let want = ComplexArray::new(vec![8, 8], direct_dft(x.data(), 8)).unwrap();
    let dft_err = max_abs_diff(&fft2c(&x).unwrap(), &want);
    ensure(dft_err < 1e-10, format!("direct DFT disagreement {dft_err:e}"))?;
    within(started, Duration::from_secs(5))?;
    Ok(format!("roundtrip {worst_rt:.1e}, Parseval {worst_parseval:.1e}, direct DFT {dft_err:.1e}"))
}

fn caipi_exactness() -> Check {
    let spec = AcquisitionSpec { mb: 3, caipi_fraction: 1.0 / 3.0, ..Default::default() };
    let mut worst = 0.0f64;
    for ny in (3..=96).step_by(3) {
        let img = random_array(&[2, ny, 5], ny as u64);
        let k_space = fft2c(&img).unwrap();
        for slice in 1..3 {
            let shifted = ifft2c(&caipi_shift(&k_space, slice, &spec, false).unwrap()).unwrap();
            worst = worst.max(max_abs_diff(&shifted, &roll_rows(&img, slice * ny / 3)));
        }
    }
    ensure(worst < 1e-10, format!("ramp vs roll {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e} over ny = 3..96"))
}

/// Columns are (coil, ty, tx); rows are kernel centers inside the block.
fn patch_matrix(block: &ComplexArray, k: usize) -> (DMatrix<C64>, Vec<(usize, usize)>) {
    let (nc, h, w) = (block.shape()[0], block.shape()[1], block.shape()[2]);
    let half = k / 2;
    let centers: Vec<(usize, usize)> = (half..h - half).flat_map(|y| (half..w - half).map(move |x| (y, x))).collect();
    let a = DMatrix::from_fn(centers.len(), nc * k * k, |r, col| {
        let (y, x) = centers[r];
        let (c, ty, tx) = (col / (k * k), (col / k) % k, col % k);
        block.data()[(c * h + y + ty - half) * w + x + tx - half]
    });
    (a, centers)
}

fn normal_equations(a: &DMatrix<C64>, b: &DMatrix<C64>, rel: f64) -> DMatrix<C64> {
    let mut g = a.adjoint() * a;
    let n = g.nrows();
    let lambda = rel * (0..n).map(|i| g[(i, i)].re).sum::<f64>() / n as f64;
    for i in 0..n {
        g[(i, i)] += C64::new(lambda, 0.0);
    }
    g.lu().solve(&(a.adjoint() * b)).expect("regularized system is nonsingular")
}

fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    (num / b.iter().map(|y| y.norm_sqr()).sum::<f64>()).sqrt()
}

fn calibration_oracles() -> Check {
    let started = Instant::now();
    let (mb, nc, n) = (3, 4, 16);
    let ny = 24;
    let truth = make_phantom(ny, n, mb, 7).unwrap();
    let spec = AcquisitionSpec { mb, caipi_fraction: 1.0 / 3.0, accel: 1, acs_lines: n, ..Default::default() };
    let rows = ny / 2 - n / 2..ny / 2 + n / 2;
    let mut acs_blocks = Vec::new();
    let mut shifted = Vec::new();
    for s in 0..mb {
        let coil_img = simulate_coils(ny, n, nc, 20 + s as u64).unwrap().expand(&truth.slab(s).unwrap()).unwrap();
        acs_blocks.push(extract_rows(&fft2c(&coil_img).unwrap(), rows.clone()).unwrap());
        shifted.push(extract_rows(&fft2c(&roll_rows(&coil_img, s * ny / mb)).unwrap(), rows.clone()).unwrap());
    }
    let acs = ComplexArray::stack(&acs_blocks).unwrap();
    let mut collapsed = ComplexArray::zeros(&[nc, n, n]);
    for s in &shifted {
        collapsed = collapsed.add(s).unwrap();
    }

    let sg = calibrate_slice_grappa(&acs, &spec, ny, KernelGeometry::new(3, 3), DEFAULT_TIKHONOV).unwrap();
    let (a, centers) = patch_matrix(&collapsed, 3);
    let mut worst_sg = 0.0f64;
    for s in 0..mb {
        for c in 0..nc {
            let b = DMatrix::from_fn(centers.len(), 1, |r, _| {
                let (y, x) = centers[r];
                shifted[s].data()[(c * n + y) * n + x]
            });
            let w = normal_equations(&a, &b, DEFAULT_TIKHONOV);
            worst_sg = worst_sg.max(rel_diff(sg.weight(s, c).data(), w.as_slice()));
        }
    }

    let block = acs.slab(0).unwrap();
    let spirit = calibrate_spirit(&block, KernelGeometry::new(3, 3), DEFAULT_TIKHONOV).unwrap();
    let (a, centers) = patch_matrix(&block, 3);
    let mut worst_spirit = 0.0f64;
    for c in 0..nc {
        let skip = c * 9 + 4;
        let keep: Vec<usize> = (0..a.ncols()).filter(|&j| j != skip).collect();
        let b = DMatrix::from_fn(centers.len(), 1, |r, _| {
            let (y, x) = centers[r];
            block.data()[(c * n + y) * n + x]
        });
        let w = normal_equations(&a.select_columns(&keep), &b, DEFAULT_TIKHONOV);
        let got: Vec<C64> = keep.iter().map(|&j| spirit.weights[c].data()[j]).collect();
        ensure(spirit.weights[c].data()[skip] == C64::new(0.0, 0.0), "SPIRiT kernel uses its own center")?;
        worst_spirit = worst_spirit.max(rel_diff(&got, w.as_slice()));
    }
    ensure(worst_sg < 1e-8, format!("Slice-GRAPPA relative error {worst_sg:e}"))?;
    ensure(worst_spirit < 1e-8, format!("SPIRiT relative error {worst_spirit:e}"))?;
    within(started, Duration::from_secs(10))?;
    Ok(format!("Slice-GRAPPA {worst_sg:.1e}, SPIRiT {worst_spirit:.1e}"))
}

fn sense_exactness() -> Check {
    let truth = make_phantom(32, 32, 1, 2).unwrap().slab(0).unwrap();
    let maps = simulate_coils(32, 32, 4, 3).unwrap();
    let mask = make_uniform_mask(32, 2, 0).unwrap();
    let out = sense_unfold(&mask.apply(&maps.expand_to_kspace(&truth).unwrap()).unwrap(), &maps, 2).unwrap();
    let e = nmse(&out.image, &truth);
    ensure(e < 1e-10, format!("NMSE {e:e}"))?;
    Ok(format!("NMSE {e:.1e}"))
}

fn spirit_data_consistency() -> Check {
    let truth = make_phantom(48, 48, 1, 6).unwrap().slab(0).unwrap();
    let maps = simulate_coils(48, 48, 8, 7).unwrap();
    let full = maps.expand_to_kspace(&truth).unwrap();
    let mask = make_uniform_mask(48, 2, 16).unwrap();
    let measured = mask.apply(&full).unwrap();
    let kernel = calibrate_spirit(&extract_rows(&full, mask.acs_range()).unwrap(), KernelGeometry::new(5, 5), DEFAULT_TIKHONOV).unwrap();
    let out = spirit_recon(&measured, &kernel, &mask, 100, 1e-6).map_err(|e| e.to_string())?;
    let exact = out
        .ksp
        .data()
        .iter()
        .zip(measured.data())
        .enumerate()
        .all(|(i, (a, b))| !mask.pattern[(i / 48) % 48] || a == b);
    ensure(exact, "acquired samples were altered")?;
    let e = nmse(&out.ksp, &full);
    ensure(out.iterations <= 100 && e < 1e-3, format!("NMSE {e:e} after {} iterations", out.iterations))?;
    Ok(format!("bit-exact on acquired lines, NMSE {e:.1e} after {} iterations", out.iterations))
}

fn gaussian_closure() -> Check {
    let started = Instant::now();
    let (n, chains, var) = (8, 2000, 0.05);
    let sched = make_schedule(n, n, 200, 0.01, 1.0, 0.25).unwrap();
    let maps = CoilSensitivities::new(ComplexArray::filled(&[1, n, n], C64::new(1.0, 0.0))).unwrap();
    let mut rng = seeded(5);
    let mean = ComplexArray::from_fn(&[1, n, n], |_| {
        let c = complex_normal(&mut rng);
        c / c.norm() * (0.5 + c.norm().min(1.0))
    });
    let model = analytic_gaussian_score(mean.clone(), var, &sched).unwrap();
    let cfg = ChainConfig::default();
    let mut sum = vec![C64::new(0.0, 0.0); n * n];
    let mut sum_sq = vec![0.0; n * n];
    for k in 0..chains {
        let mut draw = seeded(child_seed(1, k));
        let z0 = ComplexArray::from_fn(&[1, n, n], |i| mean.data()[i] + complex_normal(&mut draw) * var.sqrt());
        let mut noise = Noise::from_seed(child_seed(2, k));
        let zt = forward_perturb(&z0, 1.0, &sched, &maps, &mut noise).unwrap();
        let out = reverse_sample(&zt, &sched, &model, &maps, &cfg, &mut noise).map_err(|e| e.to_string())?;
        for (i, v) in out.data().iter().enumerate() {
            sum[i] += v;
            sum_sq[i] += v.norm_sqr();
        }
    }
    let m = chains as f64;
    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    for i in 0..n * n {
        let mu = sum[i] / m;
        let v = (sum_sq[i] - m * mu.norm_sqr()) / (m - 1.0);
        worst_mean = worst_mean.max((mu - mean.data()[i]).norm() / mean.data()[i].norm());
        worst_var = worst_var.max((v / var - 1.0).abs());
    }
    ensure(worst_mean < 0.05, format!("mean off by {:.1}%", 100.0 * worst_mean))?;
    ensure(worst_var < 0.15, format!("variance off by {:.1}%", 100.0 * worst_var))?;
    within(started, Duration::from_secs(120))?;
    Ok(format!(
        "{chains} chains: worst mean {:.2}%, worst variance {:.2}%",
        100.0 * worst_mean,
        100.0 * worst_var
    ))
}

fn gradient_check() -> Check {
    let (n, t) = (8, 0.4);
    let sched = make_schedule(n, n, 20, 0.01, 1.0, 0.25).unwrap();
    let maps = simulate_coils(n, n, 3, 30).unwrap();
    let x = random_array(&[n, n], 31);
    let z0 = maps.expand_to_kspace(&random_array(&[n, n], 32)).unwrap();
    let dirs = [
        x.clone(),
        x.scale(C64::new(0.0, 1.0)),
        ComplexArray::filled(&[n, n], C64::new(1.0, 0.0)),
    ];
    let output = |theta: [f64; 3]| {
        let mut y = ComplexArray::zeros(&[n, n]);
        for (d, w) in dirs.iter().zip(theta) {
            y.axpy(C64::new(w, 0.0), d).unwrap();
        }
        y
    };
    let theta = [0.7, -0.2, 0.1];
    let (_, grad) = denoiser_loss(&output(theta), &z0, t, &sched, &maps).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for p in 0..3 {
        let analytic: f64 = grad.data().iter().zip(dirs[p].data()).map(|(g, d)| g.re * d.re + g.im * d.im).sum();
        let (mut up, mut down) = (theta, theta);
        up[p] += h;
        down[p] -= h;
        let fd = (denoiser_loss(&output(up), &z0, t, &sched, &maps).unwrap().0
            - denoiser_loss(&output(down), &z0, t, &sched, &maps).unwrap().0)
            / (2.0 * h);
        worst = worst.max((fd - analytic).abs() / fd.abs());
    }
    ensure(worst < 1e-4, format!("relative error {worst:e}"))?;
    Ok(format!("worst relative error {worst:.1e}"))
}

const SCENE_SEED: u64 = 11;
const TRAIN_SEED: u64 = 7;
const SAMPLER_SEED: u64 = 3;

fn scene_config(accel: usize) -> SceneConfig {
    SceneConfig { ny: 64, nx: 64, nc: 8, mb: 3, accel, acs_lines: 24, ..Default::default() }
}

struct Trained {
    schedule: DiffusionSchedule,
    model: Arc<dyn ScoreModel>,
    seconds: f64,
}

fn train_model() -> Trained {
    let started = Instant::now();
    let schedule = DiffusionSchedule::new(64, 64, ScheduleParams::default()).unwrap();
    let (data, maps) = training_set(&scene_config(3), 50, TRAIN_SEED).unwrap();
    let (model, _) = train_score(&data, &maps, &schedule, &TrainConfig::default()).unwrap();
    Trained { schedule, model: Arc::new(model), seconds: started.elapsed().as_secs_f64() }
}

struct AccelResult {
    baseline: MetricsRow,
    proposed: MetricsRow,
    seconds: f64,
}

fn reconstruct(trained: &Trained, accel: usize) -> AccelResult {
    let started = Instant::now();
    let scene = build_scene(&scene_config(accel), SCENE_SEED).unwrap();
    let acq = &scene.acquisition;
    let init_kernels =
        calibrate_slice_grappa(&acq.acs, &scene.spec, 64, KernelGeometry::new(3, 5).with_stride(accel), DEFAULT_TIKHONOV).unwrap();
    let baseline = sg_sense_pipeline(&acq.sms_ksp, &init_kernels, &scene.maps, &acq.mask, &scene.spec).unwrap();
    let problem = SmsProblem {
        sms_ksp: acq.sms_ksp.clone(),
        mask: acq.mask.clone(),
        kernels: calibrate_slice_grappa(&acq.acs, &scene.spec, 64, KernelGeometry::new(5, 5), DEFAULT_TIKHONOV).unwrap(),
        init_kernels: Some(init_kernels),
        acs: acq.acs.clone(),
        maps_per_slice: scene.maps.clone(),
        spec: scene.spec.clone(),
        schedule: trained.schedule.clone(),
        score_model: trained.model.clone(),
    };
    let proposed = sms_reconstruct(&problem, &SamplerConfig::default(), SAMPLER_SEED).unwrap();
    let mean_row = |img: &ComplexArray, name: &str| recon_report(&scene.truth, img, name).unwrap().pop().unwrap();
    AccelResult {
        baseline: mean_row(&baseline, "sg-sense"),
        proposed: mean_row(&proposed.images, "proposed"),
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn table_one(trained: &Trained, results: &[(usize, AccelResult)]) -> Check {
    let (r3, r4) = (&results[0].1, &results[1].1);
    let seconds = trained.seconds + r3.seconds + r4.seconds;
    let summary = format!(
        "PSNR baseline {:.2} -> {:.2} dB, proposed {:.2} -> {:.2} dB ({seconds:.0} s)",
        r3.baseline.psnr_db, r4.baseline.psnr_db, r3.proposed.psnr_db, r4.proposed.psnr_db
    );
    ensure(r3.proposed.psnr_db > r3.baseline.psnr_db, format!("proposed loses at 3x: {summary}"))?;
    ensure(r4.proposed.psnr_db > r4.baseline.psnr_db, format!("proposed loses at 4x: {summary}"))?;
    let drop_base = r3.baseline.psnr_db - r4.baseline.psnr_db;
    let drop_prop = r3.proposed.psnr_db - r4.proposed.psnr_db;
    ensure(drop_base > drop_prop, format!("baseline drop {drop_base:.2} <= proposed drop {drop_prop:.2}: {summary}"))?;
    ensure(seconds < 900.0, format!("took {seconds:.0} s: {summary}"))?;
    Ok(summary)
}

fn table_two(results: &[(usize, AccelResult)]) -> Check {
    let rows: Vec<String> = results
        .iter()
        .map(|(r, res)| format!("{r}x {:.4}/{:.2}", res.proposed.nmse, res.proposed.psnr_db))
        .collect();
    let summary = format!("NMSE/PSNR {}", rows.join(", "));
    for pair in results.windows(2) {
        let (a, b) = (&pair[0].1.proposed, &pair[1].1.proposed);
        ensure(b.psnr_db <= a.psnr_db && b.nmse >= a.nmse, format!("not monotone at {}x: {summary}", pair[1].0))?;
    }
    Ok(summary)
}

fn lfactor_sanity() -> Check {
    let cfg = SceneConfig { ny: 48, nx: 48, accel: 1, acs_lines: 48, ..Default::default() };
    let scene = build_scene(&cfg, 2).unwrap();
    let k = calibrate_slice_grappa(&scene.acquisition.acs, &scene.spec, 48, KernelGeometry::new(5, 5), DEFAULT_TIKHONOV).unwrap();
    let report = leakage_lfactor(&k, &scene.maps, &scene.spec, &scene.truth).unwrap();
    let mb = report.mb;
    for i in 0..mb {
        let off: f64 = (0..mb).filter(|&j| j != i).map(|j| report.entry(i, j).abs()).sum();
        ensure(report.entry(i, i) > off, format!("row {i}: diagonal {:.3e} vs off-diagonal sum {off:.3e}", report.entry(i, i)))?;
    }
    let worst = (0..mb)
        .map(|i| (0..mb).filter(|&j| j != i).map(|j| report.entry(i, j)).sum::<f64>() / report.entry(i, i))
        .fold(0.0, f64::max);
    Ok(format!("worst off-diagonal/diagonal row ratio {worst:.2e}"))
}

fn cli_pipeline(root: &Path, cfg: &Path) -> Result<(), String> {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let d = |n: &str| s(&root.join(n));
    let c = s(cfg);
    let steps: Vec<Vec<String>> = vec![
        vec!["simulate".into(), "--out".into(), d("sim")],
        vec!["calibrate".into(), "--input".into(), d("sim"), "--out".into(), d("calib")],
        vec!["train".into(), "--out".into(), d("model")],
        vec!["recon".into(), "--method".into(), "sg-sense".into(), "--input".into(), d("sim"), "--calib".into(), d("calib"), "--out".into(), d("base")],
        vec![
            "recon".into(), "--method".into(), "proposed".into(), "--input".into(), d("sim"), "--calib".into(), d("calib"),
            "--model".into(), d("model"), "--out".into(), d("prop"),
        ],
        vec!["eval".into(), "--truth".into(), d("sim"), "--recon".into(), d("prop"), "--out".into(), d("eval")],
    ];
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_smsdiff"))
            .args(&args)
            .args(["--config", &c])
            .env("RUST_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))?;
    }
    Ok(())
}

fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for stage in std::fs::read_dir(root).unwrap() {
        let stage = stage.unwrap().path();
        for f in std::fs::read_dir(&stage).unwrap() {
            let f = f.unwrap().path();
            let name = format!("{}/{}", stage.file_name().unwrap().to_string_lossy(), f.file_name().unwrap().to_string_lossy());
            if !name.ends_with("timing.json") {
                files.push((name, std::fs::read(&f).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = tmp.path().join("config.json");
    let body = serde_json::json!({
        "seed": 21,
        "sim": {"ny": 48, "nx": 40, "nc": 4, "accel": 3, "acs_lines": 16},
        "diffusion": {"schedule": {"n_steps": 20}, "train": {"steps": 10, "batch_size": 2, "width": 4}, "n_train": 4}
    });
    std::fs::write(&cfg, body.to_string()).map_err(|e| e.to_string())?;
    let root = tmp.path().join("run");
    cli_pipeline(&root, &cfg)?;
    let first = snapshot(&root);
    std::fs::remove_dir_all(&root).map_err(|e| e.to_string())?;
    cli_pipeline(&root, &cfg)?;
    let second = snapshot(&root);
    let names = |v: &[(String, Vec<u8>)]| v.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    ensure(names(&first) == names(&second), "rerun wrote a different file set")?;
    for ((name, a), (_, b)) in first.iter().zip(&second) {
        ensure(a == b, format!("{name} differs between reruns"))?;
    }
    Ok(format!("{} files byte-identical across reruns", first.len()))
}

fn report(id: usize, title: &str, check: impl FnOnce() -> Check) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into());
        Err(msg)
    });
    match outcome {
        Ok(detail) => {
            println!("PASS {id:>2} {title}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL {id:>2} {title}: {detail}");
            false
        }
    }
}

fn main() {
    let mut passed = vec![
        report(1, "FFT correctness", fft_correctness),
        report(2, "CAIPIRINHA exactness", caipi_exactness),
        report(3, "calibration oracles", calibration_oracles),
        report(4, "SENSE exactness", sense_exactness),
        report(5, "SPIRiT data consistency", spirit_data_consistency),
        report(6, "Gaussian closure", gaussian_closure),
        report(7, "training gradient check", gradient_check),
    ];

    let shared = catch_unwind(|| {
        let trained = train_model();
        let results: Vec<(usize, AccelResult)> = (3..=8).map(|r| (r, reconstruct(&trained, r))).collect();
        (trained, results)
    });
    match &shared {
        Ok((trained, results)) => {
            passed.push(report(8, "directional 3x/4x comparison", || table_one(trained, results)));
            passed.push(report(9, "acceleration sweep", || table_two(results)));
        }
        Err(_) => {
            println!("FAIL  8 directional 3x/4x comparison: shared scene run panicked");
            println!("FAIL  9 acceleration sweep: shared scene run panicked");
            passed.extend([false, false]);
        }
    }

    passed.push(report(10, "L-factor sanity", lfactor_sanity));
    passed.push(report(11, "determinism", determinism));

    let failed = passed.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", passed.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
