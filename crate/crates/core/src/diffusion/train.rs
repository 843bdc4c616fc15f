//! Denoising score matching on single-slice multicoil k-space.

use log::debug;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::ConvDenoiser;
use super::schedule::DiffusionSchedule;
use super::score::{tweedie_score, ScoreModel};
use super::steps::forward_perturb;
use crate::coils::CoilSensitivities;
use crate::error::{arg_err, shape_err, Error};
use crate::rng::{child_seed, seeded, Noise};
use crate::tensor::{ComplexArray, C64};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Hidden channels of the convolutional denoiser.
    pub width: usize,
    /// Gradient norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    /// Keep the last dataset item out of training and report losses on it.
    /// Ignored for single-item datasets, which are evaluated on that item.
    pub holdout: bool,
    /// Diffusion times at which the held-out loss is evaluated.
    pub eval_times: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 400,
            batch_size: 8,
            learning_rate: 0.05,
            momentum: 0.9,
            width: 16,
            grad_clip: 1.0,
            seed: 0,
            holdout: true,
            eval_times: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per optimizer step.
    pub loss_history: Vec<f64>,
    pub holdout_index: usize,
    pub initial_holdout_loss: f64,
    pub final_holdout_loss: f64,
}

/// Score model backed by a trained image-domain residual denoiser:
/// `h(z_t, t) = F S (x + sigma(t) r(c_in x, t))` with `x = S* F^-1 z_t` and
/// `c_in = 1 / sqrt(1 + sigma^2)`. The score follows from `h` via Tweedie.
#[derive(Clone, Debug)]
pub struct TrainedScore {
    net: ConvDenoiser,
    schedule: DiffusionSchedule,
}

impl TrainedScore {
    pub fn new(net: ConvDenoiser, schedule: DiffusionSchedule) -> Self {
        TrainedScore { net, schedule }
    }

    pub fn network(&self) -> &ConvDenoiser {
        &self.net
    }

    fn c_in(&self, t: f64) -> f64 {
        1.0 / (1.0 + self.schedule.sigma_at(t).powi(2)).sqrt()
    }

    /// Denoised combined image for a combined noisy image `x`.
    pub fn denoise_image(&self, x: &ComplexArray, t: f64) -> Result<ComplexArray> {
        if x.ndim() != 2 || x.shape() != [self.schedule.dims().0, self.schedule.dims().1] {
            return shape_err(format!("denoiser image {:?} does not match schedule grid", x.shape()));
        }
        let (r, _) = self.net.forward(x, t, self.c_in(t));
        let mut y = x.clone();
        y.axpy(C64::new(self.schedule.sigma_at(t), 0.0), &r)?;
        Ok(y)
    }
}

impl ScoreModel for TrainedScore {
    fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    fn denoise(&self, z: &ComplexArray, t: f64, maps: &CoilSensitivities) -> Result<ComplexArray> {
        self.schedule.check_grid(z)?;
        let y = self.denoise_image(&maps.combine_kspace(z)?, t)?;
        maps.expand_to_kspace(&y)
    }

    fn score(&self, z: &ComplexArray, t: f64, maps: &CoilSensitivities) -> Result<ComplexArray> {
        Ok(self.denoise_and_score(z, t, maps)?.1)
    }

    fn denoise_and_score(
        &self,
        z: &ComplexArray,
        t: f64,
        maps: &CoilSensitivities,
    ) -> Result<(ComplexArray, ComplexArray)> {
        let h = self.denoise(z, t, maps)?;
        let s = tweedie_score(z, &h, t, &self.schedule, maps)?;
        Ok((h, s))
    }
}

/// Weighted score-matching loss of a denoised image `y` against clean
/// k-space `z0` at time `t`,
/// `L = |S* F^-1 (A_t (F S y - z0))|^2 / (ny nx)`,
/// with its gradient in `y` (real part holds `dL/dRe y`, imaginary part `dL/dIm y`).
pub fn denoiser_loss(
    y: &ComplexArray,
    z0: &ComplexArray,
    t: f64,
    schedule: &DiffusionSchedule,
    maps: &CoilSensitivities,
) -> Result<(f64, ComplexArray)> {
    let a = schedule.atten_at(t);
    let npix = a.len() as f64;
    let e = maps.expand_to_kspace(y)?.sub(z0)?.mul_plane_mask(&a)?;
    let q = maps.combine_kspace(&e)?;
    let loss = q.norm_sqr() / npix;
    let g = maps
        .combine_kspace(&maps.expand_to_kspace(&q)?.mul_plane_mask(&a)?)?
        .scale_real(2.0 / npix);
    Ok((loss, g))
}

struct Draw {
    item: usize,
    t: f64,
    seed: u64,
}

fn sample_loss(
    model: &TrainedScore,
    z0: &ComplexArray,
    maps: &CoilSensitivities,
    draw: &Draw,
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    let sched = &model.schedule;
    let zt = forward_perturb(z0, draw.t, sched, maps, &mut Noise::from_seed(draw.seed))?;
    let x = maps.combine_kspace(&zt)?;
    let sigma = sched.sigma_at(draw.t);
    let (r, cache) = model.net.forward(&x, draw.t, model.c_in(draw.t));
    let mut y = x;
    y.axpy(C64::new(sigma, 0.0), &r)?;
    let (loss, g_y) = denoiser_loss(&y, z0, draw.t, sched, maps)?;
    if !with_grad {
        return Ok((loss, Vec::new()));
    }
    Ok((loss, model.net.backward(&cache, &g_y.scale_real(sigma))))
}

fn holdout_loss(
    model: &TrainedScore,
    z0: &ComplexArray,
    maps: &CoilSensitivities,
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (j, &t) in cfg.eval_times.iter().enumerate() {
        let draw = Draw {
            item: 0,
            t,
            seed: child_seed(cfg.seed ^ 0x5eed_e7a1, j as u64),
        };
        total += sample_loss(model, z0, maps, &draw, false)?.0;
    }
    Ok(total / cfg.eval_times.len().max(1) as f64)
}

/// Trains the denoiser by SGD with momentum on uniformly drawn diffusion
/// times. Batches are evaluated in parallel and summed in a fixed order so
/// results do not depend on the worker count. Final parameters are rounded
/// to single precision so they survive the interchange format unchanged.
pub fn train_score(
    dataset: &[ComplexArray],
    maps_per_item: &[CoilSensitivities],
    schedule: &DiffusionSchedule,
    cfg: &TrainConfig,
) -> Result<(TrainedScore, TrainReport)> {
    if dataset.is_empty() {
        return arg_err("training dataset is empty");
    }
    if maps_per_item.len() != dataset.len() {
        return arg_err(format!(
            "{} dataset items but {} map sets",
            dataset.len(),
            maps_per_item.len()
        ));
    }
    if let Some(bad) = dataset.iter().find(|d| d.shape() != dataset[0].shape()) {
        return shape_err(format!(
            "dataset items differ in shape: {:?} vs {:?}",
            dataset[0].shape(),
            bad.shape()
        ));
    }
    schedule.check_grid(&dataset[0])?;
    if cfg.batch_size == 0 || cfg.eval_times.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return arg_err("batch_size must be positive and eval_times within [0, 1]");
    }
    let mut rng = seeded(cfg.seed);
    let net = ConvDenoiser::new(cfg.width, &mut rng)?;
    let mut model = TrainedScore::new(net, schedule.clone());
    let holdout_index = dataset.len() - 1;
    let n_train = if cfg.holdout && dataset.len() > 1 {
        dataset.len() - 1
    } else {
        dataset.len()
    };
    let (hz, hm) = (&dataset[holdout_index], &maps_per_item[holdout_index]);
    let initial_holdout_loss = holdout_loss(&model, hz, hm, cfg)?;
    let mut velocity = vec![0.0; model.net.n_params()];
    let mut loss_history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let draws: Vec<Draw> = (0..cfg.batch_size)
            .map(|_| Draw {
                item: rng.random_range(0..n_train),
                t: rng.random::<f64>(),
                seed: rng.random::<u64>(),
            })
            .collect();
        let results: Vec<(f64, Vec<f64>)> = draws
            .par_iter()
            .map(|d| sample_loss(&model, &dataset[d.item], &maps_per_item[d.item], d, true))
            .collect::<Result<_>>()?;
        let scale = 1.0 / cfg.batch_size as f64;
        let mut grad = vec![0.0; velocity.len()];
        let mut loss = 0.0;
        for (l, g) in &results {
            loss += l * scale;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b * scale;
            }
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !loss.is_finite() || !gnorm.is_finite() {
            return Err(Error::TrainingDiverged { step, loss });
        }
        let clip = if cfg.grad_clip > 0.0 && gnorm > cfg.grad_clip {
            cfg.grad_clip / gnorm
        } else {
            1.0
        };
        for ((p, v), g) in model.net.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
            *v = cfg.momentum * *v + g * clip;
            *p -= cfg.learning_rate * *v;
        }
        if step % 50 == 0 {
            debug!("train step {step}: loss {loss:.4e}, grad norm {gnorm:.3e}");
        }
        loss_history.push(loss);
    }
    for p in model.net.params_mut() {
        *p = *p as f32 as f64;
    }
    let final_holdout_loss = holdout_loss(&model, hz, hm, cfg)?;
    Ok((
        model,
        TrainReport {
            loss_history,
            holdout_index,
            initial_holdout_loss,
            final_holdout_loss,
        },
    ))
}
