//! Forward perturbation and the discrete reverse-time updates.

use serde::{Deserialize, Serialize};

use super::schedule::DiffusionSchedule;
use super::score::ScoreModel;
use crate::coils::{coil_project, CoilSensitivities};
use crate::error::{arg_err, Error};
use crate::rng::Noise;
use crate::tensor::{ComplexArray, RealArray, C64};
use crate::Result;

/// Samples the forward marginal `z_t = A_t z0 + sigma(t) P n`.
pub fn forward_perturb(
    z0: &ComplexArray,
    t: f64,
    schedule: &DiffusionSchedule,
    maps: &CoilSensitivities,
    noise: &mut Noise,
) -> Result<ComplexArray> {
    if !(0.0..=1.0).contains(&t) {
        return arg_err(format!("t = {t} outside [0, 1]"));
    }
    schedule.check_grid(z0)?;
    let pn = coil_project(&noise.draw(z0.shape()), maps)?;
    let mut z = z0.mul_plane_mask(&schedule.atten_at(t))?;
    z.axpy(C64::new(schedule.sigma_at(t), 0.0), &pn)?;
    Ok(z)
}

fn check_step(i: usize, schedule: &DiffusionSchedule) -> Result<()> {
    if i >= schedule.n_steps() {
        return arg_err(format!("step {i} outside 0..{}", schedule.n_steps()));
    }
    Ok(())
}

fn finite_or(z: ComplexArray, step: usize, what: &str) -> Result<ComplexArray> {
    if z.all_finite() {
        Ok(z)
    } else {
        Err(Error::Numerical {
            step,
            what: what.to_string(),
        })
    }
}

/// One reverse step from `t_{i+1}` to `t_i`,
/// `z_i = z_{i+1} + P[(A_i - A_{i+1}) z0_hat + (sigma_{i+1}^2 - sigma_i^2) s + sqrt(sigma_{i+1}^2 - sigma_i^2) n]`
/// with `z0_hat` and `s` supplied by the caller (already evaluated at `t_{i+1}`).
///
/// The restoration term is projected together with the stochastic terms so a
/// coil-consistent iterate stays coil-consistent.
pub fn predictor_update(
    z_next: &ComplexArray,
    i: usize,
    schedule: &DiffusionSchedule,
    z0_hat: &ComplexArray,
    score: &ComplexArray,
    maps: &CoilSensitivities,
    noise: &mut Noise,
) -> Result<ComplexArray> {
    check_step(i, schedule)?;
    schedule.check_grid(z_next)?;
    let (a_hi, a_lo) = (schedule.atten(i + 1), schedule.atten(i));
    let d_atten = RealArray::new(
        a_lo.shape().to_vec(),
        a_lo.data().iter().zip(a_hi.data()).map(|(l, h)| l - h).collect(),
    )?;
    let d_var = schedule.sigma(i + 1).powi(2) - schedule.sigma(i).powi(2);
    let n = noise.draw(z_next.shape());
    let mut incr = z0_hat.mul_plane_mask(&d_atten)?;
    incr.axpy(C64::new(d_var, 0.0), score)?;
    incr.axpy(C64::new(d_var.max(0.0).sqrt(), 0.0), &n)?;
    let z = z_next.add(&coil_project(&incr, maps)?)?;
    finite_or(z, i, "predictor output")
}

/// Predictor with `z0_hat` and the score both taken from `model` at `t_{i+1}`.
pub fn predictor_step(
    z_next: &ComplexArray,
    i: usize,
    schedule: &DiffusionSchedule,
    model: &dyn ScoreModel,
    maps: &CoilSensitivities,
    noise: &mut Noise,
) -> Result<ComplexArray> {
    check_step(i, schedule)?;
    let (z0_hat, score) = model.denoise_and_score(z_next, schedule.t(i + 1), maps)?;
    predictor_update(z_next, i, schedule, &z0_hat, &score, maps, noise)
}

/// Langevin update `z + P[eps s + sqrt(2 eps) n]` with the annealed step size
/// `eps = 2 (snr |P n| / |P s|)^2`. A zero score leaves `z` unchanged.
pub fn corrector_update(
    z: &ComplexArray,
    score: &ComplexArray,
    step: usize,
    maps: &CoilSensitivities,
    snr: f64,
    noise: &mut Noise,
) -> Result<ComplexArray> {
    let pn = coil_project(&noise.draw(z.shape()), maps)?;
    let ps = coil_project(score, maps)?;
    let s_norm = ps.norm2();
    if s_norm == 0.0 {
        return Ok(z.clone());
    }
    let eps = 2.0 * (snr * pn.norm2() / s_norm).powi(2);
    let mut out = z.clone();
    out.axpy(C64::new(eps, 0.0), &ps)?;
    out.axpy(C64::new((2.0 * eps).sqrt(), 0.0), &pn)?;
    finite_or(out, step, "corrector output")
}

/// Corrector at grid time `t_i`.
pub fn corrector_step(
    z: &ComplexArray,
    i: usize,
    schedule: &DiffusionSchedule,
    model: &dyn ScoreModel,
    maps: &CoilSensitivities,
    snr: f64,
    noise: &mut Noise,
) -> Result<ComplexArray> {
    if i > schedule.n_steps() {
        return arg_err(format!("step {i} outside 0..={}", schedule.n_steps()));
    }
    let score = model.score(z, schedule.t(i), maps)?;
    corrector_update(z, &score, i, maps, snr, noise)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    /// Langevin corrector steps per predictor step.
    pub n_corrector: usize,
    /// Signal-to-noise parameter of the corrector step size.
    pub snr: f64,
    /// Run the correctors at `t_{i+1}` before the predictor (otherwise at `t_i` after it).
    pub corrector_first: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_corrector: 1,
            snr: 0.04,
            corrector_first: true,
        }
    }
}

pub(crate) fn run_correctors(
    mut z: ComplexArray,
    i: usize,
    schedule: &DiffusionSchedule,
    model: &dyn ScoreModel,
    maps: &CoilSensitivities,
    cfg: &ChainConfig,
    noise: &mut Noise,
) -> Result<ComplexArray> {
    for _ in 0..cfg.n_corrector {
        z = corrector_step(&z, i, schedule, model, maps, cfg.snr, noise)?;
    }
    Ok(z)
}

/// Full single-slice reverse chain from `z_start` at `t = 1` down to `t = 0`.
pub fn reverse_sample(
    z_start: &ComplexArray,
    schedule: &DiffusionSchedule,
    model: &dyn ScoreModel,
    maps: &CoilSensitivities,
    cfg: &ChainConfig,
    noise: &mut Noise,
) -> Result<ComplexArray> {
    let mut z = z_start.clone();
    for i in (0..schedule.n_steps()).rev() {
        if cfg.corrector_first {
            z = run_correctors(z, i + 1, schedule, model, maps, cfg, noise)?;
        }
        z = predictor_step(&z, i, schedule, model, maps, noise)?;
        if !cfg.corrector_first {
            z = run_correctors(z, i, schedule, model, maps, cfg, noise)?;
        }
    }
    Ok(z)
}
