//! Score models: the learned (or closed-form) gradient of the log-density of
//! heat-diffused k-space, plus the matching denoiser.

use super::schedule::DiffusionSchedule;
use crate::coils::{coil_project, CoilSensitivities};
use crate::error::{arg_err, shape_err};
use crate::tensor::{ComplexArray, RealArray};
use crate::Result;

/// Queries a sampler needs from a prior over multicoil k-space `[nc, ny, nx]`.
///
/// Scores use the conjugate Wirtinger convention: for `CN(mu, s^2)` the score
/// is `-(z - mu) / s^2`.
pub trait ScoreModel: Send + Sync {
    fn schedule(&self) -> &DiffusionSchedule;

    /// Estimate of the clean k-space `z_0` given `z_t`.
    fn denoise(&self, z: &ComplexArray, t: f64, maps: &CoilSensitivities) -> Result<ComplexArray>;

    fn score(&self, z: &ComplexArray, t: f64, maps: &CoilSensitivities) -> Result<ComplexArray>;

    /// Both queries at once; models that derive one from the other override
    /// this to share the forward pass.
    fn denoise_and_score(
        &self,
        z: &ComplexArray,
        t: f64,
        maps: &CoilSensitivities,
    ) -> Result<(ComplexArray, ComplexArray)> {
        Ok((self.denoise(z, t, maps)?, self.score(z, t, maps)?))
    }
}

/// Score implied by a denoiser through the Tweedie relation,
/// `P[(A_t z0_hat - z)] / sigma(t)^2`.
pub fn tweedie_score(
    z: &ComplexArray,
    denoised: &ComplexArray,
    t: f64,
    schedule: &DiffusionSchedule,
    maps: &CoilSensitivities,
) -> Result<ComplexArray> {
    let a = schedule.atten_at(t);
    let sigma2 = schedule.sigma_at(t).powi(2);
    let resid = denoised.mul_plane_mask(&a)?.sub(z)?;
    Ok(coil_project(&resid, maps)?.scale_real(1.0 / sigma2))
}

/// Exact score for the prior `z0 ~ CN(mean, var I)` pushed through the
/// forward marginal `z_t = A_t z0 + sigma(t) P n`.
#[derive(Clone, Debug)]
pub struct AnalyticGaussianScore {
    mean: ComplexArray,
    var: f64,
    schedule: DiffusionSchedule,
}

pub fn analytic_gaussian_score(
    mean: ComplexArray,
    var: f64,
    schedule: &DiffusionSchedule,
) -> Result<AnalyticGaussianScore> {
    AnalyticGaussianScore::new(mean, var, schedule.clone())
}

impl AnalyticGaussianScore {
    pub fn new(mean: ComplexArray, var: f64, schedule: DiffusionSchedule) -> Result<Self> {
        if !(var > 0.0 && var.is_finite()) {
            return arg_err(format!("prior variance must be positive, got {var}"));
        }
        if mean.ndim() != 3 {
            return shape_err(format!("prior mean must be [nc, ny, nx], got {:?}", mean.shape()));
        }
        schedule.check_grid(&mean)?;
        Ok(AnalyticGaussianScore { mean, var, schedule })
    }

    pub fn mean(&self) -> &ComplexArray {
        &self.mean
    }

    pub fn var(&self) -> f64 {
        self.var
    }

    fn check(&self, z: &ComplexArray) -> Result<()> {
        if z.shape() != self.mean.shape() {
            return shape_err(format!(
                "score input {:?} does not match prior {:?}",
                z.shape(),
                self.mean.shape()
            ));
        }
        Ok(())
    }

    /// Returns `(A_t, A_t^2 var + sigma^2)` on the grid.
    fn marginal(&self, t: f64) -> (RealArray, RealArray) {
        let a = self.schedule.atten_at(t);
        let s2 = self.schedule.sigma_at(t).powi(2);
        let v: Vec<f64> = a.data().iter().map(|&ak| ak * ak * self.var + s2).collect();
        let shape = a.shape().to_vec();
        (a, RealArray::new(shape, v).expect("same grid"))
    }
}

impl ScoreModel for AnalyticGaussianScore {
    fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    fn denoise(&self, z: &ComplexArray, t: f64, _maps: &CoilSensitivities) -> Result<ComplexArray> {
        self.check(z)?;
        let (a, v) = self.marginal(t);
        let s2 = self.schedule.sigma_at(t).powi(2);
        let plane = a.len();
        let mut out = z.clone();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            let k = i % plane;
            let ak = a.data()[k];
            *o = (self.mean.data()[i] * s2 + *o * (ak * self.var)) / v.data()[k];
        }
        Ok(out)
    }

    fn score(&self, z: &ComplexArray, t: f64, maps: &CoilSensitivities) -> Result<ComplexArray> {
        self.check(z)?;
        let (a, v) = self.marginal(t);
        let plane = a.len();
        let mut g = z.clone();
        for (i, o) in g.data_mut().iter_mut().enumerate() {
            let k = i % plane;
            *o = -(*o - self.mean.data()[i] * a.data()[k]) / v.data()[k];
        }
        coil_project(&g, maps)
    }
}
