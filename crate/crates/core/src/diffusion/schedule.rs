//! Heat-diffusion schedule: cumulative Gaussian k-space attenuation plus a
//! geometric noise level, on a uniform time grid.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::arg_err;
use crate::tensor::{ComplexArray, RealArray};
use crate::Result;

/// Tunable schedule parameters. `rho` is relative to the Nyquist radius
/// (0.5 cycles/sample), so the default 0.25 gives an absolute width of 0.125.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleParams {
    pub n_steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            n_steps: 200,
            sigma_min: 0.01,
            sigma_max: 1.0,
            rho: 0.25,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DiffusionSchedule {
    params: ScheduleParams,
    ny: usize,
    nx: usize,
    /// `|k|^2 / rho^2` per grid location, `k` in cycles/sample.
    base: Vec<f64>,
}

/// Builds the schedule with `A_t(k) = exp(-t |k|^2 / rho_abs^2)` and
/// `sigma(t) = sigma_min (sigma_max / sigma_min)^t`, `t_i = i / n_steps`.
pub fn make_schedule(
    ny: usize,
    nx: usize,
    n_steps: usize,
    sigma_min: f64,
    sigma_max: f64,
    rho: f64,
) -> Result<DiffusionSchedule> {
    DiffusionSchedule::new(
        ny,
        nx,
        ScheduleParams {
            n_steps,
            sigma_min,
            sigma_max,
            rho,
        },
    )
}

impl DiffusionSchedule {
    pub fn new(ny: usize, nx: usize, params: ScheduleParams) -> Result<Self> {
        if params.n_steps == 0 {
            return arg_err("schedule needs at least one step");
        }
        if !(params.sigma_min > 0.0 && params.sigma_min < params.sigma_max && params.sigma_max.is_finite()) {
            return arg_err(format!(
                "need 0 < sigma_min < sigma_max, got {} and {}",
                params.sigma_min, params.sigma_max
            ));
        }
        if !(params.rho > 0.0 && params.rho.is_finite()) {
            return arg_err(format!("rho must be positive, got {}", params.rho));
        }
        if ny == 0 || nx == 0 {
            return arg_err("schedule grid must be non-empty");
        }
        let rho_abs = params.rho * 0.5;
        let mut base = Vec::with_capacity(ny * nx);
        for y in 0..ny {
            let ky = (y as f64 - (ny / 2) as f64) / ny as f64;
            for x in 0..nx {
                let kx = (x as f64 - (nx / 2) as f64) / nx as f64;
                base.push((ky * ky + kx * kx) / (rho_abs * rho_abs));
            }
        }
        Ok(DiffusionSchedule { params, ny, nx, base })
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn n_steps(&self) -> usize {
        self.params.n_steps
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    /// Time of grid index `i`, `0 <= i <= n_steps`.
    pub fn t(&self, i: usize) -> f64 {
        i as f64 / self.params.n_steps as f64
    }

    /// Grid times listed from `t_N = 1` down to `t_0 = 0`.
    pub fn t_grid(&self) -> Vec<f64> {
        (0..=self.params.n_steps).rev().map(|i| self.t(i)).collect()
    }

    pub fn sigma_at(&self, t: f64) -> f64 {
        let p = &self.params;
        p.sigma_min * (p.sigma_max / p.sigma_min).powf(t)
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.sigma_at(self.t(i))
    }

    pub fn atten_at(&self, t: f64) -> RealArray {
        let data = if t == 0.0 {
            vec![1.0; self.base.len()]
        } else {
            self.base.iter().map(|b| (-t * b).exp()).collect()
        };
        RealArray::new(vec![self.ny, self.nx], data).expect("grid size matches")
    }

    pub fn atten(&self, i: usize) -> RealArray {
        self.atten_at(self.t(i))
    }

    /// Hex SHA-256 of the canonical parameter record, used to tie trained
    /// models to the schedule they were trained with.
    pub fn hash(&self) -> String {
        let record = serde_json::json!({
            "ny": self.ny,
            "nx": self.nx,
            "n_steps": self.params.n_steps,
            "sigma_min": self.params.sigma_min,
            "sigma_max": self.params.sigma_max,
            "rho": self.params.rho,
        });
        hex::encode(Sha256::digest(record.to_string().as_bytes()))
    }

    pub(crate) fn check_grid(&self, z: &ComplexArray) -> Result<()> {
        let (_, ny, nx) = z.plane_dims()?;
        if (ny, nx) != (self.ny, self.nx) {
            return crate::error::shape_err(format!(
                "schedule grid is {}x{}, data is {ny}x{nx}",
                self.ny, self.nx
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_values() {
        let s = make_schedule(16, 16, 10, 0.01, 1.0, 0.25).unwrap();
        assert!(s.atten(0).data().iter().all(|&a| a == 1.0));
        for i in 0..=10 {
            assert_eq!(s.atten(i).data()[8 * 16 + 8], 1.0);
        }
        // row 0 sits at ky = -0.5: 0.25 / 0.125^2 = 16
        let edge = s.atten(10).data()[8];
        assert!((edge - (-16.0f64).exp()).abs() < 1e-18);
        assert!((s.sigma(0) - 0.01).abs() < 1e-15);
        assert!((s.sigma(10) - 1.0).abs() < 1e-12);
        assert_eq!(s.t_grid().first(), Some(&1.0));
        assert_eq!(s.t_grid().last(), Some(&0.0));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_schedule(8, 8, 0, 0.01, 1.0, 0.25).is_err());
        assert!(make_schedule(8, 8, 5, 0.0, 1.0, 0.25).is_err());
        assert!(make_schedule(8, 8, 5, 1.0, 0.5, 0.25).is_err());
        assert!(make_schedule(8, 8, 5, 0.01, 1.0, 0.0).is_err());
    }
}
