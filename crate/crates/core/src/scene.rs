//! Reproducible synthetic SMS scenes and training sets built from the
//! phantom and coil simulators.

use serde::{Deserialize, Serialize};

use crate::coils::CoilSensitivities;
use crate::error::arg_err;
use crate::rng::child_seed;
use crate::sim::{acquire, make_phantom, simulate_coils_at, simulate_slice_coils, Acquisition, AcquisitionSpec};
use crate::tensor::ComplexArray;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub ny: usize,
    pub nx: usize,
    pub nc: usize,
    pub mb: usize,
    /// Shift per slice step in units of FOV.
    pub caipi_fraction: f64,
    pub accel: usize,
    pub acs_lines: usize,
    /// Standard deviation of complex k-space noise on the collapsed data.
    pub noise_sigma: f64,
    /// Half-extent of the slice stack in z (FOV units), which varies the coil
    /// maps from slice to slice.
    pub slice_gap: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            ny: 320,
            nx: 320,
            nc: 8,
            mb: 3,
            caipi_fraction: 1.0 / 3.0,
            accel: 3,
            acs_lines: 32,
            noise_sigma: 0.0,
            slice_gap: 0.15,
        }
    }
}

impl SceneConfig {
    pub fn acquisition_spec(&self, seed: u64) -> AcquisitionSpec {
        AcquisitionSpec {
            mb: self.mb,
            caipi_fraction: self.caipi_fraction,
            accel: self.accel,
            acs_lines: self.acs_lines,
            noise_sigma: self.noise_sigma,
            seed: child_seed(seed, 2),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub config: SceneConfig,
    pub spec: AcquisitionSpec,
    /// Ground-truth slices `[mb, ny, nx]`.
    pub truth: ComplexArray,
    pub maps: Vec<CoilSensitivities>,
    pub acquisition: Acquisition,
}

/// Phantoms, coils and noise all derive from `seed` through separate streams.
pub fn build_scene(cfg: &SceneConfig, seed: u64) -> Result<Scene> {
    let truth = make_phantom(cfg.ny, cfg.nx, cfg.mb, child_seed(seed, 0))?;
    let maps = simulate_slice_coils(cfg.ny, cfg.nx, cfg.nc, cfg.mb, child_seed(seed, 1), cfg.slice_gap)?;
    let spec = cfg.acquisition_spec(seed);
    let acquisition = acquire(&truth, &maps, &spec)?;
    Ok(Scene {
        config: cfg.clone(),
        spec,
        truth,
        maps,
        acquisition,
    })
}

/// Single-slice multicoil k-space items for score training, with the same
/// coil array as [`build_scene`] for `seed` but fresh phantoms and slice
/// positions drawn across the stack.
pub fn training_set(
    cfg: &SceneConfig,
    n_items: usize,
    seed: u64,
) -> Result<(Vec<ComplexArray>, Vec<CoilSensitivities>)> {
    if n_items == 0 {
        return arg_err("training set needs at least one item");
    }
    let phantoms = make_phantom(cfg.ny, cfg.nx, n_items, child_seed(seed, 3))?;
    let mut data = Vec::with_capacity(n_items);
    let mut maps = Vec::with_capacity(n_items);
    for i in 0..n_items {
        let frac = if n_items == 1 { 0.5 } else { i as f64 / (n_items - 1) as f64 };
        let z = cfg.slice_gap * (2.0 * frac - 1.0);
        let m = simulate_coils_at(cfg.ny, cfg.nx, cfg.nc, child_seed(seed, 1), z)?;
        data.push(m.expand_to_kspace(&phantoms.slab(i)?)?);
        maps.push(m);
    }
    Ok((data, maps))
}
