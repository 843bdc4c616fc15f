//! Classical baselines: SENSE unfolding, iterative SPIRiT and the
//! Slice-GRAPPA + SENSE pipeline.

use std::f64::consts::PI;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::calib::{unshift_slices, SliceGrappaKernels, SpiritKernel};
use crate::coils::CoilSensitivities;
use crate::error::{arg_err, shape_err, Error};
use crate::fft::ifft2c;
use crate::sim::{AcquisitionSpec, SamplingMask};
use crate::tensor::{ComplexArray, C64};
use crate::Result;

/// Singular values below this fraction of the largest are truncated.
pub const SENSE_SV_RATIO: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct SenseResult {
    pub image: ComplexArray,
    /// Pixel groups (or readout columns) whose system was ill-conditioned.
    pub flagged: usize,
}

/// SENSE reconstruction of uniformly undersampled multicoil k-space.
///
/// Only the uniform lattice (every `accel`-th line from line 0) is used;
/// anything on other lines is discarded. When `accel` divides `ny` the
/// aliasing is an exact `accel`-fold fold-over and each pixel group is solved
/// on its own. Otherwise the lattice is not periodic and each readout column
/// is solved as one system.
pub fn sense_unfold(ksp: &ComplexArray, maps: &CoilSensitivities, accel: usize) -> Result<SenseResult> {
    let (nc, ny, nx) = maps.dims();
    if ksp.shape() != [nc, ny, nx] {
        return shape_err(format!("SENSE data {:?} vs maps {:?}", ksp.shape(), maps.maps().shape()));
    }
    if accel == 0 || accel > ny {
        return arg_err(format!("acceleration {accel} outside 1..={ny}"));
    }
    let lattice: Vec<usize> = (0..ny).step_by(accel).collect();
    if ny % accel == 0 {
        unfold_groups(ksp, maps, accel, &lattice)
    } else {
        unfold_columns(ksp, maps, &lattice)
    }
}

/// Truncated pseudo-inverse solve; returns the solution and whether the
/// system was flagged as ill-conditioned.
fn pinv_solve(a: &DMatrix<C64>, b: &DMatrix<C64>) -> (DMatrix<C64>, bool) {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let flagged = smin <= smax / 1e8;
    let x = svd
        .solve(b, smax * SENSE_SV_RATIO)
        .expect("singular vectors were computed");
    (x, flagged)
}

/// Image-domain aliasing kernel of a line set along y:
/// `psf(d) = (1/ny) sum_{k in lines} exp(i 2 pi (k - ny/2) d / ny)`.
fn lattice_psf(lines: &[usize], ny: usize) -> Vec<C64> {
    let ck = (ny / 2) as f64;
    (0..ny)
        .map(|d| {
            lines
                .iter()
                .map(|&k| C64::from_polar(1.0, 2.0 * PI * (k as f64 - ck) * d as f64 / ny as f64))
                .sum::<C64>()
                / ny as f64
        })
        .collect()
}

fn keep_rows(ksp: &ComplexArray, rows: &[usize]) -> ComplexArray {
    let (_, ny, nx) = ksp.plane_dims().expect("validated");
    let mut on = vec![false; ny];
    rows.iter().for_each(|&r| on[r] = true);
    let mut out = ksp.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if !on[(i / nx) % ny] {
            *v = C64::new(0.0, 0.0);
        }
    }
    out
}

fn unfold_groups(
    ksp: &ComplexArray,
    maps: &CoilSensitivities,
    accel: usize,
    lattice: &[usize],
) -> Result<SenseResult> {
    let (nc, ny, nx) = maps.dims();
    let n = ny * nx;
    let aliased = ifft2c(&keep_rows(ksp, lattice))?;
    let psf = lattice_psf(lattice, ny);
    let fold = ny / accel;
    let s = maps.maps().data();
    let a = aliased.data();
    let results: Vec<(Vec<(usize, C64)>, bool)> = (0..fold * nx)
        .into_par_iter()
        .map(|g| {
            let (y0, x) = (g / nx, g % nx);
            let ys: Vec<usize> = (0..accel).map(|m| y0 + m * fold).collect();
            let cols: Vec<usize> = ys
                .iter()
                .cloned()
                .filter(|&y| (0..nc).any(|c| s[c * n + y * nx + x].norm_sqr() > 0.0))
                .collect();
            if cols.is_empty() {
                return (Vec::new(), false);
            }
            let e = DMatrix::from_fn(nc * accel, cols.len(), |r, j| {
                let (c, yi) = (r / accel, ys[r % accel]);
                let yj = cols[j];
                psf[(yi + ny - yj) % ny] * s[c * n + yj * nx + x]
            });
            let b = DMatrix::from_fn(nc * accel, 1, |r, _| {
                let (c, yi) = (r / accel, ys[r % accel]);
                a[c * n + yi * nx + x]
            });
            let (sol, flagged) = pinv_solve(&e, &b);
            (cols.iter().enumerate().map(|(j, &y)| (y * nx + x, sol[(j, 0)])).collect(), flagged)
        })
        .collect();
    collect_image(results, ny, nx)
}

fn unfold_columns(ksp: &ComplexArray, maps: &CoilSensitivities, lattice: &[usize]) -> Result<SenseResult> {
    let (nc, ny, nx) = maps.dims();
    let n = ny * nx;
    let aliased = ifft2c(&keep_rows(ksp, lattice))?;
    let (a, s) = (aliased.data(), maps.maps().data());
    let (cy, norm) = ((ny / 2) as f64, 1.0 / (ny as f64).sqrt());
    // centered 1-D DFT rows for the acquired lines only
    let dft: Vec<Vec<C64>> = lattice
        .iter()
        .map(|&k| {
            (0..ny)
                .map(|y| C64::from_polar(norm, -2.0 * PI * (k as f64 - cy) * (y as f64 - cy) / ny as f64))
                .collect()
        })
        .collect();
    let nk = lattice.len();
    let results: Vec<(Vec<(usize, C64)>, bool)> = (0..nx)
        .into_par_iter()
        .map(|x| {
            let cols: Vec<usize> = (0..ny)
                .filter(|&y| (0..nc).any(|c| s[c * n + y * nx + x].norm_sqr() > 0.0))
                .collect();
            if cols.is_empty() {
                return (Vec::new(), false);
            }
            let e = DMatrix::from_fn(nc * nk, cols.len(), |r, j| {
                let (c, ki) = (r / nk, r % nk);
                dft[ki][cols[j]] * s[c * n + cols[j] * nx + x]
            });
            let b = DMatrix::from_fn(nc * nk, 1, |r, _| {
                let (c, ki) = (r / nk, r % nk);
                (0..ny).map(|y| dft[ki][y] * a[c * n + y * nx + x]).sum::<C64>()
            });
            let (sol, flagged) = pinv_solve(&e, &b);
            (cols.iter().enumerate().map(|(j, &y)| (y * nx + x, sol[(j, 0)])).collect(), flagged)
        })
        .collect();
    collect_image(results, ny, nx)
}

fn collect_image(results: Vec<(Vec<(usize, C64)>, bool)>, ny: usize, nx: usize) -> Result<SenseResult> {
    let mut image = ComplexArray::zeros(&[ny, nx]);
    let mut flagged = 0;
    for (vals, f) in results {
        flagged += f as usize;
        for (p, v) in vals {
            image.data_mut()[p] = v;
        }
    }
    if flagged > 0 {
        warn!("SENSE: {flagged} ill-conditioned systems solved by truncated pseudo-inverse");
    }
    Ok(SenseResult { image, flagged })
}

pub const DEFAULT_SPIRIT_ITERS: usize = 100;
pub const DEFAULT_SPIRIT_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct SpiritOutput {
    pub ksp: ComplexArray,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the input could not be processed meaningfully (e.g. nothing acquired).
    pub warning: Option<String>,
}

/// Projected fixed-point SPIRiT: `x <- DC(G x)` where `G` applies the kernel
/// and `DC` restores the acquired rows of `ksp`. Stops after `iters`
/// iterations or once the relative update drops below `tol`.
pub fn spirit_recon(
    ksp: &ComplexArray,
    kernel: &SpiritKernel,
    mask: &SamplingMask,
    iters: usize,
    tol: f64,
) -> Result<SpiritOutput> {
    if ksp.ndim() != 3 || ksp.shape()[0] != kernel.nc || ksp.shape()[1] != mask.ny {
        return shape_err(format!(
            "SPIRiT: data {:?}, kernel for {} coils, mask of {} lines",
            ksp.shape(),
            kernel.nc,
            mask.ny
        ));
    }
    if mask.n_acquired() == 0 {
        return Ok(SpiritOutput {
            ksp: ksp.clone(),
            iterations: 0,
            converged: false,
            warning: Some("no acquired lines; returning input unchanged".into()),
        });
    }
    let (ny, nx) = (ksp.shape()[1], ksp.shape()[2]);
    let op = kernel.operator(ny, nx)?;
    let mut x = ksp.clone();
    if mask.n_acquired() == ny {
        return Ok(SpiritOutput {
            ksp: x,
            iterations: 0,
            converged: true,
            warning: None,
        });
    }
    let mut updates: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut it = 0;
    while it < iters {
        it += 1;
        let mut next = op.apply(&x)?;
        restore_rows(&mut next, ksp, mask);
        let upd = next.sub(&x)?.norm2();
        let rel = upd / next.norm2().max(f64::MIN_POSITIVE);
        if !next.all_finite() {
            return Err(Error::Divergence { iteration: it });
        }
        updates.push(upd);
        if updates.len() > 10 && upd > 10.0 * updates[updates.len() - 11] {
            return Err(Error::Divergence { iteration: it });
        }
        x = next;
        if rel < tol {
            converged = true;
            break;
        }
    }
    Ok(SpiritOutput {
        ksp: x,
        iterations: it,
        converged,
        warning: None,
    })
}

/// Copies the acquired rows of `measured` into `target`.
pub(crate) fn restore_rows(target: &mut ComplexArray, measured: &ComplexArray, mask: &SamplingMask) {
    let nx = *measured.shape().last().expect("validated");
    let ny = mask.ny;
    let m = measured.data();
    for (i, v) in target.data_mut().iter_mut().enumerate() {
        if mask.pattern[(i / nx) % ny] {
            *v = m[i];
        }
    }
}

/// Slice-GRAPPA separation, CAIPIRINHA unshift, then SENSE per slice.
/// Returns `[mb, ny, nx]` images.
pub fn sg_sense_pipeline(
    sms_ksp: &ComplexArray,
    kernels: &SliceGrappaKernels,
    maps_per_slice: &[CoilSensitivities],
    mask: &SamplingMask,
    spec: &AcquisitionSpec,
) -> Result<ComplexArray> {
    if maps_per_slice.len() != spec.mb || kernels.mb != spec.mb {
        return shape_err(format!(
            "pipeline needs {} map sets and MB-{} kernels",
            spec.mb, kernels.mb
        ));
    }
    let separated = unshift_slices(&crate::calib::apply_slice_grappa(kernels, sms_ksp)?, spec)?;
    let images: Vec<ComplexArray> = (0..spec.mb)
        .into_par_iter()
        .map(|s| Ok(sense_unfold(&separated.slab(s)?, &maps_per_slice[s], mask.accel)?.image))
        .collect::<Result<_>>()?;
    ComplexArray::stack(&images)
}
