//! Slice-GRAPPA: slice-specific kernels mapping collapsed SMS k-space to the
//! (CAIPIRINHA-shifted) k-space of each individual slice.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::kernel::{center_samples, patch_matrix, weights_from_column, KernelGeometry, KernelOperator};
use super::lsq;
use crate::error::shape_err;
use crate::sim::{acs_start, caipi_shift_block, collapse_block, AcquisitionSpec};
use crate::tensor::ComplexArray;
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct SliceGrappaKernels {
    pub mb: usize,
    pub nc: usize,
    pub geometry: KernelGeometry,
    /// One `[nc, kh, kw]` set per `(slice, target coil)`, slice-major.
    pub weights: Vec<ComplexArray>,
    /// Absolute Tikhonov weight used at fit time.
    pub tikhonov: f64,
    /// Relative calibration residual per weight set.
    pub fit_residual: Vec<f64>,
}

impl SliceGrappaKernels {
    pub fn weight(&self, slice: usize, coil: usize) -> &ComplexArray {
        &self.weights[slice * self.nc + coil]
    }

    pub fn operator(&self, ny: usize, nx: usize) -> Result<SliceGrappaOperator> {
        Ok(SliceGrappaOperator {
            mb: self.mb,
            nc: self.nc,
            op: KernelOperator::new(&self.weights, &self.geometry, ny, nx)?,
        })
    }
}

/// Kernels prepared for repeated application on one grid.
#[derive(Clone, Debug)]
pub struct SliceGrappaOperator {
    mb: usize,
    nc: usize,
    op: KernelOperator,
}

impl SliceGrappaOperator {
    /// `[nc, ny, nx]` collapsed k-space to `[mb, nc, ny, nx]` shifted slices.
    pub fn apply(&self, sms_ksp: &ComplexArray) -> Result<ComplexArray> {
        if sms_ksp.ndim() != 3 || sms_ksp.shape()[0] != self.nc {
            return shape_err(format!(
                "slice-GRAPPA kernels expect {} coils, data has shape {:?}",
                self.nc,
                sms_ksp.shape()
            ));
        }
        let (ny, nx) = (sms_ksp.shape()[1], sms_ksp.shape()[2]);
        self.op.apply(sms_ksp)?.reshape(&[self.mb, self.nc, ny, nx])
    }
}

/// Fits kernels on per-slice ACS blocks `[mb, nc, acs, nx]` (unshifted,
/// taken from the centered rows of a `full_ny`-line grid).
///
/// Sources are patches of the collapsed calibration data (each slice's ACS
/// CAIPIRINHA-shifted, then summed); targets are the center samples of the
/// shifted ACS of each slice and coil. All `mb * nc` fits share one Gram
/// matrix. `tikhonov` is relative to the mean diagonal of `A^H A`.
pub fn calibrate_slice_grappa(
    acs_per_slice: &ComplexArray,
    spec: &AcquisitionSpec,
    full_ny: usize,
    geometry: KernelGeometry,
    tikhonov: f64,
) -> Result<SliceGrappaKernels> {
    spec.validate()?;
    if acs_per_slice.ndim() != 4 || acs_per_slice.shape()[0] != spec.mb {
        return shape_err(format!(
            "ACS must be [mb={}, nc, acs, nx], got {:?}",
            spec.mb,
            acs_per_slice.shape()
        ));
    }
    let nc = acs_per_slice.shape()[1];
    let acs_rows = acs_per_slice.shape()[2];
    let offset = acs_start(full_ny, acs_rows);
    let source = collapse_block(acs_per_slice, spec, full_ny, offset)?;
    let patches = patch_matrix(&source, &geometry)?;
    let mut targets = Vec::with_capacity(spec.mb * nc);
    for s in 0..spec.mb {
        let shifted = caipi_shift_block(&acs_per_slice.slab(s)?, s, spec, false, full_ny, offset)?;
        for c in 0..nc {
            targets.push(center_samples(&shifted, c, &patches.centers));
        }
    }
    let b = DMatrix::from_fn(patches.centers.len(), targets.len(), |r, j| targets[j][r]);
    let fit = lsq::solve(&patches.matrix, &b, tikhonov);
    let fit_residual = lsq::relative_residuals(&patches.matrix, &fit.weights, &b);
    let weights = (0..targets.len())
        .map(|j| weights_from_column(fit.weights.column(j).as_slice(), nc, &geometry))
        .collect();
    Ok(SliceGrappaKernels {
        mb: spec.mb,
        nc,
        geometry,
        weights,
        tikhonov: fit.lambda,
        fit_residual,
    })
}

/// Separates collapsed k-space `[nc, ny, nx]` into `[mb, nc, ny, nx]`
/// (each slice still carries its CAIPIRINHA shift).
pub fn apply_slice_grappa(kernels: &SliceGrappaKernels, sms_ksp: &ComplexArray) -> Result<ComplexArray> {
    let (_, ny, nx) = sms_ksp.plane_dims()?;
    kernels.operator(ny, nx)?.apply(sms_ksp)
}

/// Undoes the per-slice CAIPIRINHA shift of separated slices `[mb, nc, ny, nx]`.
pub fn unshift_slices(slices: &ComplexArray, spec: &AcquisitionSpec) -> Result<ComplexArray> {
    let items: Vec<ComplexArray> = (0..spec.mb)
        .into_par_iter()
        .map(|s| crate::sim::caipi_shift(&slices.slab(s)?, s, spec, true))
        .collect::<Result<_>>()?;
    ComplexArray::stack(&items)
}
