//! SPIRiT calibration: every sample of every coil predicted from its
//! neighbourhood across all coils, excluding the sample itself.

use nalgebra::DMatrix;

use super::kernel::{patch_matrix, KernelGeometry, KernelOperator};
use super::lsq;
use crate::error::shape_err;
use crate::tensor::{ComplexArray, C64};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct SpiritKernel {
    pub nc: usize,
    pub geometry: KernelGeometry,
    /// One `[nc, kh, kw]` set per target coil; the target's own center tap is 0.
    pub weights: Vec<ComplexArray>,
    pub tikhonov: f64,
    pub fit_residual: Vec<f64>,
}

impl SpiritKernel {
    pub fn operator(&self, ny: usize, nx: usize) -> Result<KernelOperator> {
        KernelOperator::new(&self.weights, &self.geometry, ny, nx)
    }
}

/// Fits a SPIRiT kernel on a fully sampled calibration block `[nc, acs, nx]`.
pub fn calibrate_spirit(
    acs: &ComplexArray,
    geometry: KernelGeometry,
    tikhonov: f64,
) -> Result<SpiritKernel> {
    if acs.ndim() != 3 {
        return shape_err(format!("SPIRiT ACS must be [nc, acs, nx], got {:?}", acs.shape()));
    }
    let nc = acs.shape()[0];
    let patches = patch_matrix(acs, &geometry)?;
    let a = &patches.matrix;
    let gram = a.ad_mul(a);
    let ncol = a.ncols();
    let mut weights = Vec::with_capacity(nc);
    let mut fit_residual = Vec::with_capacity(nc);
    let mut lambda = 0.0;
    for c in 0..nc {
        let skip = geometry.center_column(c);
        let keep: Vec<usize> = (0..ncol).filter(|&j| j != skip).collect();
        let g = DMatrix::from_fn(keep.len(), keep.len(), |i, j| gram[(keep[i], keep[j])]);
        let rhs = DMatrix::from_fn(keep.len(), 1, |i, _| gram[(keep[i], skip)]);
        let fit = lsq::solve_gram(&g, &rhs, tikhonov);
        lambda = fit.lambda;
        let sub = a.select_columns(&keep);
        let b = a.columns(skip, 1).into_owned();
        fit_residual.push(lsq::relative_residuals(&sub, &fit.weights, &b)[0]);
        let mut full = vec![C64::new(0.0, 0.0); ncol];
        for (i, &j) in keep.iter().enumerate() {
            full[j] = fit.weights[(i, 0)];
        }
        weights.push(ComplexArray::new(vec![nc, geometry.kh, geometry.kw], full)?);
    }
    Ok(SpiritKernel {
        nc,
        geometry,
        weights,
        tikhonov: lambda,
        fit_residual,
    })
}
