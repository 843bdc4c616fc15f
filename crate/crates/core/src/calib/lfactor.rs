use serde::{Deserialize, Serialize};

use super::slice_grappa::SliceGrappaKernels;
use crate::coils::CoilSensitivities;
use crate::error::shape_err;
use crate::fft::fft2c;
use crate::sim::{caipi_shift, AcquisitionSpec};
use crate::Result;
use crate::tensor::ComplexArray;

/// Slice-leakage matrix: entry `(i, j)` is the energy fraction of slice `j`
/// that the kernels place into reconstructed slice `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LFactorReport {
    pub mb: usize,
    /// Row-major `mb x mb`.
    pub matrix: Vec<f64>,
}

impl LFactorReport {
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.mb + j]
    }

    /// Each diagonal entry exceeds every off-diagonal entry of its row.
    pub fn row_diagonally_dominant(&self) -> bool {
        (0..self.mb).all(|i| (0..self.mb).all(|j| i == j || self.entry(i, i) > self.entry(i, j)))
    }
}

/// Encodes one probe slice at a time through the SMS model and measures
/// where the kernels send its energy.
pub fn leakage_lfactor(
    kernels: &SliceGrappaKernels,
    maps: &[CoilSensitivities],
    spec: &AcquisitionSpec,
    probe_images: &ComplexArray,
) -> Result<LFactorReport> {
    let mb = spec.mb;
    if probe_images.ndim() != 3 || probe_images.shape()[0] != mb || maps.len() != mb || kernels.mb != mb {
        return shape_err(format!(
            "L-factor needs {mb} probe images and map sets, got {:?} and {}",
            probe_images.shape(),
            maps.len()
        ));
    }
    let (ny, nx) = (probe_images.shape()[1], probe_images.shape()[2]);
    let op = kernels.operator(ny, nx)?;
    let mut matrix = vec![0.0; mb * mb];
    for j in 0..mb {
        let encoded = caipi_shift(&fft2c(&maps[j].expand(&probe_images.slab(j)?)?)?, j, spec, false)?;
        let energy = encoded.norm_sqr();
        let separated = op.apply(&encoded)?;
        for i in 0..mb {
            matrix[i * mb + j] = separated.slab(i)?.norm_sqr() / energy;
        }
    }
    Ok(LFactorReport { mb, matrix })
}
