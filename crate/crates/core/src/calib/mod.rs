//! Kernel and map estimation from ACS data.

mod kernel;
mod lfactor;
mod lsq;
mod sensitivity;
mod slice_grappa;
mod spirit;

pub use crate::coils::coil_project;
pub use kernel::{apply_kernels_direct, KernelGeometry, KernelOperator};
pub use lfactor::{leakage_lfactor, LFactorReport};
pub use sensitivity::{estimate_sensitivities, DEFAULT_RSS_THRESHOLD};
pub use slice_grappa::{
    apply_slice_grappa, calibrate_slice_grappa, unshift_slices, SliceGrappaKernels, SliceGrappaOperator,
};
pub use spirit::{calibrate_spirit, SpiritKernel};

/// Default relative Tikhonov weight for kernel fits.
pub const DEFAULT_TIKHONOV: f64 = 1e-6;
