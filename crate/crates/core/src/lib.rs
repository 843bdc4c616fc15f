//! Simultaneous multi-slice (SMS) MRI reconstruction.
//!
//! The crate simulates multiband acquisitions, calibrates Slice-GRAPPA and
//! SPIRiT kernels, runs classical baselines, and reconstructs SMS data with a
//! k-space heat-diffusion sampler whose data-consistency step re-separates
//! slices through Slice-GRAPPA.

pub mod calib;
pub mod coils;
pub mod diffusion;
pub mod error;
pub mod fft;
pub mod io;
pub mod metrics;
pub mod recon;
pub mod rng;
pub mod sampler;
pub mod scene;
pub mod sim;
pub mod tensor;

pub use coils::CoilSensitivities;
pub use error::{Error, Result};
pub use tensor::{ComplexArray, RealArray, C64};
