//! Every chapter of the guide is compiled and run by `cargo test --doc`, one
//! module per chapter so a failing listing points at its file.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/acquisition.md")]
pub mod acquisition {}
#[doc = include_str!("src/calibration.md")]
pub mod calibration {}
#[doc = include_str!("src/baselines.md")]
pub mod baselines {}
#[doc = include_str!("src/diffusion.md")]
pub mod diffusion {}
#[doc = include_str!("src/sampler.md")]
pub mod sampler {}
#[doc = include_str!("src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
#[doc = include_str!("../README.md")]
pub mod readme {}
