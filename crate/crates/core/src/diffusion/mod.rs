//! Heat-diffusion prior over multicoil k-space: schedule, score models,
//! training, and the reverse-time updates.

mod network;
mod schedule;
mod score;
mod steps;
mod train;

pub use network::{ConvDenoiser, LayerShape};
pub use schedule::{make_schedule, DiffusionSchedule, ScheduleParams};
pub use score::{analytic_gaussian_score, tweedie_score, AnalyticGaussianScore, ScoreModel};
pub use steps::{
    corrector_step, corrector_update, forward_perturb, predictor_step, predictor_update, reverse_sample,
    ChainConfig,
};
pub(crate) use steps::run_correctors;
pub use train::{denoiser_loss, train_score, TrainConfig, TrainReport, TrainedScore};
