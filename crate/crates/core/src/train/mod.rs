//! Loss, optimizer, augmentation, metrics and the training/evaluation loop.

mod adam;
mod augment;
mod loss;
mod metrics;
mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use augment::{prepare, AugmentConfig, Prepared};
pub use loss::{loss_multiscale, loss_ohkm, LossConfig, LossMode, LossOutput};
pub use metrics::{radial_errors, summarize, EvalReport, LandmarkStats, RadialError, DEFAULT_THRESHOLDS_MM};
pub use trainer::{
    decode_heatmaps, encode_targets, evaluate, evaluate_ensemble, output_scale, predict, predict_heatmaps,
    resample_to_stride, swap_from_pairs, train, DecodeOptions, EpochRecord, Prediction, TrainLog, TrainOptions,
};
