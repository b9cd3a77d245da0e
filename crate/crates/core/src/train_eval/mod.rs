//! Training loops, metrics, subject voting and ablations.

pub mod ablation;
pub mod config;
pub mod loops;
pub mod metrics;
pub mod probe;

pub use crate::optim::apply_swa;
pub use crate::signal::FrequencyBand;
pub use ablation::{band_ablation, band_limit, mask_ablation, region_ablation, ChannelRegion};
pub use config::{Phase, TrainConfig};
pub use loops::{
    check_subject_independent, embed, evaluate, evaluate_split, finetune, predict, predict_windows, pretrain,
    pretrain_model, subjects_in, DatasetReport, EpochRecord, FinetuneOutcome, MetricsReport, PretrainOutcome,
    SplitCorpus,
};
pub use metrics::{vote, vote_subjects, Confusion, SamplePrediction, SubjectMetrics, SubjectVote, POSITIVE_CLASS};
pub use probe::{LinearProbe, ProbeConfig};
