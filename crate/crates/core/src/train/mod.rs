//! Optimisation, schedules, metrics and the pre-train / finetune loops.

mod ablation;
mod config;
mod finetune;
mod metrics;
mod optim;
mod pretrain;
mod schedule;

pub use ablation::{ablation_compare, run_once, AblationRow, AblationSetup, RunSummary};
pub use config::{default_warmup, TrainConfig};
pub use finetune::{evaluate, finetune, predict, FinetuneEpoch, FinetuneReport, Task};
pub use metrics::{argmax, average_precision, mean_average_precision, top1_accuracy};
pub use optim::{adamw_update, AdamW, AdamWHyper};
pub use pretrain::{pretrain, steps_per_epoch, EpochLosses, PretrainReport, Pretrainer};
pub use schedule::cosine_lr;
