use rayon::prelude::*;

use super::config::TrainConfig;
use super::finetune::{finetune, Task};
use super::pretrain::pretrain;
use crate::data::{synth_dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::model::{Classifier, MaskedAutoencoder, ModelConfig};
use crate::multiscale::MultiscaleHead;

/// Everything one ablation run needs besides its scale count and seed.
#[derive(Debug, Clone)]
pub struct AblationSetup {
    pub model: ModelConfig,
    pub pretrain_data: SynthConfig,
    pub train_data: SynthConfig,
    pub val_data: SynthConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub task: Task,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub scales: usize,
    pub seed: u64,
    pub best_metric: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub scales: usize,
    /// Seed-averaged best finetune metric.
    pub top1: f64,
    /// Seed-averaged epoch of the best metric.
    pub best_epoch: f64,
    pub runs: Vec<RunSummary>,
}

impl AblationRow {
    pub fn line(&self) -> String {
        format!("scales={} top1={} best_epoch={}", self.scales, self.top1, self.best_epoch)
    }
}

/// Pre-trains with `scales` levels, then finetunes from the result.
pub fn run_once(setup: &AblationSetup, scales: usize, seed: u64) -> Result<RunSummary> {
    let pre_data = synth_dataset(&setup.pretrain_data)?;
    let train = synth_dataset(&setup.train_data)?;
    let val = synth_dataset(&setup.val_data)?;
    let model = MaskedAutoencoder::new(setup.model.clone(), seed)?;
    let head = MultiscaleHead::new(setup.model.channels(), setup.model.feat_ch, scales, seed)?;
    let pre_cfg = TrainConfig {
        levels: scales,
        seed,
        ..setup.pretrain.clone()
    };
    pretrain(&model, &head, &pre_data, &pre_cfg, |_| {})?;
    let n_classes = setup.train_data.n_classes;
    let clf = Classifier::new(setup.model.clone(), n_classes, seed)?;
    clf.load_backbone(&model.params)?;
    let ft_cfg = TrainConfig {
        seed,
        ..setup.finetune.clone()
    };
    let report = finetune(&clf, &train, &val, &ft_cfg, setup.task, |_| {})?;
    Ok(RunSummary {
        scales,
        seed,
        best_metric: report.best_metric,
        best_epoch: report.best_epoch,
    })
}

/// One row per scale count, in the order given. Runs are independent and
/// execute on up to `threads` workers (all cores when `None`).
pub fn ablation_compare(
    setup: &AblationSetup,
    scales: &[usize],
    seeds: &[u64],
    threads: Option<usize>,
) -> Result<Vec<AblationRow>> {
    if scales.is_empty() || seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one scale count and one seed".into()));
    }
    let jobs: Vec<(usize, u64)> = scales.iter().flat_map(|&s| seeds.iter().map(move |&seed| (s, seed))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let runs: Vec<RunSummary> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, seed)| run_once(setup, s, seed))
            .collect::<Result<_>>()
    })?;
    Ok(scales
        .iter()
        .map(|&s| {
            let mine: Vec<RunSummary> = runs.iter().filter(|r| r.scales == s).copied().collect();
            let n = mine.len() as f64;
            AblationRow {
                scales: s,
                top1: mine.iter().map(|r| r.best_metric).sum::<f64>() / n,
                best_epoch: mine.iter().map(|r| r.best_epoch as f64).sum::<f64>() / n,
                runs: mine,
            }
        })
        .collect())
}
