use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::{mean_average_precision, top1_accuracy};
use super::optim::AdamW;
use super::pretrain::steps_per_epoch;
use super::schedule::cosine_lr;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    SingleLabel,
    MultiLabel,
}

impl Task {
    pub fn metric_name(self) -> &'static str {
        match self {
            Task::SingleLabel => "top1",
            Task::MultiLabel => "map",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    /// Top-1 accuracy or mAP on the validation split.
    pub metric: f64,
}

impl FinetuneEpoch {
    pub fn log_line(&self, task: Task) -> String {
        format!(
            "epoch={} split=train loss={}\nepoch={} {}={}",
            self.epoch,
            self.train_loss,
            self.epoch,
            task.metric_name(),
            self.metric
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct FinetuneReport {
    pub epochs: Vec<FinetuneEpoch>,
    pub best_metric: f64,
    /// First epoch reaching `best_metric`.
    pub best_epoch: usize,
}

fn sample_loss(logits: &Tensor, sample: &Sample, task: Task) -> Result<Tensor> {
    match task {
        Task::SingleLabel => logits.cross_entropy(&[sample.image.label]),
        Task::MultiLabel => logits.multilabel_soft_margin(&sample.image.targets),
    }
}

/// Raw logits for every sample.
pub fn predict(clf: &Classifier, data: &[Sample]) -> Result<Vec<Vec<f64>>> {
    data.iter().map(|s| Ok(clf.forward(&s.pyramid.base)?.to_vec())).collect()
}

pub fn evaluate(clf: &Classifier, data: &[Sample], task: Task) -> Result<f64> {
    let scores = predict(clf, data)?;
    match task {
        Task::SingleLabel => {
            let labels: Vec<usize> = data.iter().map(|s| s.image.label).collect();
            Ok(top1_accuracy(&scores, &labels))
        }
        Task::MultiLabel => {
            let targets: Vec<Vec<f64>> = data.iter().map(|s| s.image.targets.clone()).collect();
            mean_average_precision(&scores, &targets)
        }
    }
}

/// End-to-end training of every classifier parameter, evaluated on `val`
/// after each epoch.
pub fn finetune(
    clf: &Classifier,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    task: Task,
    mut on_epoch: impl FnMut(&FinetuneEpoch),
) -> Result<FinetuneReport> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("finetuning needs non-empty train and validation sets".into()));
    }
    let mut opt = AdamW::new(&[&clf.params]);
    let mut order_rng = stream(cfg.seed, Stream::Order);
    let spe = steps_per_epoch(train.len(), cfg.batch_size);
    let (total_steps, warmup_steps) = (spe * cfg.total_epochs, spe * cfg.warmup_epochs);
    let mut report = FinetuneReport {
        best_metric: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut step = 0;
    for epoch in 0..cfg.total_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            opt.zero_grad();
            let inv = 1.0 / batch.len() as f64;
            for &i in batch {
                let loss = sample_loss(&clf.forward(&train[i].pyramid.base)?, &train[i], task)?;
                let value = loss.item();
                if !value.is_finite() {
                    return Err(Error::NonFinite {
                        epoch,
                        batch: batch_idx,
                        parts: format!("loss={value}"),
                    });
                }
                loss.scale(inv).backward()?;
                loss_sum += value;
            }
            let lr = cosine_lr(step, warmup_steps, total_steps, cfg.base_lr, cfg.min_lr);
            opt.step(lr, cfg.weight_decay, cfg.betas, cfg.eps)?;
            step += 1;
        }
        let record = FinetuneEpoch {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            metric: evaluate(clf, val, task)?,
        };
        if record.metric > report.best_metric {
            report.best_metric = record.metric;
            report.best_epoch = epoch;
        }
        on_epoch(&record);
        report.epochs.push(record);
    }
    Ok(report)
}
