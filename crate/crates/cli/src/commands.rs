use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use msmae::data::{synth_dataset, synth_sample};
use msmae::model::{Classifier, MaskedAutoencoder};
use msmae::multiscale::{multiscale_forward, MultiscaleHead};
use msmae::rng::{stream_at, Stream};
use msmae::train::{ablation_compare, evaluate, finetune, AblationRow, Pretrainer};
use msmae::{ParamStore, Tensor};

use crate::checkpoint::{Checkpoint, CheckpointKind, CheckpointMeta};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::ppm::write_ppm;

pub type CliResult<T> = Result<T, CliError>;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub levels: Option<usize>,
    pub alpha: Option<[f64; 3]>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: RunConfig) -> RunConfig {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(l) = self.levels {
            cfg.levels = l;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        cfg
    }
}

pub fn resolve_config(path: Option<&Path>, overrides: &Overrides) -> CliResult<RunConfig> {
    let base = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = overrides.apply(base);
    cfg.validate()?;
    Ok(cfg)
}

fn pretrain_meta(cfg: &RunConfig) -> CheckpointMeta {
    CheckpointMeta {
        kind: CheckpointKind::Pretrain,
        model: cfg.model(),
        levels: cfg.levels,
        pooling: "cls_token".into(),
        n_classes: None,
        task: None,
        run: cfg.clone(),
    }
}

/// Writes `pretrain.log`, periodic `epoch_NNN.ckpt` files and `final.ckpt`
/// under `out`; returns the final checkpoint path.
pub fn cmd_pretrain(cfg: &RunConfig, out: &Path, echo: &mut dyn Write) -> CliResult<PathBuf> {
    std::fs::create_dir_all(out)?;
    let data = synth_dataset(&cfg.pretrain_data())?;
    let model = MaskedAutoencoder::new(cfg.model(), cfg.seed)?;
    let head = MultiscaleHead::new(cfg.model().channels(), cfg.feat_ch, cfg.levels, cfg.seed)?;
    let mut trainer = Pretrainer::new(&model, &head, cfg.pretrain_config())?;
    let mut log = File::create(out.join("pretrain.log"))?;
    let meta = pretrain_meta(cfg);
    for _ in 0..cfg.pretrain_epochs {
        let losses = trainer.run_epoch(&data)?;
        let line = losses.log_line();
        writeln!(log, "{line}")?;
        writeln!(echo, "{line}")?;
        let done = trainer.epochs_done();
        if cfg.save_interval > 0 && done % cfg.save_interval == 0 {
            Checkpoint::from_stores(meta.clone(), done as u32, cfg.seed, &[&model.params, &head.params])
                .save(&out.join(format!("epoch_{done:03}.ckpt")))?;
        }
    }
    let path = out.join("final.ckpt");
    Checkpoint::from_stores(meta, cfg.pretrain_epochs as u32, cfg.seed, &[&model.params, &head.params]).save(&path)?;
    Ok(path)
}

/// Names the classifier takes from a pre-trained checkpoint.
fn load_pretrained(clf: &Classifier, ckpt: &Checkpoint) -> CliResult<()> {
    let fresh = ["cls_token", "classifier.head.weight", "classifier.head.bias"];
    let missing: Vec<String> = clf
        .params
        .names()
        .filter(|n| !fresh.contains(n) && !ckpt.tensors.iter().any(|(m, _, _)| m == n))
        .map(str::to_string)
        .collect();
    let source: Vec<_> = ckpt.tensors.iter().filter(|(n, _, _)| !fresh.contains(&n.as_str())).cloned().collect();
    clf.params.load_matching(&source)?;
    if !missing.is_empty() {
        return Err(msmae::Error::CheckpointMismatch { names: missing }.into());
    }
    Ok(())
}

/// Finetunes from `checkpoint` (or from scratch) and writes
/// `finetune.log` and `finetune.ckpt`.
pub fn cmd_finetune(cfg: &RunConfig, checkpoint: Option<&Path>, out: &Path, echo: &mut dyn Write) -> CliResult<PathBuf> {
    std::fs::create_dir_all(out)?;
    let clf = Classifier::new(cfg.model(), cfg.n_classes, cfg.seed)?;
    if let Some(path) = checkpoint {
        load_pretrained(&clf, &Checkpoint::load(path)?)?;
    }
    let train = synth_dataset(&cfg.train_data())?;
    let val = synth_dataset(&cfg.val_data())?;
    let mut log = File::create(out.join("finetune.log"))?;
    let mut io_err = None;
    let report = finetune(&clf, &train, &val, &cfg.finetune_config(), cfg.task, |e| {
        let line = e.log_line(cfg.task);
        if let Err(err) = writeln!(log, "{line}").and_then(|_| writeln!(echo, "{line}")) {
            io_err.get_or_insert(err);
        }
    })?;
    if let Some(err) = io_err {
        return Err(err.into());
    }
    writeln!(
        echo,
        "best {}={} epoch={}",
        cfg.task.metric_name(),
        report.best_metric,
        report.best_epoch
    )?;
    let meta = CheckpointMeta {
        kind: CheckpointKind::Finetune,
        model: cfg.model(),
        levels: 1,
        pooling: "cls_token".into(),
        n_classes: Some(cfg.n_classes),
        task: Some(cfg.task),
        run: cfg.clone(),
    };
    let path = out.join("finetune.ckpt");
    Checkpoint::from_stores(meta, cfg.finetune_epochs as u32, cfg.seed, &[&clf.params]).save(&path)?;
    Ok(path)
}

/// Scores a finetuned checkpoint on the validation split described by
/// `cfg` (the checkpoint's own run config when `None`).
pub fn cmd_eval(checkpoint: &Path, cfg: Option<&RunConfig>, echo: &mut dyn Write) -> CliResult<f64> {
    let ckpt = Checkpoint::load(checkpoint)?;
    if ckpt.meta.kind != CheckpointKind::Finetune {
        return Err(CliError::Config("eval needs a finetuned checkpoint".into()));
    }
    let run = cfg.unwrap_or(&ckpt.meta.run);
    let n_classes = ckpt.meta.n_classes.unwrap_or(run.n_classes);
    let task = ckpt.meta.task.unwrap_or(run.task);
    let clf = Classifier::new(ckpt.meta.model.clone(), n_classes, ckpt.seed)?;
    ckpt.restore(&clf.params)?;
    let val = synth_dataset(&run.val_data())?;
    let metric = evaluate(&clf, &val, task)?;
    writeln!(echo, "{}={metric}", task.metric_name())?;
    Ok(metric)
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub files: Vec<PathBuf>,
    /// Mean absolute error per available scale, base first.
    pub l1: Vec<f64>,
}

fn mean_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data().iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.numel() as f64
}

/// Writes the original, masked input and every reconstruction scale of
/// pre-training sample `index` as PPM files.
pub fn cmd_reconstruct(checkpoint: &Path, index: usize, out: &Path, echo: &mut dyn Write) -> CliResult<Reconstruction> {
    let ckpt = Checkpoint::load(checkpoint)?;
    if ckpt.meta.kind != CheckpointKind::Pretrain {
        return Err(CliError::Config("reconstruct needs a pre-training checkpoint".into()));
    }
    let run = &ckpt.meta.run;
    if index >= run.pretrain_samples {
        return Err(CliError::Config(format!(
            "sample index {index} out of range (dataset has {})",
            run.pretrain_samples
        )));
    }
    let cfg = ckpt.meta.model.clone();
    let model = MaskedAutoencoder::new(cfg.clone(), ckpt.seed)?;
    let head = MultiscaleHead::new(cfg.channels(), cfg.feat_ch, ckpt.meta.levels, ckpt.seed)?;
    let mut all = ParamStore::new();
    all.extend(&model.params)?;
    all.extend(&head.params)?;
    ckpt.restore(&all)?;

    let sample = synth_sample(&run.pretrain_data(), index)?;
    let pyr = &sample.pyramid;
    let mut rng = stream_at(ckpt.seed, ((Stream::Mask as u64) << 32) | index as u64);
    let plan = model.sample_mask(&mut rng)?;
    let f = model.forward(&pyr.base, &plan)?;
    let levels = ckpt.meta.levels.max(1);
    let out_ms = multiscale_forward(&head, &f, pyr, run.pretrain_config().weights, levels, false)?;

    let bands = run.band_specs();
    let mut rgb: Vec<usize> = cfg.grouping.channel_groups()[0].iter().take(3).copied().collect();
    if rgb.len() < 3 {
        return Err(CliError::Config("first channel group has fewer than three bands".into()));
    }
    rgb.sort_by(|&a, &b| bands[b].wavelength_nm.total_cmp(&bands[a].wavelength_nm));
    let rgb = [rgb[0], rgb[1], rgb[2]];

    std::fs::create_dir_all(out)?;
    let keep = Tensor::ones(pyr.base.shape()).sub(&model.pixel_mask(&plan)?)?;
    let mut images = vec![
        ("original.ppm", pyr.base.clone()),
        ("masked.ppm", pyr.base.mul(&keep)?),
        ("recon_1x.ppm", f.detach()),
    ];
    let mut l1 = vec![mean_abs_diff(&f, &pyr.base)];
    if let Some(f_hat) = &out_ms.f_hat {
        images.push(("recon_2x.ppm", f_hat.detach()));
        l1.push(mean_abs_diff(f_hat, &pyr.mid));
    }
    if let (Some(f_bar), Some(top)) = (&out_ms.f_bar, &pyr.top) {
        images.push(("recon_4x.ppm", f_bar.detach()));
        l1.push(mean_abs_diff(f_bar, top));
    }
    let mut files = Vec::new();
    for (name, img) in images {
        let path = out.join(name);
        write_ppm(&path, &img, rgb)?;
        files.push(path);
    }
    for (i, v) in l1.iter().enumerate() {
        writeln!(echo, "scale={} l1={v}", 1 << i)?;
    }
    Ok(Reconstruction { files, l1 })
}

/// Runs the scale ablation and prints one row per scale count.
pub fn cmd_ablate(
    cfg: &RunConfig,
    scales: &[usize],
    seeds: usize,
    threads: Option<usize>,
    echo: &mut dyn Write,
) -> CliResult<Vec<AblationRow>> {
    if scales.iter().any(|s| !(1..=3).contains(s)) {
        return Err(CliError::Config(format!("scales must be 1, 2 or 3 (got {scales:?})")));
    }
    if seeds == 0 {
        return Err(CliError::Config("need at least one seed".into()));
    }
    let seed_list: Vec<u64> = (0..seeds as u64).map(|i| cfg.seed + i).collect();
    let rows = ablation_compare(&cfg.ablation_setup(), scales, &seed_list, threads)?;
    for row in &rows {
        writeln!(echo, "{}", row.line())?;
    }
    Ok(rows)
}
