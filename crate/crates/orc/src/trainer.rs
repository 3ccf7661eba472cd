//! The per-iteration teaching protocol and the experiment runner.
//!
//! One iteration runs, strictly in order: ranking forwards over the pool,
//! temporary-teacher selection and promotion, control weights and feedback
//! subset over the remaining students, intensive teaching of the pivot on the
//! mixed feedback, private teaching of each temporary teacher by the updated
//! pivot, group teaching of every student by the updated teacher group, and
//! demotion. Exactly one optimizer step reaches every participating network
//! per iteration; teachers are re-forwarded after their own update and serve
//! detached logits, so a network is never modified by a stage it serves as a
//! target in.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;

use crate::config::{AugmentationMode, DatasetKind, RunConfig, TrainingMode};
use crate::data::{self, BatchIterator, Dataset, Split};
use crate::error::{Error, Result};
use crate::losses::{
    self, LossWeights, SoftenConfig, TeachingStyle,
};
use crate::metrics::{self, MetricsRow};
use crate::nets::{self, NetSpec, Network, NetworkLadder};
use crate::rng;
use crate::roles::{self, FeedbackSubset, GroupState};
use crate::tensor::Tensor;

/// SGD with momentum and weight decay for one network:
/// `v ← m·v + (g + wd·θ); θ ← θ − lr·v`.
pub struct OptimizerState {
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    buffers: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(net: &Network, lr: f64, momentum: f64, weight_decay: f64) -> Result<OptimizerState> {
        if !lr.is_finite() || lr <= 0.0 {
            return Err(Error::config(format!("learning rate must be positive, got {lr}")));
        }
        Ok(OptimizerState {
            lr,
            momentum,
            weight_decay,
            buffers: net
                .parameters()
                .iter()
                .map(|(_, p)| vec![0.0; p.numel()])
                .collect(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, net: &Network) -> Result<()> {
        let params = net.parameters();
        if params.len() != self.buffers.len() {
            return Err(Error::state("optimizer bound to a different network"));
        }
        for ((_, p), buf) in params.iter().zip(&mut self.buffers) {
            let grad = p
                .grad()
                .ok_or_else(|| Error::state("sgd step with missing gradients"))?;
            p.with_data_mut(|theta| {
                for ((t, v), g) in theta.iter_mut().zip(buf.iter_mut()).zip(&grad) {
                    *v = self.momentum * *v + (g + self.weight_decay * *t);
                    *t -= self.lr * *v;
                }
            });
            p.zero_grad();
        }
        Ok(())
    }
}

/// Milestone decay: `lr(e) = base · γ^(#{milestones ≤ e})`.
#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub milestones: Vec<usize>,
    pub gamma: f64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, milestones: Vec<usize>, gamma: f64) -> Result<LrSchedule> {
        if !base_lr.is_finite() || base_lr <= 0.0 {
            return Err(Error::config(format!("base lr must be positive, got {base_lr}")));
        }
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::config(format!("gamma must be positive, got {gamma}")));
        }
        if milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("milestones must be strictly increasing"));
        }
        Ok(LrSchedule { base_lr, milestones, gamma })
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.milestones.iter().filter(|m| **m <= epoch).count() as i32;
        if decays == 0 {
            return self.base_lr;
        }
        // When 1/γ is an exact small integer (γ = 0.1 → 10), dividing by its
        // power keeps decimal schedules exact; multiplying by γ^n would
        // accumulate rounding.
        let recip = 1.0 / self.gamma;
        if recip.fract() == 0.0 && recip.abs() < 1e9 {
            self.base_lr / recip.powi(decays)
        } else {
            self.base_lr * self.gamma.powi(decays)
        }
    }

    /// The same schedule stretched by an integer factor (pivot pretraining
    /// runs for a multiple of the main epoch budget).
    pub fn stretched(&self, factor: usize) -> LrSchedule {
        LrSchedule {
            base_lr: self.base_lr,
            milestones: self.milestones.iter().map(|m| m * factor).collect(),
            gamma: self.gamma,
        }
    }
}

/// Top-1 accuracy over the full split; argmax ties resolve to the lowest
/// class index.
pub fn evaluate(net: &Network, dataset: &Dataset) -> Result<f64> {
    let n = dataset.len();
    let classes = dataset.num_classes();
    let chunk = 512.min(n);
    let mut correct = 0usize;
    let mut done = 0usize;
    while done < n {
        let take = chunk.min(n - done);
        let idx: Vec<usize> = (done..done + take).collect();
        let x = dataset.images.gather_rows(&idx)?;
        let logits = net.forward_detached(&x)?;
        let values = logits.values();
        let labels = dataset.labels.gather_rows(&idx)?.values();
        for i in 0..take {
            let row = &values[i * classes..(i + 1) * classes];
            let mut arg = 0usize;
            for (j, v) in row.iter().enumerate() {
                if *v > row[arg] {
                    arg = j;
                }
            }
            let truth = labels[i * classes..(i + 1) * classes]
                .iter()
                .position(|v| *v == 1.0);
            if truth == Some(arg) {
                correct += 1;
            }
        }
        done += take;
    }
    Ok(correct as f64 / n as f64)
}

/// Hyperparameters consumed by one iteration.
#[derive(Clone, Debug)]
pub struct OrcHyper {
    pub k: usize,
    pub soften: SoftenConfig,
    pub weights: LossWeights,
    pub alpha_mix: f64,
    pub style: TeachingStyle,
    pub augmentation: AugmentationMode,
}

/// Observability record of one iteration, one entry per stage output.
#[derive(Clone, Debug)]
pub struct IterationReport {
    pub iteration: u64,
    /// Ladder ids promoted to temporary teacher this iteration.
    pub selected: Vec<usize>,
    /// Mean ranking cross-entropy per ladder network (pivot first).
    pub mean_ce: Vec<f64>,
    /// `(student id, control weight)` over the post-promotion students.
    pub control_weights: Vec<(usize, f64)>,
    /// `(student id, feedback count)`; counts sum to the batch size.
    pub feedback_counts: Vec<(usize, usize)>,
    pub lambda: f64,
    pub pivot_loss: Option<f64>,
    pub temp_losses: Vec<(usize, f64)>,
    pub student_losses: Vec<(usize, f64)>,
    /// Ladder ids that received exactly one optimizer step.
    pub stepped: Vec<usize>,
    pub pivot_fp_after_update: u64,
    pub pivot_fp_after_group: u64,
    pub temp_fps_after_update: Vec<(usize, u64)>,
    pub temp_fps_after_group: Vec<(usize, u64)>,
}

fn finite_or_train_error(value: f64, stage: &str, iteration: u64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::train(format!(
            "non-finite loss during {stage} at iteration {iteration}"
        )))
    }
}

/// Runs one full teaching iteration over a mini-batch.
///
/// `opts` is indexed by ladder id. The incoming state must have an empty
/// temporary-teacher set; the returned state has one again.
pub fn orc_iteration(
    ladder: &mut NetworkLadder,
    state: &GroupState,
    batch_x: &Tensor,
    batch_y: &Tensor,
    opts: &mut [OptimizerState],
    hyper: &OrcHyper,
    mixup_rng: &mut ChaCha8Rng,
) -> Result<(GroupState, IterationReport)> {
    if !state.temp_teacher_ids().is_empty() {
        return Err(Error::state(
            "iteration entered with temporary teachers still promoted",
        ));
    }
    if opts.len() != ladder.len() {
        return Err(Error::state("one optimizer per ladder network required"));
    }
    let iteration = state.iteration();
    let batch_size = batch_x.shape()[0];
    let pool_ids: Vec<usize> = state.student_ids().to_vec();

    // 1. ranking forwards: per-instance and mean CE for every pool network,
    //    plus the pivot's for reporting.
    let mut per_instance: Vec<Vec<f64>> = Vec::with_capacity(pool_ids.len());
    let mut pool_mean_ce: Vec<f64> = Vec::with_capacity(pool_ids.len());
    for &id in &pool_ids {
        let logits = ladder.network(id).forward_detached(batch_x)?;
        let (per, mean) = losses::cross_entropy(&logits, batch_y)?;
        let mean = finite_or_train_error(mean.item()?, "ranking", iteration)?;
        per_instance.push(per.values());
        pool_mean_ce.push(mean);
    }
    let pivot_step1_logits = ladder.network(0).forward_detached(batch_x)?;
    let pivot_ce = losses::cross_entropy(&pivot_step1_logits, batch_y)?
        .1
        .item()?;
    let mut mean_ce = vec![pivot_ce];
    mean_ce.extend(&pool_mean_ce);

    // 2. temporary-teacher selection and promotion.
    let selected_pool = roles::select_temporary_teachers(&pool_mean_ce, hyper.k)?;
    let selected: Vec<usize> = selected_pool.iter().map(|i| pool_ids[*i]).collect();
    let promoted = state.promote(&selected)?;

    // 3. control weights and feedback subset over the remaining students.
    let students: Vec<usize> = promoted.student_ids().to_vec();
    let student_ces: Vec<f64> = students
        .iter()
        .map(|id| pool_mean_ce[pool_ids.iter().position(|p| p == id).expect("student from pool")])
        .collect();
    let weights = roles::control_weights(&student_ces)?;
    let counts = roles::feedback_counts(&weights, batch_size);
    let student_rows: Vec<Vec<f64>> = students
        .iter()
        .map(|id| {
            per_instance[pool_ids.iter().position(|p| p == id).expect("student from pool")].clone()
        })
        .collect();
    let subset = roles::build_feedback_subset(&student_rows, &counts)?;

    // 4. intensive teaching of the pivot on the mixed feedback.
    let mut lambda = 0.0;
    let mut pivot_loss = None;
    let mut stepped = Vec::new();
    if hyper.augmentation != AugmentationMode::None {
        let sample = match hyper.augmentation {
            AugmentationMode::FeedbackMixup => {
                roles::mixup_combine(batch_x, batch_y, &subset, hyper.alpha_mix, mixup_rng)?
            }
            AugmentationMode::PlainMixup => {
                let identity = FeedbackSubset::identity(batch_size);
                roles::mixup_combine(batch_x, batch_y, &identity, hyper.alpha_mix, mixup_rng)?
            }
            AugmentationMode::FeedbackOnly => {
                roles::mixup_with_lambda(batch_x, batch_y, &subset, 0.0, mixup_rng)?
            }
            AugmentationMode::None => unreachable!("guarded above"),
        };
        lambda = sample.lambda;
        let logits = ladder.network(0).forward(&sample.x_mixed)?;
        let loss = losses::pivot_intensive_loss(&logits, batch_y, &sample.y_feed, lambda)?;
        let value = finite_or_train_error(loss.item()?, "intensive teaching", iteration)?;
        loss.backward()?;
        opts[0].step(ladder.network(0))?;
        pivot_loss = Some(value);
        stepped.push(0);
    }
    let pivot_fp_after_update = ladder.network(0).fingerprint();

    // 5. private teaching: the updated pivot teaches each temporary teacher.
    //    The pivot is re-forwarded if (and only if) step 4 changed it.
    let pivot_logits = if pivot_loss.is_some() {
        ladder.network(0).forward_detached(batch_x)?
    } else {
        pivot_step1_logits
    };
    let mut temp_losses = Vec::with_capacity(selected.len());
    for &id in &selected {
        let logits = ladder.network(id).forward(batch_x)?;
        let loss = losses::private_teaching_loss(
            &logits,
            &pivot_logits,
            batch_y,
            &hyper.weights,
            &hyper.soften,
        )?;
        let value = finite_or_train_error(loss.item()?, "private teaching", iteration)?;
        loss.backward()?;
        opts[id].step(ladder.network(id))?;
        temp_losses.push((id, value));
        stepped.push(id);
    }
    let temp_fps_after_update: Vec<(usize, u64)> = selected
        .iter()
        .map(|id| (*id, ladder.network(*id).fingerprint()))
        .collect();

    // 6. group teaching: updated teachers, detached, teach every student.
    let temp_logits: Vec<Tensor> = selected
        .iter()
        .map(|id| ladder.network(*id).forward_detached(batch_x))
        .collect::<Result<_>>()?;
    let mut student_losses = Vec::with_capacity(students.len());
    for &id in &students {
        let logits = ladder.network(id).forward(batch_x)?;
        let loss = losses::student_group_loss(
            &logits,
            &temp_logits,
            &pivot_logits,
            batch_y,
            &hyper.weights,
            &hyper.soften,
            hyper.style,
        )?;
        let value = finite_or_train_error(loss.item()?, "group teaching", iteration)?;
        loss.backward()?;
        opts[id].step(ladder.network(id))?;
        student_losses.push((id, value));
        stepped.push(id);
    }
    let pivot_fp_after_group = ladder.network(0).fingerprint();
    let temp_fps_after_group: Vec<(usize, u64)> = selected
        .iter()
        .map(|id| (*id, ladder.network(*id).fingerprint()))
        .collect();
    debug_assert_eq!(pivot_fp_after_update, pivot_fp_after_group);
    debug_assert_eq!(temp_fps_after_update, temp_fps_after_group);

    // 7. every temporary teacher steps back down.
    let next = promoted.demote();

    let report = IterationReport {
        iteration,
        selected,
        mean_ce,
        control_weights: students
            .iter()
            .copied()
            .zip(weights.weights().iter().copied())
            .collect(),
        feedback_counts: students.iter().copied().zip(counts.iter().copied()).collect(),
        lambda,
        pivot_loss,
        temp_losses,
        student_losses,
        stepped,
        pivot_fp_after_update,
        pivot_fp_after_group,
        temp_fps_after_update,
        temp_fps_after_group,
    };
    Ok((next, report))
}

/// Settings for supervised pretraining of the pivot teacher.
pub struct PretrainCfg {
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub flip: bool,
    pub crop_pad: usize,
}

pub struct PretrainOutcome {
    pub test_accuracy: f64,
    pub checkpoint: Option<PathBuf>,
}

/// Trains the pivot with plain cross-entropy and optionally writes a
/// checkpoint. Zero epochs leaves the parameters untouched.
pub fn pretrain_pivot(
    pivot: &mut Network,
    train: &Dataset,
    test: &Dataset,
    cfg: &PretrainCfg,
    checkpoint_path: Option<&Path>,
) -> Result<PretrainOutcome> {
    let mut opt = OptimizerState::new(pivot, cfg.schedule.lr_at(0), cfg.momentum, cfg.weight_decay)?;
    let mut iter = BatchIterator::new(train, cfg.batch_size, rng::derive(cfg.seed, rng::SALT_BATCH))?;
    let mut aug_rng = rng::stream(cfg.seed, rng::SALT_AUGMENT);
    let per_epoch = iter.batches_per_epoch();
    for epoch in 0..cfg.epochs {
        opt.set_lr(cfg.schedule.lr_at(epoch));
        for i in 0..per_epoch {
            let (x, y) = iter.next_batch();
            let x = data::augment(&x, cfg.flip, cfg.crop_pad, &mut aug_rng)?;
            let logits = pivot.forward(&x)?;
            let (_, mean) = losses::cross_entropy(&logits, &y)?;
            let value = mean.item()?;
            if !value.is_finite() {
                return Err(Error::train(format!(
                    "non-finite loss during pivot pretraining at epoch {epoch}, batch {i}"
                )));
            }
            mean.backward()?;
            opt.step(pivot)?;
        }
    }
    let test_accuracy = evaluate(pivot, test)?;
    let checkpoint = match checkpoint_path {
        Some(path) => {
            nets::save_checkpoint(pivot, path)?;
            Some(path.to_path_buf())
        }
        None => None,
    };
    Ok(PretrainOutcome { test_accuracy, checkpoint })
}

/// Everything produced by a run; rows are also persisted as CSV.
pub struct RunOutcome {
    pub rows: Vec<MetricsRow>,
    pub net_names: Vec<String>,
    pub csv_path: PathBuf,
    pub pivot_pretrain_accuracy: Option<f64>,
    /// Set when the pivot was restored from an existing checkpoint instead of
    /// being pretrained in this run.
    pub pivot_loaded_from: Option<PathBuf>,
}

fn build_datasets(config: &RunConfig) -> Result<(Dataset, Dataset)> {
    let ds = &config.dataset;
    match ds.kind {
        DatasetKind::Blobs | DatasetKind::Rings => {
            let kind = if ds.kind == DatasetKind::Blobs {
                data::SyntheticKind::Blobs
            } else {
                data::SyntheticKind::Rings
            };
            let train = data::make_synthetic(kind, ds.n_train, ds.num_classes, ds.noise, ds.seed)?;
            let test =
                data::make_synthetic(kind, ds.n_test, ds.num_classes, ds.noise, ds.seed.wrapping_add(1))?
                    .with_split(Split::Test);
            Ok((train, test))
        }
        DatasetKind::Idx => {
            let need = |p: &Option<PathBuf>, key: &str| {
                p.clone()
                    .ok_or_else(|| Error::config(format!("dataset.{key} is required for idx data")))
            };
            let train = data::load_idx(
                &need(&ds.train_images, "train_images")?,
                &need(&ds.train_labels, "train_labels")?,
            )?;
            let test = data::load_idx(
                &need(&ds.test_images, "test_images")?,
                &need(&ds.test_labels, "test_labels")?,
            )?
            .with_split(Split::Test);
            Ok((train, test))
        }
    }
}

fn materialize_specs(config: &RunConfig, train: &Dataset) -> Vec<NetSpec> {
    config
        .ladder
        .iter()
        .enumerate()
        .map(|(i, entry)| NetSpec {
            kind: entry.kind,
            depth: entry.depth,
            width: entry.width,
            num_classes: train.num_classes(),
            input_shape: train.feature_shape(),
            init_seed: rng::derive(config.seed, rng::SALT_INIT.wrapping_add(i as u64)),
        })
        .collect()
}

fn checkpoint_file_name(config: &RunConfig, pivot_spec: &NetSpec) -> String {
    // Identical (dataset, pivot, pretraining budget, seed) runs share the
    // pivot checkpoint across ablation arms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(format!("{:?}", config.dataset).as_bytes());
    eat(format!("{pivot_spec:?}").as_bytes());
    eat(&config.pretrain_epochs.to_le_bytes());
    eat(&config.seed.to_le_bytes());
    eat(&config.batch_size.to_le_bytes());
    format!("pivot-{h:016x}.ckpt")
}

/// Runs a full experiment: dataset build, pivot pretraining (or checkpoint
/// reuse), the per-epoch teaching loop, per-epoch evaluation, and CSV output.
/// `on_epoch` observes each metrics row as it is produced.
pub fn run_experiment(
    config: &RunConfig,
    mut on_epoch: impl FnMut(&MetricsRow),
) -> Result<RunOutcome> {
    config.validate()?;
    let (mut train, mut test) = build_datasets(config)?;
    data::normalize_train_test(&mut train, &mut test)?;
    let specs = materialize_specs(config, &train);
    let pivot_spec = specs[0].clone();
    let mut ladder = NetworkLadder::new(specs)?;
    let ladder_size = ladder.len();
    let net_names: Vec<String> = (0..ladder_size)
        .map(|i| if i == 0 { "pivot".to_string() } else { format!("net{i}") })
        .collect();

    std::fs::create_dir_all(&config.out_dir)?;
    let csv_path = config.out_dir.join("metrics.csv");
    let schedule = LrSchedule::new(config.lr, config.milestones.clone(), config.gamma)?;

    // Pivot pretraining (teaching runs only). A checkpoint with the same
    // dataset/spec/budget/seed signature is reused when present.
    let mut pivot_pretrain_accuracy = None;
    let mut pivot_loaded_from = None;
    if config.mode == TrainingMode::Orc {
        let ckpt_dir = config.checkpoint_dir.clone().unwrap_or_else(|| config.out_dir.clone());
        std::fs::create_dir_all(&ckpt_dir)?;
        let ckpt_path = ckpt_dir.join(checkpoint_file_name(config, &pivot_spec));
        if ckpt_path.exists() {
            let loaded = nets::load_checkpoint(&ckpt_path)?;
            if loaded.spec() != &pivot_spec {
                return Err(Error::format(format!(
                    "checkpoint {} was built from a different spec",
                    ckpt_path.display()
                )));
            }
            *ladder.pivot_mut() = loaded;
            pivot_pretrain_accuracy = Some(evaluate(ladder.pivot(), &test)?);
            pivot_loaded_from = Some(ckpt_path);
        } else {
            let pretrain_cfg = PretrainCfg {
                epochs: config.pretrain_epochs,
                batch_size: config.batch_size,
                momentum: config.momentum,
                weight_decay: config.weight_decay,
                schedule: schedule
                    .stretched(config.pretrain_epochs.max(1).div_ceil(config.epochs.max(1))),
                seed: rng::derive(config.seed, rng::SALT_PRETRAIN),
                flip: config.dataset.flip,
                crop_pad: config.dataset.crop_pad,
            };
            let outcome = pretrain_pivot(
                ladder.pivot_mut(),
                &train,
                &test,
                &pretrain_cfg,
                Some(&ckpt_path),
            )?;
            pivot_pretrain_accuracy = Some(outcome.test_accuracy);
        }
    }

    let mut opts: Vec<OptimizerState> = (0..ladder_size)
        .map(|id| {
            OptimizerState::new(
                ladder.network(id),
                schedule.lr_at(0),
                config.momentum,
                config.weight_decay,
            )
        })
        .collect::<Result<_>>()?;

    let hyper = OrcHyper {
        k: config.k,
        soften: SoftenConfig::new(config.tau)?,
        weights: LossWeights::new(config.alpha)?,
        alpha_mix: config.alpha_mix,
        style: config.teaching_style,
        augmentation: config.augmentation_mode,
    };

    let mut iter = BatchIterator::new(
        &train,
        config.batch_size,
        rng::derive(config.seed, rng::SALT_BATCH),
    )?;
    let mut aug_rng = rng::stream(config.seed, rng::SALT_AUGMENT);
    let mut mixup_rng = rng::stream(config.seed, rng::SALT_MIXUP);
    let per_epoch = iter.batches_per_epoch();
    let mut state = GroupState::new(ladder_size)?;
    let mut rows = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = schedule.lr_at(epoch);
        for opt in &mut opts {
            opt.set_lr(lr);
        }
        let mut ce_sums = vec![0.0; ladder_size];
        let mut lambda_sum = 0.0;
        let mut promotions = vec![0u64; ladder_size];
        for i in 0..per_epoch {
            let (x, y) = iter.next_batch();
            let x = data::augment(&x, config.dataset.flip, config.dataset.crop_pad, &mut aug_rng)?;
            match config.mode {
                TrainingMode::Orc => {
                    let (next, report) =
                        orc_iteration(&mut ladder, &state, &x, &y, &mut opts, &hyper, &mut mixup_rng)?;
                    state = next;
                    for (slot, ce) in ce_sums.iter_mut().zip(&report.mean_ce) {
                        *slot += ce;
                    }
                    lambda_sum += report.lambda;
                    for id in &report.selected {
                        promotions[*id] += 1;
                    }
                }
                TrainingMode::Independent => {
                    for id in 0..ladder_size {
                        let logits = ladder.network(id).forward(&x)?;
                        let (_, mean) = losses::cross_entropy(&logits, &y)?;
                        let value = mean.item()?;
                        if !value.is_finite() {
                            return Err(Error::train(format!(
                                "non-finite loss during independent training at epoch {epoch}, batch {i}"
                            )));
                        }
                        mean.backward()?;
                        opts[id].step(ladder.network(id))?;
                        ce_sums[id] += value;
                    }
                }
            }
        }
        let mut accs = Vec::with_capacity(ladder_size);
        for id in 0..ladder_size {
            accs.push(evaluate(ladder.network(id), &test)?);
        }
        let row = MetricsRow {
            epoch,
            lr,
            test_accuracy: accs,
            train_ce: ce_sums.iter().map(|s| s / per_epoch as f64).collect(),
            mean_lambda: lambda_sum / per_epoch as f64,
            promotions,
        };
        on_epoch(&row);
        rows.push(row);
    }

    metrics::write_metrics(&rows, &net_names, &csv_path)?;
    Ok(RunOutcome {
        rows,
        net_names,
        csv_path,
        pivot_pretrain_accuracy,
        pivot_loaded_from,
    })
}
