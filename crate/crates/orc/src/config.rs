//! Run configuration: a flat `key = value` document (dotted keys, `#`
//! comments), experiment presets for the ablation axes, and validation.
//!
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default. `parse(emit(config))` round-trips to an equal config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::losses::TeachingStyle;
use crate::nets::NetKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Blobs,
    Rings,
    Idx,
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetKind::Blobs => write!(f, "blobs"),
            DatasetKind::Rings => write!(f, "rings"),
            DatasetKind::Idx => write!(f, "idx"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainingMode {
    /// The full teaching protocol.
    Orc,
    /// Every network trains on plain cross-entropy, no interaction.
    Independent,
}

impl std::fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainingMode::Orc => write!(f, "orc"),
            TrainingMode::Independent => write!(f, "independent"),
        }
    }
}

/// What the pivot teacher trains on during intensive teaching.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AugmentationMode {
    /// Intensive teaching disabled; the pivot stays at its pretrained state.
    None,
    /// Mixup within the mini-batch, ignoring the feedback subset.
    PlainMixup,
    /// The raw feedback subset, no blending.
    FeedbackOnly,
    /// Mixup of the mini-batch with the feedback subset.
    FeedbackMixup,
}

impl std::fmt::Display for AugmentationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AugmentationMode::None => write!(f, "none"),
            AugmentationMode::PlainMixup => write!(f, "plain_mixup"),
            AugmentationMode::FeedbackOnly => write!(f, "feedback_only"),
            AugmentationMode::FeedbackMixup => write!(f, "feedback_mixup"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub n_train: usize,
    pub n_test: usize,
    pub num_classes: usize,
    pub noise: f64,
    pub seed: u64,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub flip: bool,
    pub crop_pad: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LadderEntry {
    pub kind: NetKind,
    pub depth: usize,
    pub width: usize,
}

/// Everything a run needs; produced by [`parse_config`] or [`preset`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    /// First entry is the pivot teacher.
    pub ladder: Vec<LadderEntry>,
    pub mode: TrainingMode,
    /// Temporary teachers promoted per iteration.
    pub k: usize,
    pub tau: f64,
    pub alpha: f64,
    pub alpha_mix: f64,
    pub teaching_style: TeachingStyle,
    pub augmentation_mode: AugmentationMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub milestones: Vec<usize>,
    pub gamma: f64,
    pub pretrain_epochs: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Where pivot checkpoints live; defaults to `out_dir`. Ablation grids
    /// point every arm at one directory to share the pretrained pivot.
    pub checkpoint_dir: Option<PathBuf>,
}

/// The desk-scale default: a four-network MLP ladder on noisy blobs, the
/// published optimizer settings, and a schedule compressed to 30 epochs.
impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetConfig {
                kind: DatasetKind::Blobs,
                n_train: 10_000,
                n_test: 8_000,
                num_classes: 8,
                noise: 0.45,
                seed: 1,
                train_images: None,
                train_labels: None,
                test_images: None,
                test_labels: None,
                flip: false,
                crop_pad: 0,
            },
            ladder: vec![
                LadderEntry { kind: NetKind::Mlp, depth: 2, width: 32 },
                LadderEntry { kind: NetKind::Mlp, depth: 2, width: 24 },
                LadderEntry { kind: NetKind::Mlp, depth: 2, width: 16 },
                LadderEntry { kind: NetKind::Mlp, depth: 2, width: 12 },
            ],
            mode: TrainingMode::Orc,
            k: 1,
            tau: 4.0,
            alpha: 0.9,
            alpha_mix: 0.2,
            teaching_style: TeachingStyle::Individual,
            augmentation_mode: AugmentationMode::FeedbackMixup,
            epochs: 30,
            batch_size: 64,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            milestones: vec![12, 19, 26],
            gamma: 0.1,
            pretrain_epochs: 90,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            checkpoint_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ladder.len() < 2 {
            return Err(Error::config(
                "ladder needs a pivot plus at least one pool network",
            ));
        }
        let pool = self.ladder.len() - 1;
        if self.k >= pool {
            return Err(Error::config(format!(
                "k = {} but the pool only holds {pool} network(s)",
                self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha must lie in [0,1], got {}", self.alpha)));
        }
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(Error::config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.alpha_mix <= 0.0 || !self.alpha_mix.is_finite() {
            return Err(Error::config(format!(
                "alpha_mix must be positive, got {}",
                self.alpha_mix
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.lr <= 0.0 || self.gamma <= 0.0 {
            return Err(Error::config("lr and gamma must be positive"));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("milestones must be strictly increasing"));
        }
        for (i, entry) in self.ladder.iter().enumerate() {
            if entry.depth < 1 || entry.width < 1 {
                return Err(Error::config(format!(
                    "ladder.{i} must have depth >= 1 and width >= 1"
                )));
            }
        }
        match self.dataset.kind {
            DatasetKind::Blobs | DatasetKind::Rings => {
                if self.dataset.num_classes < 2 {
                    return Err(Error::config("dataset.num_classes must be at least 2"));
                }
                if self.dataset.n_train < self.batch_size {
                    return Err(Error::config(
                        "dataset.n_train must be at least the batch size",
                    ));
                }
                if self.dataset.n_test == 0 {
                    return Err(Error::config("dataset.n_test must be positive"));
                }
            }
            DatasetKind::Idx => {
                for (key, path) in [
                    ("train_images", &self.dataset.train_images),
                    ("train_labels", &self.dataset.train_labels),
                    ("test_images", &self.dataset.test_images),
                    ("test_labels", &self.dataset.test_labels),
                ] {
                    if path.is_none() {
                        return Err(Error::config(format!(
                            "dataset.{key} is required for idx data"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Serializes to the flat key-value document; `parse` round-trips it.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let ds = &self.dataset;
        let _ = writeln!(out, "dataset.kind = {}", ds.kind);
        let _ = writeln!(out, "dataset.n_train = {}", ds.n_train);
        let _ = writeln!(out, "dataset.n_test = {}", ds.n_test);
        let _ = writeln!(out, "dataset.num_classes = {}", ds.num_classes);
        let _ = writeln!(out, "dataset.noise = {}", ds.noise);
        let _ = writeln!(out, "dataset.seed = {}", ds.seed);
        for (key, path) in [
            ("train_images", &ds.train_images),
            ("train_labels", &ds.train_labels),
            ("test_images", &ds.test_images),
            ("test_labels", &ds.test_labels),
        ] {
            if let Some(p) = path {
                let _ = writeln!(out, "dataset.{key} = {}", p.display());
            }
        }
        let _ = writeln!(out, "dataset.flip = {}", ds.flip);
        let _ = writeln!(out, "dataset.crop_pad = {}", ds.crop_pad);
        for (i, entry) in self.ladder.iter().enumerate() {
            let _ = writeln!(out, "ladder.{i}.kind = {}", entry.kind);
            let _ = writeln!(out, "ladder.{i}.depth = {}", entry.depth);
            let _ = writeln!(out, "ladder.{i}.width = {}", entry.width);
        }
        let _ = writeln!(out, "mode = {}", self.mode);
        let _ = writeln!(out, "orc.k = {}", self.k);
        let _ = writeln!(out, "orc.tau = {}", self.tau);
        let _ = writeln!(out, "orc.alpha = {}", self.alpha);
        let _ = writeln!(out, "orc.alpha_mix = {}", self.alpha_mix);
        let style = match self.teaching_style {
            TeachingStyle::Individual => "individual",
            TeachingStyle::Ensemble => "ensemble",
        };
        let _ = writeln!(out, "orc.teaching_style = {style}");
        let _ = writeln!(out, "orc.augmentation_mode = {}", self.augmentation_mode);
        let _ = writeln!(out, "train.epochs = {}", self.epochs);
        let _ = writeln!(out, "train.batch_size = {}", self.batch_size);
        let _ = writeln!(out, "train.pretrain_epochs = {}", self.pretrain_epochs);
        let _ = writeln!(out, "opt.lr = {}", self.lr);
        let _ = writeln!(out, "opt.momentum = {}", self.momentum);
        let _ = writeln!(out, "opt.weight_decay = {}", self.weight_decay);
        let milestones: Vec<String> = self.milestones.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "opt.milestones = {}", milestones.join(","));
        let _ = writeln!(out, "opt.gamma = {}", self.gamma);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "out_dir = {}", self.out_dir.display());
        if let Some(dir) = &self.checkpoint_dir {
            let _ = writeln!(out, "checkpoint_dir = {}", dir.display());
        }
        out
    }

    /// Parses a document on top of `base` (or the default config), then
    /// validates the result.
    pub fn parse_str(text: &str, base: Option<RunConfig>) -> Result<RunConfig> {
        let mut config = base.unwrap_or_default();
        let mut ladder_entries: BTreeMap<usize, (Option<NetKind>, Option<usize>, Option<usize>)> =
            BTreeMap::new();
        let mut ladder_touched = false;
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected 'key = value'", line_no + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if let Some(rest) = key.strip_prefix("ladder.") {
                let (idx, field) = rest.split_once('.').ok_or_else(|| {
                    Error::config(format!("'{key}': expected ladder.<index>.<field>"))
                })?;
                let idx: usize = idx
                    .parse()
                    .map_err(|_| Error::config(format!("'{key}': bad ladder index")))?;
                let entry = ladder_entries.entry(idx).or_default();
                match field {
                    "kind" => entry.0 = Some(value.parse()?),
                    "depth" => entry.1 = Some(parse_num(key, value)?),
                    "width" => entry.2 = Some(parse_num(key, value)?),
                    other => {
                        return Err(Error::config(format!("unknown key 'ladder.{idx}.{other}'")))
                    }
                }
                ladder_touched = true;
                continue;
            }
            match key {
                "dataset.kind" => {
                    config.dataset.kind = match value {
                        "blobs" => DatasetKind::Blobs,
                        "rings" => DatasetKind::Rings,
                        "idx" => DatasetKind::Idx,
                        other => {
                            return Err(Error::config(format!(
                                "dataset.kind: unknown value '{other}'"
                            )))
                        }
                    }
                }
                "dataset.n_train" => config.dataset.n_train = parse_num(key, value)?,
                "dataset.n_test" => config.dataset.n_test = parse_num(key, value)?,
                "dataset.num_classes" => config.dataset.num_classes = parse_num(key, value)?,
                "dataset.noise" => config.dataset.noise = parse_num(key, value)?,
                "dataset.seed" => config.dataset.seed = parse_num(key, value)?,
                "dataset.train_images" => config.dataset.train_images = Some(value.into()),
                "dataset.train_labels" => config.dataset.train_labels = Some(value.into()),
                "dataset.test_images" => config.dataset.test_images = Some(value.into()),
                "dataset.test_labels" => config.dataset.test_labels = Some(value.into()),
                "dataset.flip" => config.dataset.flip = parse_bool(key, value)?,
                "dataset.crop_pad" => config.dataset.crop_pad = parse_num(key, value)?,
                "mode" => {
                    config.mode = match value {
                        "orc" => TrainingMode::Orc,
                        "independent" => TrainingMode::Independent,
                        other => {
                            return Err(Error::config(format!("mode: unknown value '{other}'")))
                        }
                    }
                }
                "orc.k" => config.k = parse_num(key, value)?,
                "orc.tau" => config.tau = parse_num(key, value)?,
                "orc.alpha" => config.alpha = parse_num(key, value)?,
                "orc.alpha_mix" => config.alpha_mix = parse_num(key, value)?,
                "orc.teaching_style" => {
                    config.teaching_style = match value {
                        "individual" => TeachingStyle::Individual,
                        "ensemble" => TeachingStyle::Ensemble,
                        other => {
                            return Err(Error::config(format!(
                                "orc.teaching_style: unknown value '{other}'"
                            )))
                        }
                    }
                }
                "orc.augmentation_mode" => {
                    config.augmentation_mode = match value {
                        "none" => AugmentationMode::None,
                        "plain_mixup" => AugmentationMode::PlainMixup,
                        "feedback_only" => AugmentationMode::FeedbackOnly,
                        "feedback_mixup" => AugmentationMode::FeedbackMixup,
                        other => {
                            return Err(Error::config(format!(
                                "orc.augmentation_mode: unknown value '{other}'"
                            )))
                        }
                    }
                }
                "train.epochs" => config.epochs = parse_num(key, value)?,
                "train.batch_size" => config.batch_size = parse_num(key, value)?,
                "train.pretrain_epochs" => config.pretrain_epochs = parse_num(key, value)?,
                "opt.lr" => config.lr = parse_num(key, value)?,
                "opt.momentum" => config.momentum = parse_num(key, value)?,
                "opt.weight_decay" => config.weight_decay = parse_num(key, value)?,
                "opt.milestones" => {
                    config.milestones = if value.is_empty() {
                        Vec::new()
                    } else {
                        value
                            .split(',')
                            .map(|v| parse_num("opt.milestones", v.trim()))
                            .collect::<Result<_>>()?
                    };
                }
                "opt.gamma" => config.gamma = parse_num(key, value)?,
                "seed" => config.seed = parse_num(key, value)?,
                "out_dir" => config.out_dir = value.into(),
                "checkpoint_dir" => config.checkpoint_dir = Some(value.into()),
                other => return Err(Error::config(format!("unknown key '{other}'"))),
            }
        }
        if ladder_touched {
            let mut ladder = Vec::new();
            for (expected, (idx, entry)) in ladder_entries.iter().enumerate() {
                if *idx != expected {
                    return Err(Error::config(format!(
                        "ladder indices must be contiguous from 0; missing ladder.{expected}"
                    )));
                }
                let kind = entry
                    .0
                    .ok_or_else(|| Error::config(format!("ladder.{idx}.kind is required")))?;
                let depth = entry
                    .1
                    .ok_or_else(|| Error::config(format!("ladder.{idx}.depth is required")))?;
                let width = entry
                    .2
                    .ok_or_else(|| Error::config(format!("ladder.{idx}.width is required")))?;
                ladder.push(LadderEntry { kind, depth, width });
            }
            config.ladder = ladder;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn parse_file(path: &Path, base: Option<RunConfig>) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text, base)
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::config(format!("{key}: expected true/false, got '{other}'"))),
    }
}

/// Loads, applies defaults, and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    RunConfig::parse_file(path, None)
}

pub const PRESET_NAMES: &[&str] = &[
    "table1_k0",
    "table1_k1",
    "table1_k2",
    "table2_none",
    "table2_plain_mixup",
    "table2_feedback_only",
    "table2_feedback_mixup",
    "table3_individual",
    "table3_ensemble",
    "baseline_independent",
];

/// Desk-scale experiment presets. Each differs from the default config only
/// on its ablated axis; output directories are chosen by the caller.
pub fn preset(name: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    match name {
        "table1_k0" => config.k = 0,
        "table1_k1" => config.k = 1,
        "table1_k2" => config.k = 2,
        "table2_none" => config.augmentation_mode = AugmentationMode::None,
        "table2_plain_mixup" => config.augmentation_mode = AugmentationMode::PlainMixup,
        "table2_feedback_only" => config.augmentation_mode = AugmentationMode::FeedbackOnly,
        "table2_feedback_mixup" => config.augmentation_mode = AugmentationMode::FeedbackMixup,
        "table3_individual" => config.teaching_style = TeachingStyle::Individual,
        "table3_ensemble" => config.teaching_style = TeachingStyle::Ensemble,
        "baseline_independent" => config.mode = TrainingMode::Independent,
        other => return Err(Error::config(format!("unknown preset '{other}'"))),
    }
    Ok(config)
}
