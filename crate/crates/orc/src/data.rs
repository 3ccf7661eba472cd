//! Dataset ingestion (IDX files and synthetic generators), normalization,
//! standard augmentation, and seeded batching.
//!
//! All randomness flows from explicit seeds; a dataset is immutable once
//! normalized and an iterator delivers the same batch sequence for the same
//! seed, epoch after epoch.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Gaussian clusters around class centers on a circle; linearly
    /// separable at zero noise.
    Blobs,
    /// Concentric rings, one radius per class.
    Rings,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(SyntheticKind::Blobs),
            "rings" => Ok(SyntheticKind::Rings),
            other => Err(Error::config(format!("unknown synthetic kind '{other}'"))),
        }
    }
}

/// Instances plus one-hot labels for one split.
pub struct Dataset {
    /// `[N, D]` for vector data or `[N, C, H, W]` for images.
    pub images: Tensor,
    /// `[N, num_classes]`, one-hot or soft rows summing to one.
    pub labels: Tensor,
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Tensor, split: Split) -> Result<Dataset> {
        let n = images.shape().first().copied().unwrap_or(0);
        if n == 0 {
            return Err(Error::format("dataset must contain at least one instance"));
        }
        let l_shape = labels.shape();
        if l_shape.len() != 2 || l_shape[0] != n {
            return Err(Error::format(format!(
                "labels shape {l_shape:?} does not match {n} instances"
            )));
        }
        let classes = l_shape[1];
        let values = labels.values();
        for (i, row) in values.chunks(classes).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|v| *v < 0.0) {
                return Err(Error::format(format!("label row {i} is not one-hot/soft")));
            }
        }
        Ok(Dataset { images, labels, split })
    }

    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.labels.shape()[1]
    }

    /// Feature shape of one instance (everything after the batch axis).
    pub fn feature_shape(&self) -> Vec<usize> {
        self.images.shape()[1..].to_vec()
    }

    pub fn with_split(mut self, split: Split) -> Dataset {
        self.split = split;
        self
    }

    /// Per-channel mean and standard deviation. Channels are the columns of
    /// vector data and the C axis of image data.
    pub fn channel_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let shape = self.images.shape();
        let data = self.images.values();
        let channels = shape[1];
        let per_channel: usize = shape[2..].iter().product::<usize>().max(1);
        let n = shape[0];
        let mut mean = vec![0.0; channels];
        let mut sq = vec![0.0; channels];
        let count = (n * per_channel) as f64;
        for i in 0..n {
            for c in 0..channels {
                let base = (i * channels + c) * per_channel;
                for j in 0..per_channel {
                    let v = data[base + j];
                    mean[c] += v;
                    sq[c] += v * v;
                }
            }
        }
        for c in 0..channels {
            mean[c] /= count;
            sq[c] = (sq[c] / count - mean[c] * mean[c]).max(0.0).sqrt();
        }
        (mean, sq)
    }

    /// Standardizes in place with the given per-channel statistics.
    pub fn apply_stats(&mut self, mean: &[f64], std: &[f64]) -> Result<()> {
        let shape = self.images.shape();
        let channels = shape[1];
        if mean.len() != channels || std.len() != channels {
            return Err(Error::shape(format!(
                "stats for {} channels applied to {channels}",
                mean.len()
            )));
        }
        let per_channel: usize = shape[2..].iter().product::<usize>().max(1);
        let n = shape[0];
        self.images.with_data_mut(|data| {
            for i in 0..n {
                for c in 0..channels {
                    let denom = if std[c] > 1e-12 { std[c] } else { 1.0 };
                    let base = (i * channels + c) * per_channel;
                    for v in &mut data[base..base + per_channel] {
                        *v = (*v - mean[c]) / denom;
                    }
                }
            }
        });
        Ok(())
    }
}

/// Standardizes both splits with statistics computed on the training split.
pub fn normalize_train_test(train: &mut Dataset, test: &mut Dataset) -> Result<()> {
    let (mean, std) = train.channel_stats();
    train.apply_stats(&mean, &std)?;
    test.apply_stats(&mean, &std)
}

fn read_u32_be(reader: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|e| Error::format(format!("truncated IDX header: {e}")))?;
    Ok(u32::from_be_bytes(buf))
}

fn read_exact_payload(reader: &mut impl Read, len: usize, what: &str) -> Result<Vec<u8>> {
    let mut payload = vec![0u8; len];
    reader
        .read_exact(&mut payload)
        .map_err(|_| Error::format(format!("{what}: payload shorter than header promises")))?;
    let mut probe = [0u8; 1];
    if reader
        .read(&mut probe)
        .map_err(|e| Error::format(format!("{what}: {e}")))?
        != 0
    {
        return Err(Error::format(format!(
            "{what}: payload longer than header promises"
        )));
    }
    Ok(payload)
}

/// Loads a big-endian IDX image/label pair into a dataset with one-hot
/// labels. Images keep their raw 0..255 values; normalization is a separate
/// step.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut img = BufReader::new(File::open(images_path)?);
    let magic = read_u32_be(&mut img)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(format!(
            "bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let n = read_u32_be(&mut img)? as usize;
    let h = read_u32_be(&mut img)? as usize;
    let w = read_u32_be(&mut img)? as usize;
    if n == 0 || h == 0 || w == 0 {
        return Err(Error::format("IDX image file with a zero dimension"));
    }
    let pixels = read_exact_payload(&mut img, n * h * w, "IDX images")?;

    let mut lab = BufReader::new(File::open(labels_path)?);
    let magic = read_u32_be(&mut lab)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(format!(
            "bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let ln = read_u32_be(&mut lab)? as usize;
    if ln != n {
        return Err(Error::format(format!(
            "label count {ln} does not match image count {n}"
        )));
    }
    let raw_labels = read_exact_payload(&mut lab, ln, "IDX labels")?;

    let classes = (*raw_labels.iter().max().expect("n > 0") as usize + 1).max(2);
    let mut one_hot = vec![0.0; n * classes];
    for (i, l) in raw_labels.iter().enumerate() {
        one_hot[i * classes + *l as usize] = 1.0;
    }
    let images = Tensor::from_vec(pixels.iter().map(|p| *p as f64).collect(), &[n, 1, h, w])?;
    let labels = Tensor::from_vec(one_hot, &[n, classes])?;
    Dataset::new(images, labels, Split::Train)
}

/// Generates a balanced 2-D synthetic dataset, deterministic in the seed.
pub fn make_synthetic(
    kind: SyntheticKind,
    n: usize,
    num_classes: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(Error::config("synthetic data needs at least two classes"));
    }
    if n < num_classes {
        return Err(Error::config(format!(
            "cannot balance {n} instances over {num_classes} classes"
        )));
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(Error::config(format!("noise must be non-negative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n * 2);
    let mut one_hot = vec![0.0; n * num_classes];
    for i in 0..n {
        let class = i % num_classes;
        let (x, y) = match kind {
            SyntheticKind::Blobs => {
                let theta = 2.0 * std::f64::consts::PI * class as f64 / num_classes as f64;
                let (cx, cy) = (2.0 * theta.cos(), 2.0 * theta.sin());
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                (cx + noise * nx, cy + noise * ny)
            }
            SyntheticKind::Rings => {
                let radius = 1.0 + class as f64;
                let phi = rng.gen_range(0.0..(2.0 * std::f64::consts::PI));
                let nr: f64 = rng.sample(StandardNormal);
                let r = radius + noise * nr;
                (r * phi.cos(), r * phi.sin())
            }
        };
        xs.push(x);
        xs.push(y);
        one_hot[i * num_classes + class] = 1.0;
    }
    let images = Tensor::from_vec(xs, &[n, 2])?;
    let labels = Tensor::from_vec(one_hot, &[n, num_classes])?;
    Dataset::new(images, labels, Split::Train)
}

pub(crate) fn flip_image(
    data: &mut [f64],
    base: usize,
    channels: usize,
    h: usize,
    w: usize,
) {
    for c in 0..channels {
        for y in 0..h {
            let row = base + (c * h + y) * w;
            data[row..row + w].reverse();
        }
    }
}

/// Per-image horizontal flip (p = 0.5) and pad-then-random-crop. Vector data
/// passes through unchanged. Draw order per image: flip, then crop offsets.
pub fn augment(batch: &Tensor, flip: bool, crop_pad: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let shape = batch.shape();
    if shape.len() != 4 {
        return Ok(batch.clone());
    }
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    if crop_pad >= h.min(w) {
        return Err(Error::config(format!(
            "crop_pad {crop_pad} must be smaller than the image size {h}x{w}"
        )));
    }
    if !flip && crop_pad == 0 {
        return Ok(batch.clone());
    }
    let mut data = batch.values();
    let mut out = vec![0.0; data.len()];
    let image_len = c * h * w;
    for i in 0..n {
        let base = i * image_len;
        if flip && rng.gen::<bool>() {
            flip_image(&mut data, base, c, h, w);
        }
        if crop_pad == 0 {
            out[base..base + image_len].copy_from_slice(&data[base..base + image_len]);
            continue;
        }
        let dy = rng.gen_range(0..=2 * crop_pad);
        let dx = rng.gen_range(0..=2 * crop_pad);
        for ci in 0..c {
            for y in 0..h {
                let src_y = y as isize + dy as isize - crop_pad as isize;
                for x in 0..w {
                    let src_x = x as isize + dx as isize - crop_pad as isize;
                    let v = if src_y >= 0
                        && src_y < h as isize
                        && src_x >= 0
                        && src_x < w as isize
                    {
                        data[base + (ci * h + src_y as usize) * w + src_x as usize]
                    } else {
                        0.0
                    };
                    out[base + (ci * h + y) * w + x] = v;
                }
            }
        }
    }
    Tensor::from_vec(out, &shape)
}

/// Seeded epoch-permutation batcher; the final short batch is dropped.
pub struct BatchIterator {
    images: Tensor,
    labels: Tensor,
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    cursor: usize,
    perm: Vec<usize>,
}

impl BatchIterator {
    pub fn new(dataset: &Dataset, batch_size: usize, seed: u64) -> Result<BatchIterator> {
        let n = dataset.len();
        if batch_size == 0 || batch_size > n {
            return Err(Error::config(format!(
                "batch size {batch_size} invalid for {n} instances"
            )));
        }
        Ok(BatchIterator {
            images: dataset.images.clone(),
            labels: dataset.labels.clone(),
            n,
            batch_size,
            seed,
            epoch: 0,
            cursor: 0,
            perm: Self::permutation(n, seed, 0),
        })
    }

    fn permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch);
        perm.shuffle(&mut rng);
        perm
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n / self.batch_size
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Next `(x, y)` batch, reshuffling with `seed ⊕ epoch` at each boundary.
    pub fn next_batch(&mut self) -> (Tensor, Tensor) {
        if self.cursor + self.batch_size > self.n {
            self.epoch += 1;
            self.perm = Self::permutation(self.n, self.seed, self.epoch);
            self.cursor = 0;
        }
        let idx = &self.perm[self.cursor..self.cursor + self.batch_size];
        self.cursor += self.batch_size;
        let x = self.images.gather_rows(idx).expect("indices from 0..n");
        let y = self.labels.gather_rows(idx).expect("indices from 0..n");
        (x, y)
    }
}
