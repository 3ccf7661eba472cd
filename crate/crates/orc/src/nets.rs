//! Capacity-ladder model zoo: seeded MLP and small conv classifiers of
//! strictly decreasing size, plus checkpoint I/O.
//!
//! Architectures are intentionally plain — ReLU stacks without normalization —
//! so that a ladder stays trainable in minutes while preserving the property
//! the trainer relies on: a monotone capacity gap from pivot to smallest net.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{NoGradGuard, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Mlp,
    Conv,
}

impl std::fmt::Display for NetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NetKind::Mlp => write!(f, "mlp"),
            NetKind::Conv => write!(f, "conv"),
        }
    }
}

impl std::str::FromStr for NetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(NetKind::Mlp),
            "conv" => Ok(NetKind::Conv),
            other => Err(Error::config(format!("unknown network kind '{other}'"))),
        }
    }
}

/// Everything needed to build a network deterministically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub kind: NetKind,
    /// Number of affine layers for an MLP; number of conv layers (before the
    /// classification head) for a conv net.
    pub depth: usize,
    /// Hidden units per layer (MLP) or channel base (conv).
    pub width: usize,
    pub num_classes: usize,
    /// `[features]` for vector data, `[channels, height, width]` for images.
    pub input_shape: Vec<usize>,
    pub init_seed: u64,
}

impl NetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::spec("depth must be at least 1"));
        }
        if self.width < 1 {
            return Err(Error::spec("width must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::spec("num_classes must be at least 2"));
        }
        match self.kind {
            NetKind::Mlp => {
                if self.input_shape.is_empty() {
                    return Err(Error::spec("mlp input shape must be non-empty"));
                }
            }
            NetKind::Conv => {
                if self.input_shape.len() != 3 {
                    return Err(Error::spec(format!(
                        "conv input shape must be [channels, height, width], got {:?}",
                        self.input_shape
                    )));
                }
            }
        }
        Ok(())
    }

    fn input_features(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Layer dimensions `(fan_in, fan_out)` of every affine/conv layer, in
    /// order; conv entries carry the 3x3 kernel implicitly.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        match self.kind {
            NetKind::Mlp => {
                let d = self.input_features();
                if self.depth == 1 {
                    dims.push((d, self.num_classes));
                } else {
                    dims.push((d, self.width));
                    for _ in 1..self.depth - 1 {
                        dims.push((self.width, self.width));
                    }
                    dims.push((self.width, self.num_classes));
                }
            }
            NetKind::Conv => {
                let c = self.input_shape[0];
                dims.push((c, self.width));
                for _ in 1..self.depth {
                    dims.push((self.width, self.width));
                }
                // classification head after global average pooling
                dims.push((self.width, self.num_classes));
            }
        }
        dims
    }

    /// Total parameter count, a pure function of the spec.
    pub fn param_count(&self) -> usize {
        let dims = self.layer_dims();
        match self.kind {
            NetKind::Mlp => dims.iter().map(|(i, o)| i * o + o).sum(),
            NetKind::Conv => {
                let convs: usize = dims[..dims.len() - 1]
                    .iter()
                    .map(|(i, o)| i * o * 9 + o)
                    .sum();
                let (i, o) = dims[dims.len() - 1];
                convs + i * o + o
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A network instance: a spec plus its named parameters.
pub struct Network {
    spec: NetSpec,
    params: Vec<(String, Tensor)>,
    mode: Mode,
}

impl Network {
    /// Builds a network with seeded He-uniform weights and zero biases.
    /// The same spec (including seed) always yields bit-identical parameters.
    pub fn build(spec: NetSpec) -> Result<Network> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
        let dims = spec.layer_dims();
        let mut params = Vec::new();
        let n_layers = dims.len();
        for (li, (fan_in, fan_out)) in dims.iter().enumerate() {
            let is_head = li == n_layers - 1;
            let conv_layer = spec.kind == NetKind::Conv && !is_head;
            let (w_shape, b_shape, fan) = if conv_layer {
                (
                    vec![*fan_out, *fan_in, 3, 3],
                    vec![*fan_out, 1, 1],
                    fan_in * 9,
                )
            } else {
                (vec![*fan_in, *fan_out], vec![*fan_out], *fan_in)
            };
            let limit = (6.0 / fan as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let w_len: usize = w_shape.iter().product();
            let w_data: Vec<f64> = (0..w_len).map(|_| dist.sample(&mut rng)).collect();
            let b_len: usize = b_shape.iter().product();
            let name = if is_head {
                "head".to_string()
            } else {
                format!("layer{li}")
            };
            params.push((format!("{name}.weight"), Tensor::param(w_data, &w_shape)?));
            params.push((format!("{name}.bias"), Tensor::param(vec![0.0; b_len], &b_shape)?));
        }
        Ok(Network {
            spec,
            params,
            mode: Mode::Train,
        })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn parameters(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grads(&self) {
        for (_, p) in &self.params {
            p.zero_grad();
        }
    }

    /// FNV-1a over the little-endian bytes of all parameters, in order.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, p) in &self.params {
            p.with_data(|data| {
                for v in data {
                    for byte in v.to_le_bytes() {
                        h ^= byte as u64;
                        h = h.wrapping_mul(0x0000_0100_0000_01b3);
                    }
                }
            });
        }
        h
    }

    /// Forward pass producing logits `[B, num_classes]`.
    ///
    /// Records a graph only in train mode; eval-mode forwards are pure.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        match self.mode {
            Mode::Train => self.forward_inner(batch),
            Mode::Eval => {
                let _guard = NoGradGuard::new();
                self.forward_inner(batch)
            }
        }
    }

    /// Graph-free forward regardless of mode, for ranking and teacher passes.
    pub fn forward_detached(&self, batch: &Tensor) -> Result<Tensor> {
        let _guard = NoGradGuard::new();
        self.forward_inner(batch)
    }

    fn forward_inner(&self, batch: &Tensor) -> Result<Tensor> {
        let shape = batch.shape();
        if shape.is_empty() {
            return Err(Error::shape("forward expects a batched input"));
        }
        let b = shape[0];
        match self.spec.kind {
            NetKind::Mlp => {
                let d = self.spec.input_features();
                let flat: usize = shape[1..].iter().product();
                if flat != d {
                    return Err(Error::shape(format!(
                        "input shape {:?} does not match spec features {d}",
                        shape
                    )));
                }
                let mut x = if shape.len() == 2 {
                    batch.clone()
                } else {
                    batch.reshape(&[b, d])?
                };
                let n_layers = self.params.len() / 2;
                for li in 0..n_layers {
                    let w = &self.params[2 * li].1;
                    let bias = &self.params[2 * li + 1].1;
                    x = x.matmul(w)?.add(bias)?;
                    if li + 1 < n_layers {
                        x = x.relu();
                    }
                }
                Ok(x)
            }
            NetKind::Conv => {
                if shape.len() != 4 || shape[1..] != self.spec.input_shape[..] {
                    return Err(Error::shape(format!(
                        "input shape {:?} does not match spec {:?}",
                        shape, self.spec.input_shape
                    )));
                }
                let mut x = batch.clone();
                let n_layers = self.params.len() / 2;
                for li in 0..n_layers - 1 {
                    let w = &self.params[2 * li].1;
                    let bias = &self.params[2 * li + 1].1;
                    x = x.conv2d(w, 1, 1)?.add(bias)?.relu();
                }
                // global average pool to [B, channels]
                x = x.mean(Some(3), false)?.mean(Some(2), false)?;
                let w = &self.params[2 * (n_layers - 1)].1;
                let bias = &self.params[2 * (n_layers - 1) + 1].1;
                x.matmul(w)?.add(bias)
            }
        }
    }
}

/// Pivot teacher plus a pool of strictly smaller networks.
pub struct NetworkLadder {
    pivot: Network,
    pool: Vec<Network>,
}

impl NetworkLadder {
    /// Builds all networks; the first spec is the pivot. Capacities must
    /// satisfy `pivot >= pool[0] > pool[1] > ...`.
    pub fn new(specs: Vec<NetSpec>) -> Result<NetworkLadder> {
        if specs.len() < 2 {
            return Err(Error::ladder(format!(
                "a ladder needs a pivot plus at least one pool network, got {} spec(s)",
                specs.len()
            )));
        }
        let counts: Vec<usize> = specs.iter().map(NetSpec::param_count).collect();
        if counts[0] < counts[1] {
            return Err(Error::ladder(format!(
                "pivot capacity {} is below the first pool network {}",
                counts[0], counts[1]
            )));
        }
        for i in 1..counts.len() - 1 {
            if counts[i] <= counts[i + 1] {
                return Err(Error::ladder(format!(
                    "pool capacities must strictly decrease: {} then {}",
                    counts[i],
                    counts[i + 1]
                )));
            }
        }
        let mut iter = specs.into_iter();
        let pivot = Network::build(iter.next().expect("checked above"))?;
        let pool = iter.map(Network::build).collect::<Result<Vec<_>>>()?;
        Ok(NetworkLadder { pivot, pool })
    }

    /// Total number of networks, pivot included.
    pub fn len(&self) -> usize {
        1 + self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    /// Network by ladder id: 0 is the pivot, ids 1.. index the pool from the
    /// largest network down.
    pub fn network(&self, id: usize) -> &Network {
        if id == 0 {
            &self.pivot
        } else {
            &self.pool[id - 1]
        }
    }

    pub fn network_mut(&mut self, id: usize) -> &mut Network {
        if id == 0 {
            &mut self.pivot
        } else {
            &mut self.pool[id - 1]
        }
    }

    pub fn pivot(&self) -> &Network {
        &self.pivot
    }

    pub fn pivot_mut(&mut self) -> &mut Network {
        &mut self.pivot
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    dtype: String,
    spec: NetSpec,
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
}

const CHECKPOINT_FORMAT: &str = "orc-checkpoint-v1";

/// Writes `net` as a JSON header followed by raw little-endian f64 data.
pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.to_string(),
        dtype: "f64".to_string(),
        spec: net.spec().clone(),
        names: net.params.iter().map(|(n, _)| n.clone()).collect(),
        shapes: net.params.iter().map(|(_, t)| t.shape()).collect(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| Error::format(format!("checkpoint header encode failed: {e}")))?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    out.write_all(&header_bytes)?;
    for (_, p) in &net.params {
        let mut ok = Ok(());
        p.with_data(|data| {
            for v in data {
                if let Err(e) = out.write_all(&v.to_le_bytes()) {
                    ok = Err(e);
                    break;
                }
            }
        });
        ok?;
    }
    out.flush()?;
    Ok(())
}

/// Loads a checkpoint, rebuilding the network from its stored spec. Parameter
/// bytes round-trip exactly.
pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut len_bytes = [0u8; 8];
    reader.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    if header_len > 1 << 20 {
        return Err(Error::format("checkpoint header implausibly large"));
    }
    let mut header_bytes = vec![0u8; header_len];
    reader.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::format(format!("checkpoint header decode failed: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::format(format!(
            "unsupported checkpoint format '{}'",
            header.format
        )));
    }
    if header.dtype != "f64" {
        return Err(Error::format(format!(
            "unsupported checkpoint dtype '{}'",
            header.dtype
        )));
    }
    let net = Network::build(header.spec)?;
    if header.names.len() != net.params.len() {
        return Err(Error::format(format!(
            "checkpoint parameter count {} does not match spec ({})",
            header.names.len(),
            net.params.len()
        )));
    }
    for (i, (name, param)) in net.params.iter().enumerate() {
        if header.names[i] != *name || header.shapes[i] != param.shape() {
            return Err(Error::format(format!(
                "checkpoint parameter {i} ('{}' {:?}) does not match spec ('{}' {:?})",
                header.names[i],
                header.shapes[i],
                name,
                param.shape()
            )));
        }
        let numel = param.numel();
        let mut raw = vec![0u8; numel * 8];
        reader.read_exact(&mut raw)?;
        param.with_data_mut(|data| {
            for (j, chunk) in raw.chunks_exact(8).enumerate() {
                data[j] = f64::from_le_bytes(chunk.try_into().expect("chunked by 8"));
            }
        });
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(Error::format("checkpoint has trailing bytes"));
    }
    Ok(net)
}
