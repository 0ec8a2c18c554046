//! Task classifier: a small from-scratch CNN emitting per-class log-probabilities.
//!
//! Parameters live outside the graph as plain `f32` buffers ([`ParamSet`]) and are
//! bound into a fresh [`Graph`] once per step, so the tape never outlives a step.
//! The same machinery backs the localization network in [`crate::stn`].
//!
//! Checkpoints are a versioned structured-text dump of named tensors. Values are
//! written with Rust's shortest-roundtrip float formatting, so save → load is
//! bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::data::ImageBatch;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{stream_rng, Stream};
use crate::stn::LocalizationNet;
use crate::tensor::{Graph, Padding, Tensor};

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

/// An ordered collection of named parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    pub entries: Vec<ParamEntry>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, shape: &[usize], values: Vec<f32>) {
        assert_eq!(shape.iter().product::<usize>(), values.len(), "{name}");
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            values,
        });
    }

    pub fn find(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    /// Insert every entry as a trainable leaf; handle order matches entry order.
    pub fn bind(&self, g: &mut Graph<f32>) -> Vec<Tensor> {
        self.entries
            .iter()
            .map(|e| g.leaf(e.values.clone(), &e.shape, true).expect("entry shape matches values"))
            .collect()
    }

    /// Insert every entry as a frozen constant (inference / fixed nets).
    pub fn bind_frozen(&self, g: &mut Graph<f32>) -> Vec<Tensor> {
        self.entries
            .iter()
            .map(|e| g.constant(e.values.clone(), &e.shape).expect("entry shape matches values"))
            .collect()
    }

    /// One plain-SGD step from the gradients accumulated in `g`.
    ///
    /// Returns the L2 norm of the applied update, which is exactly 0 when every
    /// gradient is exactly 0 (no epsilon drift: `v -= lr * 0` is a no-op bitwise).
    pub fn sgd_step(&mut self, g: &Graph<f32>, handles: &[Tensor], lr: f32) -> Result<f32> {
        if handles.len() != self.entries.len() {
            return Err(Error::InvalidArg(format!(
                "sgd_step: {} handles for {} parameter tensors",
                handles.len(),
                self.entries.len()
            )));
        }
        let mut sq = 0.0f64;
        for (entry, &h) in self.entries.iter_mut().zip(handles) {
            let grad = g.grad(h).ok_or_else(|| {
                Error::InvalidArg(format!("sgd_step: handle for {} is not trainable", entry.name))
            })?;
            for (v, &gv) in entry.values.iter_mut().zip(grad) {
                let step = lr * gv;
                *v -= step;
                sq += (step as f64) * (step as f64);
            }
        }
        Ok(sq.sqrt() as f32)
    }
}

/// Fan-in scaled uniform init: U(−√(6/fan_in), √(6/fan_in)), i.e. std √(2/fan_in).
fn kaiming_uniform(rng: &mut impl Rng, fan_in: usize, n: usize) -> Vec<f32> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..=limit) as f32).collect()
}

/// The task classifier p(y|x; θ_m):
/// conv(16) → pool → relu → conv(32) → pool → relu → dense(64) → relu → dense(K),
/// log-softmax on top. Convolutions are 3×3, same padding; pooling is 2×2 max.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub num_classes: usize,
    pub channels: usize,
    pub size: usize,
    pub params: ParamSet,
}

impl Classifier {
    /// 32·(size/4)² features after the two conv/pool stages.
    pub fn flat_features(size: usize) -> usize {
        32 * (size / 4) * (size / 4)
    }

    /// Deterministic fan-in scaled init; biases start at zero.
    pub fn init(seed: u64, num_classes: usize, channels: usize, size: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArg(format!(
                "classifier needs at least 2 classes, got {num_classes}"
            )));
        }
        if size < 8 || size % 4 != 0 {
            return Err(Error::InvalidArg(format!(
                "input size must be a multiple of 4 and at least 8, got {size}"
            )));
        }
        let flat = Self::flat_features(size);
        let mut params = ParamSet::new();
        let mut rng = stream_rng(seed, Stream::Init, 0);
        params.push("conv1.w", &[16, channels, 3, 3], kaiming_uniform(&mut rng, channels * 9, 16 * channels * 9));
        params.push("conv1.b", &[16], vec![0.0; 16]);
        let mut rng = stream_rng(seed, Stream::Init, 1);
        params.push("conv2.w", &[32, 16, 3, 3], kaiming_uniform(&mut rng, 16 * 9, 32 * 16 * 9));
        params.push("conv2.b", &[32], vec![0.0; 32]);
        let mut rng = stream_rng(seed, Stream::Init, 2);
        params.push("fc1.w", &[flat, 64], kaiming_uniform(&mut rng, flat, flat * 64));
        params.push("fc1.b", &[64], vec![0.0; 64]);
        let mut rng = stream_rng(seed, Stream::Init, 3);
        params.push("fc2.w", &[64, num_classes], kaiming_uniform(&mut rng, 64, 64 * num_classes));
        params.push("fc2.b", &[num_classes], vec![0.0; num_classes]);
        Ok(Self { num_classes, channels, size, params })
    }

    pub fn bind(&self, g: &mut Graph<f32>) -> Vec<Tensor> {
        self.params.bind(g)
    }

    pub fn bind_frozen(&self, g: &mut Graph<f32>) -> Vec<Tensor> {
        self.params.bind_frozen(g)
    }

    /// Forward to log-probabilities for an input tensor of shape [N, C, S, S].
    /// `h` must come from `bind`/`bind_frozen` on this classifier.
    pub fn logprobs(&self, g: &mut Graph<f32>, h: &[Tensor], x: Tensor) -> Result<Tensor> {
        let n = g.shape(x)[0];
        let c1 = g.conv2d(x, h[0], Padding::Same)?;
        let c1 = g.add_bias(c1, h[1])?;
        let c1 = g.max_pool2(c1)?;
        let c1 = g.relu(c1)?;
        let c2 = g.conv2d(c1, h[2], Padding::Same)?;
        let c2 = g.add_bias(c2, h[3])?;
        let c2 = g.max_pool2(c2)?;
        let c2 = g.relu(c2)?;
        let flat = g.reshape(c2, &[n, Self::flat_features(self.size)])?;
        let f1 = g.matmul(flat, h[4])?;
        let f1 = g.add_bias(f1, h[5])?;
        let f1 = g.relu(f1)?;
        let f2 = g.matmul(f1, h[6])?;
        let f2 = g.add_bias(f2, h[7])?;
        g.log_softmax(f2)
    }

    /// Inference convenience: builds a private frozen graph and returns the
    /// per-sample log-probability rows.
    pub fn predict_logprobs(&self, batch: &ImageBatch) -> Result<Vec<Vec<f32>>> {
        let mut g = Graph::new();
        let x = batch_input(&mut g, batch)?;
        let h = self.bind_frozen(&mut g);
        let lp = self.logprobs(&mut g, &h, x)?;
        let rows = g.data(lp);
        Ok(rows.chunks(self.num_classes).map(<[f32]>::to_vec).collect())
    }

    /// Argmax class per sample.
    pub fn predict_classes(&self, batch: &ImageBatch) -> Result<Vec<usize>> {
        Ok(self
            .predict_logprobs(batch)?
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(k, _)| k)
                    .unwrap()
            })
            .collect())
    }
}

/// Pack a batch of same-shaped images into one [N, C, H, W] constant.
pub fn batch_input(g: &mut Graph<f32>, batch: &ImageBatch) -> Result<Tensor> {
    if batch.images.is_empty() {
        return Err(Error::InvalidArg("empty batch".into()));
    }
    let (c, h, w) = {
        let i0 = &batch.images[0];
        (i0.channels, i0.height, i0.width)
    };
    let mut data = Vec::with_capacity(batch.images.len() * c * h * w);
    for img in &batch.images {
        if img.channels != c || img.height != h || img.width != w {
            return Err(Error::ShapeMismatch {
                op: "batch_input",
                details: format!(
                    "mixed image shapes in batch: {}x{}x{} vs {}x{}x{}",
                    c, h, w, img.channels, img.height, img.width
                ),
            });
        }
        data.extend_from_slice(&img.data);
    }
    g.constant(data, &[batch.images.len(), c, h, w])
}

/// Unpack an [N, C, H, W] tensor's forward value into images.
pub fn tensor_images(g: &Graph<f32>, t: Tensor) -> Result<Vec<Image>> {
    let shape = g.shape(t).to_vec();
    if shape.len() != 4 {
        return Err(Error::ShapeMismatch {
            op: "tensor_images",
            details: format!("expected [N,C,H,W], got {shape:?}"),
        });
    }
    let (c, h, w) = (shape[1], shape[2], shape[3]);
    g.data(t)
        .chunks(c * h * w)
        .map(|chunk| Image::from_data(c, h, w, chunk.to_vec()))
        .collect()
}

const CHECKPOINT_MAGIC: &str = "advaug-checkpoint v1";

/// Classifier plus (optionally) the adversarial localization net, as one file.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub classifier: Classifier,
    pub stn: Option<LocalizationNet>,
}

fn write_params(out: &mut String, params: &ParamSet) {
    for e in &params.entries {
        // rank precedes the dims so integer-valued floats below can never be
        // mistaken for shape entries
        write!(out, "tensor {} {}", e.name, e.shape.len()).unwrap();
        for d in &e.shape {
            write!(out, " {d}").unwrap();
        }
        out.push('\n');
        for (i, v) in e.values.iter().enumerate() {
            if i > 0 {
                out.push(if i % 16 == 0 { '\n' } else { ' ' });
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
}

struct CheckpointParser<'a> {
    tokens: std::iter::Peekable<std::str::SplitWhitespace<'a>>,
}

impl<'a> CheckpointParser<'a> {
    fn bad(msg: impl Into<String>) -> Error {
        Error::Checkpoint(msg.into())
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.tokens
            .next()
            .ok_or_else(|| Self::bad(format!("unexpected end of file, wanted {what}")))
    }

    /// Parse `tensor <name> <rank> <d0> <d1> ...` blocks until a non-`tensor`
    /// keyword.
    fn params(&mut self) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        while self.tokens.peek() == Some(&"tensor") {
            self.tokens.next();
            let name = self.next("tensor name")?;
            let rank: usize = self
                .next("tensor rank")?
                .parse()
                .map_err(|_| Self::bad(format!("bad rank in tensor {name}")))?;
            if rank == 0 || rank > 8 {
                return Err(Self::bad(format!("tensor {name} has implausible rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let tok = self.next("shape dim")?;
                shape.push(tok.parse::<usize>().map_err(|_| {
                    Self::bad(format!("bad shape dim {tok:?} in tensor {name}"))
                })?);
            }
            let n: usize = shape.iter().product();
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                let tok = self.next("tensor value")?;
                values.push(tok.parse::<f32>().map_err(|_| {
                    Self::bad(format!("bad float {tok:?} in tensor {name}"))
                })?);
            }
            set.push(name, &shape, values);
        }
        Ok(set)
    }

    /// Parse `key=value` pairs until the next bare keyword.
    fn meta(&mut self) -> Result<BTreeMap<&'a str, usize>> {
        let mut map = BTreeMap::new();
        while let Some(tok) = self.tokens.peek() {
            let Some((k, v)) = tok.split_once('=') else { break };
            let v = v
                .parse::<usize>()
                .map_err(|_| Self::bad(format!("bad meta value {tok:?}")))?;
            map.insert(k, v);
            self.tokens.next();
        }
        Ok(map)
    }
}

fn meta_get(map: &BTreeMap<&str, usize>, key: &str) -> Result<usize> {
    map.get(key)
        .copied()
        .ok_or_else(|| Error::Checkpoint(format!("missing meta key {key}")))
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(CHECKPOINT_MAGIC);
        out.push('\n');
        let c = &self.classifier;
        writeln!(
            out,
            "classifier num_classes={} channels={} size={}",
            c.num_classes, c.channels, c.size
        )
        .unwrap();
        write_params(&mut out, &c.params);
        if let Some(stn) = &self.stn {
            writeln!(out, "stn channels={} size={}", stn.channels, stn.size).unwrap();
            write_params(&mut out, &stn.params);
        }
        out.push_str("end\n");
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let Some(rest) = text.strip_prefix(CHECKPOINT_MAGIC) else {
            return Err(Error::Checkpoint(format!(
                "{}: not an advaug checkpoint (bad magic line)",
                path.display()
            )));
        };
        let mut p = CheckpointParser { tokens: rest.split_whitespace().peekable() };
        if p.next("'classifier'")? != "classifier" {
            return Err(CheckpointParser::bad("expected classifier section"));
        }
        let meta = p.meta()?;
        let classifier = Classifier {
            num_classes: meta_get(&meta, "num_classes")?,
            channels: meta_get(&meta, "channels")?,
            size: meta_get(&meta, "size")?,
            params: p.params()?,
        };
        let stn = match p.next("'stn' or 'end'")? {
            "stn" => {
                let meta = p.meta()?;
                let net = LocalizationNet {
                    channels: meta_get(&meta, "channels")?,
                    size: meta_get(&meta, "size")?,
                    params: p.params()?,
                };
                if p.next("'end'")? != "end" {
                    return Err(CheckpointParser::bad("expected end after stn section"));
                }
                Some(net)
            }
            "end" => None,
            other => {
                return Err(CheckpointParser::bad(format!(
                    "expected 'stn' or 'end', got {other:?}"
                )))
            }
        };
        Ok(Self { classifier, stn })
    }
}
