//! Declarative model construction and checkpoint persistence.
//!
//! The denoiser is a sequential graph described by [`LayerSpec`]s and
//! validated into a [`ModelGraph`] whose dimensions are proven consistent at
//! build time, so no shape error can occur later in forward or backward.
//!
//! Checkpoint format ("EDNC", version 1, all integers little-endian):
//!
//! ```text
//! magic      4 bytes  b"EDNC"
//! version    u32      1
//! epoch      u32      training epochs completed
//! seed       u64      training seed
//! confhash   u64      hash of the effective training configuration
//! input_len  u32
//! n_layers   u32
//! layer[i]   u8 kind (0 conv1d, 1 relu, 2 avgpool2, 3 flatten, 4 dense)
//!            conv1d: u32 channels_out, u32 kernel; dense: u32 units
//! n_tensors  u32
//! tensor[j]  u32 name length, name bytes, u32 rank, u32 dims...
//! payload    f32 little-endian, tensors in declaration order
//! ```
//!
//! Parameters live in 64-bit memory and are stored 32-bit on disk, so
//! save -> load -> save reproduces the file byte for byte.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{self, ConvLayer, DenseLayer, Gradients, Layer, TapeState, Tensor2};
use crate::error::{Error, Result};

/// Feature-map widths of the canonical denoising CNN, block by block.
pub const CANONICAL_WIDTHS: [usize; 7] = [32, 64, 128, 256, 512, 1024, 2048];

const CHECKPOINT_MAGIC: &[u8; 4] = b"EDNC";
const CHECKPOINT_VERSION: u32 = 1;

/// Declarative description of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv1d { channels_out: usize, kernel: usize },
    Relu,
    AvgPool2,
    Flatten,
    Dense { units: usize },
}

/// A validated sequential network plus its instantiated parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    input_len: usize,
}

/// Identifies one parameter group (the weights or biases of one layer).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamGroup {
    pub layer: usize,
    pub bias: bool,
}

impl ModelGraph {
    /// Validate a spec chain for a `1 x input_len` input and instantiate
    /// zeroed parameters. Call [`ModelGraph::init_params`] before training.
    pub fn build(specs: Vec<LayerSpec>, input_len: usize) -> Result<Self> {
        if input_len == 0 {
            return Err(Error::Shape("input length must be positive".into()));
        }
        let mut channels = 1usize;
        let mut len = input_len;
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let layer = match *spec {
                LayerSpec::Conv1d { channels_out, kernel } => {
                    if channels_out == 0 {
                        return Err(Error::Shape(format!("layer {i}: conv needs channels_out >= 1")));
                    }
                    let conv = ConvLayer::zeroed(channels, channels_out, kernel)?;
                    channels = channels_out;
                    Layer::Conv1d(conv)
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::AvgPool2 => {
                    if len % 2 != 0 {
                        return Err(Error::Shape(format!(
                            "layer {i}: avgpool2 needs an even length, chain reaches {len}"
                        )));
                    }
                    len /= 2;
                    Layer::AvgPool2
                }
                LayerSpec::Flatten => {
                    len *= channels;
                    channels = 1;
                    Layer::Flatten
                }
                LayerSpec::Dense { units } => {
                    if units == 0 {
                        return Err(Error::Shape(format!("layer {i}: dense needs units >= 1")));
                    }
                    if channels != 1 {
                        return Err(Error::Shape(format!(
                            "layer {i}: dense requires a flattened input, chain reaches {channels}x{len}"
                        )));
                    }
                    let dense = DenseLayer::zeroed(len, units);
                    len = units;
                    Layer::Dense(dense)
                }
            };
            layers.push(layer);
        }
        Ok(Self { specs, layers, input_len })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Output length of the chain (equals `input_len` for denoisers).
    pub fn output_len(&self) -> usize {
        let (mut channels, mut len) = (1usize, self.input_len);
        for spec in &self.specs {
            match *spec {
                LayerSpec::Conv1d { channels_out, .. } => channels = channels_out,
                LayerSpec::Relu => {}
                LayerSpec::AvgPool2 => len /= 2,
                LayerSpec::Flatten => {
                    len *= channels;
                    channels = 1;
                }
                LayerSpec::Dense { units } => len = units,
            }
        }
        channels * len
    }

    /// Time-length after each block of the chain, starting with the input
    /// length (one entry per pooling stage boundary plus the start).
    pub fn block_length_trace(&self) -> Vec<usize> {
        let mut trace = vec![self.input_len];
        let mut len = self.input_len;
        for spec in &self.specs {
            if matches!(spec, LayerSpec::AvgPool2) {
                len /= 2;
                trace.push(len);
            }
        }
        trace
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Dimension entering the dense head (the flatten width), if any.
    pub fn flatten_width(&self) -> Option<usize> {
        let mut channels = 1usize;
        let mut len = self.input_len;
        for spec in &self.specs {
            match *spec {
                LayerSpec::Conv1d { channels_out, .. } => channels = channels_out,
                LayerSpec::Relu => {}
                LayerSpec::AvgPool2 => len /= 2,
                LayerSpec::Flatten => return Some(channels * len),
                LayerSpec::Dense { .. } => return None,
            }
        }
        None
    }

    /// Seeded scaled-uniform initialization: weights from `U(-b, b)` with
    /// `b = sqrt(6 / fan_in)`, biases zero.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            let bound = match layer {
                Layer::Conv1d(c) => (6.0 / c.fan_in() as f64).sqrt(),
                Layer::Dense(d) => (6.0 / d.fan_in() as f64).sqrt(),
                _ => continue,
            };
            if let Some((weights, bias)) = layer.params_mut() {
                for w in weights.iter_mut() {
                    *w = rng.random_range(-bound..bound);
                }
                bias.fill(0.0);
            }
        }
    }

    /// All parameter groups in declaration order, with stable names like
    /// `layer12.dense.weight`.
    pub fn param_groups(&self) -> Vec<(String, ParamGroup, usize)> {
        let mut groups = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some((w, b)) = layer.params() {
                let kind = layer.kind_name();
                groups.push((
                    format!("layer{i}.{kind}.weight"),
                    ParamGroup { layer: i, bias: false },
                    w.len(),
                ));
                groups.push((
                    format!("layer{i}.{kind}.bias"),
                    ParamGroup { layer: i, bias: true },
                    b.len(),
                ));
            }
        }
        groups
    }

    pub fn group_slice(&self, g: ParamGroup) -> &[f64] {
        let (w, b) = self.layers[g.layer].params().expect("group points at a parameterized layer");
        if g.bias {
            b
        } else {
            w
        }
    }

    pub fn group_slice_mut(&mut self, g: ParamGroup) -> &mut [f64] {
        let (w, b) = self.layers[g.layer]
            .params_mut()
            .expect("group points at a parameterized layer");
        if g.bias {
            b
        } else {
            w
        }
    }

    pub fn all_params_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.params()
                .map_or(true, |(w, b)| w.iter().chain(b).all(|v| v.is_finite()))
        })
    }

    /// Forward pass recording the tape for a later backward.
    pub fn forward(&self, input: &Tensor2, tape: &mut TapeState) -> Result<Tensor2> {
        engine::forward(&self.layers, input, tape)
    }

    /// Forward pass without bookkeeping.
    pub fn forward_inference(&self, input: &Tensor2) -> Result<Tensor2> {
        engine::forward_inference(&self.layers, input)
    }

    pub fn backward(&self, grad_output: &Tensor2, tape: &mut TapeState) -> Result<Gradients> {
        engine::backward(&self.layers, grad_output, tape)
    }
}

fn scaled_width(base: usize, width_scale: f64) -> usize {
    (base as f64 * width_scale).round() as usize
}

/// Build the canonical denoising CNN: seven blocks of two k=3 convolutions
/// (each ReLU-activated), the first six followed by average pooling and the
/// last by a flatten, then one linear dense layer mapping back to the input
/// length. Widths double from `32*width_scale` to `2048*width_scale`.
///
/// `width_scale = 1` is the full-size network; fractional scales keep the
/// exact shape trace while shrinking every block for desk-scale runs.
pub fn build_novel_cnn(input_len: usize, width_scale: f64) -> Result<ModelGraph> {
    if input_len == 0 || input_len % 64 != 0 {
        return Err(Error::Shape(format!(
            "input length must be a positive multiple of 64, got {input_len}"
        )));
    }
    if !(width_scale > 0.0) || scaled_width(CANONICAL_WIDTHS[0], width_scale) == 0 {
        return Err(Error::Config(format!(
            "width scale {width_scale} shrinks the first block below one channel"
        )));
    }
    let mut specs = Vec::new();
    for (block, &base) in CANONICAL_WIDTHS.iter().enumerate() {
        let width = scaled_width(base, width_scale);
        for _ in 0..2 {
            specs.push(LayerSpec::Conv1d { channels_out: width, kernel: 3 });
            specs.push(LayerSpec::Relu);
        }
        if block < 6 {
            specs.push(LayerSpec::AvgPool2);
        } else {
            specs.push(LayerSpec::Flatten);
        }
    }
    specs.push(LayerSpec::Dense { units: input_len });
    ModelGraph::build(specs, input_len)
}

/// Generic dense/ReLU baseline ending in a linear layer back to the input
/// length. A harness stand-in, not a reproduction of any published network.
pub fn build_fcnn_baseline(
    input_len: usize,
    hidden_layers: usize,
    hidden_width: usize,
) -> Result<ModelGraph> {
    if input_len == 0 || (hidden_layers > 0 && hidden_width == 0) {
        return Err(Error::Shape("fcnn dimensions must be >= 1".into()));
    }
    let mut specs = Vec::new();
    for _ in 0..hidden_layers {
        specs.push(LayerSpec::Dense { units: hidden_width });
        specs.push(LayerSpec::Relu);
    }
    specs.push(LayerSpec::Dense { units: input_len });
    ModelGraph::build(specs, input_len)
}

/// Training provenance stored in every checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    pub epoch: u32,
    pub seed: u64,
    pub config_hash: u64,
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn tensor_shapes(model: &ModelGraph) -> Vec<(String, Vec<u32>)> {
    let mut shapes = Vec::new();
    for (i, layer) in model.layers().iter().enumerate() {
        match layer {
            Layer::Conv1d(c) => {
                shapes.push((
                    format!("layer{i}.conv1d.weight"),
                    vec![c.c_out as u32, c.c_in as u32, c.kernel as u32],
                ));
                shapes.push((format!("layer{i}.conv1d.bias"), vec![c.c_out as u32]));
            }
            Layer::Dense(d) => {
                shapes.push((
                    format!("layer{i}.dense.weight"),
                    vec![d.out_dim as u32, d.in_dim as u32],
                ));
                shapes.push((format!("layer{i}.dense.bias"), vec![d.out_dim as u32]));
            }
            _ => {}
        }
    }
    shapes
}

/// Serialize the model (32-bit parameters) plus metadata to `path`.
pub fn save_checkpoint(model: &ModelGraph, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    push_u32(&mut buf, CHECKPOINT_VERSION);
    push_u32(&mut buf, meta.epoch);
    push_u64(&mut buf, meta.seed);
    push_u64(&mut buf, meta.config_hash);
    push_u32(&mut buf, model.input_len() as u32);
    push_u32(&mut buf, model.specs().len() as u32);
    for spec in model.specs() {
        match *spec {
            LayerSpec::Conv1d { channels_out, kernel } => {
                buf.push(0);
                push_u32(&mut buf, channels_out as u32);
                push_u32(&mut buf, kernel as u32);
            }
            LayerSpec::Relu => buf.push(1),
            LayerSpec::AvgPool2 => buf.push(2),
            LayerSpec::Flatten => buf.push(3),
            LayerSpec::Dense { units } => {
                buf.push(4);
                push_u32(&mut buf, units as u32);
            }
        }
    }
    let shapes = tensor_shapes(model);
    push_u32(&mut buf, shapes.len() as u32);
    for (name, dims) in &shapes {
        push_u32(&mut buf, name.len() as u32);
        buf.extend_from_slice(name.as_bytes());
        push_u32(&mut buf, dims.len() as u32);
        for &d in dims {
            push_u32(&mut buf, d);
        }
    }
    for layer in model.layers() {
        if let Some((w, b)) = layer.params() {
            for &v in w.iter().chain(b) {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                field,
                format!(
                    "file truncated at byte {} (need {n} more bytes)",
                    self.pos
                ),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }
}

/// Load a checkpoint written by [`save_checkpoint`], rebuilding the graph
/// and validating the tensor table against it.
pub fn load_checkpoint(path: &Path) -> Result<(ModelGraph, CheckpointMeta)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };

    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::format("magic", "not an EDNC checkpoint"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            "version",
            format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let meta = CheckpointMeta {
        epoch: r.u32("epoch")?,
        seed: r.u64("seed")?,
        config_hash: r.u64("confhash")?,
    };
    let input_len = r.u32("input_len")? as usize;
    let n_layers = r.u32("n_layers")? as usize;
    let mut specs = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let field = format!("layer[{i}].kind");
        let spec = match r.u8(&field)? {
            0 => LayerSpec::Conv1d {
                channels_out: r.u32(&format!("layer[{i}].channels_out"))? as usize,
                kernel: r.u32(&format!("layer[{i}].kernel"))? as usize,
            },
            1 => LayerSpec::Relu,
            2 => LayerSpec::AvgPool2,
            3 => LayerSpec::Flatten,
            4 => LayerSpec::Dense {
                units: r.u32(&format!("layer[{i}].units"))? as usize,
            },
            k => return Err(Error::format(field, format!("unknown layer kind {k}"))),
        };
        specs.push(spec);
    }
    let mut model = ModelGraph::build(specs, input_len)?;

    let expected = tensor_shapes(&model);
    let n_tensors = r.u32("n_tensors")? as usize;
    if n_tensors != expected.len() {
        return Err(Error::format(
            "n_tensors",
            format!("{n_tensors} tensors listed, graph has {}", expected.len()),
        ));
    }
    for (j, (exp_name, exp_dims)) in expected.iter().enumerate() {
        let name_len = r.u32(&format!("tensor[{j}].name_len"))? as usize;
        let name = std::str::from_utf8(r.take(name_len, &format!("tensor[{j}].name"))?)
            .map_err(|_| Error::format(format!("tensor[{j}].name"), "invalid UTF-8"))?;
        if name != exp_name {
            return Err(Error::format(
                format!("tensor[{j}].name"),
                format!("found {name:?}, graph expects {exp_name:?}"),
            ));
        }
        let rank = r.u32(&format!("tensor[{j}].rank"))? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32(&format!("tensor[{j}].dims"))?);
        }
        if dims != *exp_dims {
            return Err(Error::format(
                format!("tensor[{j}].shape"),
                format!("found {dims:?}, graph expects {exp_dims:?}"),
            ));
        }
    }

    let n_params = model.param_count();
    let payload = r.take(n_params * 4, "payload")?;
    if r.pos != bytes.len() {
        return Err(Error::format(
            "payload",
            format!("{} trailing bytes after parameter payload", bytes.len() - r.pos),
        ));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    for layer in model.layers_mut() {
        if let Some((w, b)) = layer.params_mut() {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = values.next().expect("length checked above");
            }
        }
    }
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn novel_cnn_shape_trace_full_scale() {
        let model = build_novel_cnn(1024, 1.0).unwrap();
        assert_eq!(
            model.block_length_trace(),
            vec![1024, 512, 256, 128, 64, 32, 16]
        );
        assert_eq!(model.flatten_width(), Some(16 * 2048));
        assert_eq!(model.output_len(), 1024);
        // 14 convs, 14 relus, 6 pools, 1 flatten, 1 dense
        let count = |pred: fn(&LayerSpec) -> bool| model.specs().iter().filter(|s| pred(s)).count();
        assert_eq!(count(|s| matches!(s, LayerSpec::Conv1d { .. })), 14);
        assert_eq!(count(|s| matches!(s, LayerSpec::Relu)), 14);
        assert_eq!(count(|s| matches!(s, LayerSpec::AvgPool2)), 6);
        assert_eq!(count(|s| matches!(s, LayerSpec::Flatten)), 1);
        assert_eq!(count(|s| matches!(s, LayerSpec::Dense { .. })), 1);
    }

    #[test]
    fn novel_cnn_dense_head_size() {
        let model = build_novel_cnn(1024, 1.0).unwrap();
        let dense = model
            .layers()
            .iter()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d),
                _ => None,
            })
            .unwrap();
        assert_eq!(dense.in_dim, 32768);
        assert_eq!(dense.out_dim, 1024);
        assert_eq!(dense.weights.len(), 33_554_432);
        assert_eq!(dense.bias.len(), 1024);
    }

    #[test]
    fn novel_cnn_param_count_matches_closed_form() {
        let model = build_novel_cnn(1024, 1.0).unwrap();
        // Closed-form sum over the block schedule.
        let mut expected = 0usize;
        let mut c_in = 1usize;
        for &w in &CANONICAL_WIDTHS {
            expected += w * c_in * 3 + w; // first conv of the block
            expected += w * w * 3 + w; // second conv
            c_in = w;
        }
        expected += 32768 * 1024 + 1024; // dense head
        assert_eq!(model.param_count(), expected);
    }

    #[test]
    fn novel_cnn_scaled_keeps_trace() {
        let model = build_novel_cnn(1024, 1.0 / 16.0).unwrap();
        assert_eq!(
            model.block_length_trace(),
            vec![1024, 512, 256, 128, 64, 32, 16]
        );
        let widths: Vec<usize> = model
            .specs()
            .iter()
            .filter_map(|s| match s {
                LayerSpec::Conv1d { channels_out, .. } => Some(*channels_out),
                _ => None,
            })
            .collect();
        assert_eq!(widths, vec![2, 2, 4, 4, 8, 8, 16, 16, 32, 32, 64, 64, 128, 128]);
    }

    #[test]
    fn novel_cnn_rejects_bad_input_len_and_scale() {
        assert!(matches!(build_novel_cnn(1000, 1.0), Err(Error::Shape(_))));
        assert!(matches!(build_novel_cnn(0, 1.0), Err(Error::Shape(_))));
        assert!(matches!(
            build_novel_cnn(1024, 1.0 / 128.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn fcnn_baseline_shapes() {
        let single = build_fcnn_baseline(1024, 0, 0).unwrap();
        assert_eq!(single.specs().len(), 1);
        assert_eq!(single.param_count(), 1024 * 1024 + 1024);

        let stacked = build_fcnn_baseline(1024, 3, 1024).unwrap();
        assert_eq!(stacked.param_count(), 4 * (1024 * 1024 + 1024));
        assert_eq!(stacked.output_len(), 1024);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let mut a = build_novel_cnn(128, 1.0 / 16.0).unwrap();
        let mut b = a.clone();
        a.init_params(7);
        b.init_params(7);
        assert_eq!(a, b);
        let mut c = a.clone();
        c.init_params(8);
        assert_ne!(a, c);
    }

    #[test]
    fn init_matches_uniform_moments() {
        // One dense layer big enough for a 10k-sample moment check.
        let mut model = build_fcnn_baseline(100, 1, 100).unwrap();
        model.init_params(3);
        let (w, _) = model.layers()[0].params().unwrap();
        assert_eq!(w.len(), 10_000);
        let bound = (6.0 / 100.0f64).sqrt();
        assert!(w.iter().all(|v| v.abs() < bound));
        let std = crate::signal::std_slice(w);
        let expected = bound / 3.0f64.sqrt();
        assert!((std - expected).abs() / expected < 0.05, "std {std} vs {expected}");
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("a.ednc");
        let p2 = dir.path().join("b.ednc");
        let mut model = build_novel_cnn(128, 1.0 / 16.0).unwrap();
        model.init_params(5);
        let meta = CheckpointMeta { epoch: 3, seed: 5, config_hash: 0xABCD };
        save_checkpoint(&model, &meta, &p1).unwrap();
        let (loaded, meta2) = load_checkpoint(&p1).unwrap();
        assert_eq!(meta, meta2);
        save_checkpoint(&loaded, &meta2, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn checkpoint_reload_preserves_forward_within_f32() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ednc");
        let mut model = build_novel_cnn(128, 1.0 / 16.0).unwrap();
        model.init_params(11);
        save_checkpoint(&model, &CheckpointMeta::default(), &path).unwrap();
        let (loaded, _) = load_checkpoint(&path).unwrap();

        let input = Tensor2::from_signal(
            &(0..128).map(|i| ((i as f64) * 0.17).sin()).collect::<Vec<_>>(),
        );
        let a = model.forward_inference(&input).unwrap();
        let b = loaded.forward_inference(&input).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            let rel = (x - y).abs() / x.abs().max(1e-3);
            assert!(rel < 1e-5, "forward drifted: {x} vs {y}");
        }
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ednc");
        let mut model = build_fcnn_baseline(8, 1, 4).unwrap();
        model.init_params(1);
        save_checkpoint(&model, &CheckpointMeta::default(), &path).unwrap();
        let good = fs::read(&path).unwrap();

        // wrong magic
        let mut bad = good.clone();
        bad[0] = b'X';
        fs::write(&path, &bad).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "magic"),
            other => panic!("expected magic error, got {other:?}"),
        }

        // wrong version
        let mut bad = good.clone();
        bad[4] = 9;
        fs::write(&path, &bad).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "version"),
            other => panic!("expected version error, got {other:?}"),
        }

        // truncated payload
        let bad = &good[..good.len() - 5];
        fs::write(&path, bad).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "payload"),
            other => panic!("expected payload error, got {other:?}"),
        }

        // trailing garbage
        let mut bad = good.clone();
        bad.extend_from_slice(&[0, 1, 2]);
        fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));
    }
}
