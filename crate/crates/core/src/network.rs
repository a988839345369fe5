//! Dense hashing network: a ReLU feature stack, a hash layer of width `d`
//! squashed onto (-1, 1), the smoothed ternary activation, and a linear
//! classifier head trained with softmax cross-entropy.
//!
//! Backpropagation is written out by hand; every parameter gradient is exact
//! for the composed loss and is checked against finite differences in tests.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activation::{gap_value, smooth_grad, smooth_value, validate_k, ActivationConfig, ContinuationSchedule};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TNH1";

/// Mixed into the network seed for the shuffling stream.
const SHUFFLE_STREAM: u64 = 0x5348_5546_464c_4531;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub code_dim: usize,
    pub num_classes: usize,
    pub activation: ActivationConfig,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.code_dim == 0 || self.num_classes == 0 {
            return Err(Error::config("input_dim, code_dim and num_classes must be positive"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer: hidden stack, hash layer, head.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 3);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.code_dim);
        dims.push(self.num_classes);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Fully connected layer `y = x·W + b` with `W` stored `[fan_in × fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    fn shape(&self) -> (usize, usize) {
        self.weight.dim()
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }
}

/// What sits between the squashed hash output and the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashActivation {
    /// `tanh((x/α)^k)` with the given odd `k`.
    Smooth(u32),
    /// Pass-through; features are learned without any ternary layer.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Hash-layer output after the tanh squash, in (-1, 1).
    pub hash_pre: Array2<f64>,
    pub hash_act: Array2<f64>,
    pub logits: Array2<f64>,
}

/// Parameter-shaped container; used for gradients and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backward {
    pub loss: f64,
    pub grads: Gradients,
    pub output: ForwardOutput,
}

/// Layers in order: hidden stack, then the hash layer, then the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<Dense>,
}

struct Tape {
    /// Input to every layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-ReLU values of the hidden layers.
    hidden_pre: Vec<Array2<f64>>,
    output: ForwardOutput,
}

impl Network {
    /// Xavier-uniform weights, zero biases, values rounded to f32 so the
    /// network round-trips through a checkpoint unchanged.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_in, fan_out), |_| f64::from(rng.random_range(-limit..limit) as f32));
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { config, layers })
    }

    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Dense::zeros(i, o))
            .collect();
        Ok(Self { config, layers })
    }

    pub fn from_layers(config: NetworkConfig, layers: Vec<Dense>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        let got: Vec<_> = layers.iter().map(Dense::shape).collect();
        if got != shapes || layers.iter().any(|l| l.bias.len() != l.weight.ncols()) {
            return Err(Error::ShapeMismatch {
                expected: format!("{shapes:?}"),
                got: format!("{got:?}"),
            });
        }
        if layers.iter().flat_map(Dense::values).any(|v| !v.is_finite()) {
            return Err(Error::config("network parameters must be finite"));
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::values)
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Dense::values_mut)
    }

    pub fn zero_like(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    let (i, o) = l.shape();
                    Dense::zeros(i, o)
                })
                .collect(),
        }
    }

    fn round_to_f32(&mut self) {
        for p in self.parameters_mut() {
            *p = f64::from(*p as f32);
        }
    }

    fn check_batch(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.config.input_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("batch with {} columns", self.config.input_dim),
                got: format!("{} columns", batch.ncols()),
            });
        }
        if let Some(&x) = batch.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(x));
        }
        Ok(())
    }

    fn run(&self, batch: ArrayView2<f64>, act: HashActivation) -> Result<Tape> {
        self.check_batch(&batch)?;
        if let HashActivation::Smooth(k) = act {
            validate_k(k)?;
        }
        let n_hidden = self.config.hidden_dims.len();
        let mut inputs = Vec::with_capacity(n_hidden + 2);
        let mut hidden_pre = Vec::with_capacity(n_hidden);
        let mut x = batch.to_owned();
        for layer in &self.layers[..n_hidden] {
            let z = layer.apply(&x.view());
            let a = z.mapv(|v| v.max(0.0));
            inputs.push(x);
            hidden_pre.push(z);
            x = a;
        }
        let hash_pre = self.layers[n_hidden].apply(&x.view()).mapv(f64::tanh);
        inputs.push(x);
        let alpha = self.config.activation.alpha();
        let hash_act = match act {
            HashActivation::Smooth(k) => hash_pre.mapv(|v| smooth_value(v, alpha, k)),
            HashActivation::Identity => hash_pre.clone(),
        };
        let logits = self.layers[n_hidden + 1].apply(&hash_act.view());
        inputs.push(hash_act.clone());
        Ok(Tape {
            inputs,
            hidden_pre,
            output: ForwardOutput {
                hash_pre,
                hash_act,
                logits,
            },
        })
    }

    /// Forward pass with the smoothed ternary activation at sharpness `k`.
    pub fn forward(&self, batch: ArrayView2<f64>, k: u32) -> Result<ForwardOutput> {
        self.forward_with(batch, HashActivation::Smooth(k))
    }

    pub fn forward_with(&self, batch: ArrayView2<f64>, act: HashActivation) -> Result<ForwardOutput> {
        self.run(batch, act).map(|t| t.output)
    }

    /// Squashed hash-layer output only; this is what gets ternarized at test time.
    pub fn hash_features(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.forward_with(batch, HashActivation::Identity).map(|o| o.hash_pre)
    }

    pub fn loss(&self, batch: ArrayView2<f64>, labels: &[usize], act: HashActivation) -> Result<f64> {
        let out = self.forward_with(batch, act)?;
        cross_entropy(&out.logits.view(), labels)
    }

    /// Loss and exact gradients of `cross_entropy ∘ forward` for every parameter.
    pub fn backward(&self, batch: ArrayView2<f64>, labels: &[usize], act: HashActivation) -> Result<Backward> {
        let tape = self.run(batch, act)?;
        let logits = &tape.output.logits;
        let (loss, mut delta) = softmax_cross_entropy(&logits.view(), labels)?;
        let n_layers = self.layers.len();
        let n_hidden = n_layers - 2;
        let alpha = self.config.activation.alpha();
        let mut grads: Vec<Option<Dense>> = vec![None; n_layers];

        for li in (0..n_layers).rev() {
            let input = &tape.inputs[li];
            grads[li] = Some(Dense {
                weight: input.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if li == 0 {
                break;
            }
            let mut upstream = delta.dot(&self.layers[li].weight.t());
            if li == n_hidden + 1 {
                // through the hash activation and the tanh squash
                let pre = &tape.output.hash_pre;
                Zip::from(&mut upstream).and(pre).for_each(|g, &p| {
                    let act_grad = match act {
                        HashActivation::Smooth(k) => smooth_grad(p, alpha, k),
                        HashActivation::Identity => 1.0,
                    };
                    *g *= act_grad * (1.0 - p * p);
                });
            } else {
                Zip::from(&mut upstream)
                    .and(&tape.hidden_pre[li - 1])
                    .for_each(|g, &z| {
                        if z <= 0.0 {
                            *g = 0.0;
                        }
                    });
            }
            delta = upstream;
        }

        Ok(Backward {
            loss,
            grads: Gradients {
                layers: grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
            },
            output: tape.output,
        })
    }
}

fn check_labels(n_rows: usize, n_classes: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != n_rows {
        return Err(Error::ShapeMismatch {
            expected: format!("{n_rows} labels"),
            got: labels.len().to_string(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::OutOfRange {
            what: "label",
            value: bad,
            limit: n_classes,
        });
    }
    Ok(())
}

/// Mean loss and `(softmax - onehot) / B`.
fn softmax_cross_entropy(logits: &ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (b, c) = logits.dim();
    check_labels(b, c, labels)?;
    if b == 0 {
        return Err(Error::Empty("batch"));
    }
    let mut delta = Array2::zeros((b, c));
    let mut total = 0.0;
    for (i, (row, mut drow)) in logits.outer_iter().zip(delta.outer_iter_mut()).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[labels[i]];
        for (d, &v) in drow.iter_mut().zip(row.iter()) {
            *d = (v - log_z).exp() / b as f64;
        }
        drow[labels[i]] -= 1.0 / b as f64;
    }
    Ok((total / b as f64, delta))
}

/// Mean over the batch of `-log softmax(logits)[label]`, computed with the
/// row maximum subtracted.
pub fn cross_entropy(logits: &ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    softmax_cross_entropy(logits, labels).map(|(l, _)| l)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: ContinuationSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 64,
            lr0: 1e-3,
            momentum: 0.9,
            weight_decay: 1e-4,
            schedule: ContinuationSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be positive"));
        }
        if !(self.lr0.is_finite() && self.lr0 >= 0.0) {
            return Err(Error::config(format!("lr0 must be finite and >= 0, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be finite and >= 0"));
        }
        if self.schedule.total_epochs() != self.epochs {
            return Err(Error::config(format!(
                "schedule covers {} epochs but training runs {}",
                self.schedule.total_epochs(),
                self.epochs
            )));
        }
        Ok(())
    }
}

/// `lr0 · ½ · (1 + cos(π · epoch / epochs))`.
pub fn cosine_lr(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::OutOfRange {
            what: "epoch",
            value: epoch,
            limit: cfg.epochs,
        });
    }
    let t = epoch as f64 / cfg.epochs as f64;
    Ok(cfg.lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub velocity: Gradients,
    pub epoch: usize,
    pub k: u32,
    rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(net: &Network, k: u32) -> Self {
        Self {
            velocity: net.zero_like(),
            epoch: 0,
            k,
            rng: ChaCha8Rng::seed_from_u64(net.config.seed ^ SHUFFLE_STREAM),
        }
    }
}

/// `v ← μ·v + (g + λ·p)`, `p ← p − lr·v`, applied to every weight and bias.
pub fn sgd_momentum_step(
    net: &mut Network,
    state: &mut TrainState,
    grads: &Gradients,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    let shapes_match = |a: &[Dense], b: &[Dense]| {
        a.len() == b.len()
            && a.iter()
                .zip(b)
                .all(|(x, y)| x.shape() == y.shape() && x.bias.len() == y.bias.len())
    };
    if !shapes_match(&net.layers, &grads.layers) || !shapes_match(&net.layers, &state.velocity.layers) {
        return Err(Error::ShapeMismatch {
            expected: "gradients and buffers shaped like the network".into(),
            got: "different layer shapes".into(),
        });
    }
    let params = net.layers.iter_mut().flat_map(Dense::values_mut);
    let vel = state.velocity.layers.iter_mut().flat_map(Dense::values_mut);
    let g = grads.layers.iter().flat_map(Dense::values);
    for ((p, v), &g) in params.zip(vel).zip(g) {
        *v = momentum * *v + (g + weight_decay * *p);
        *p -= lr * *v;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    /// Smoothed ternary layer sharpened by the continuation schedule.
    Continuation,
    /// Identity in place of the ternary layer; threshold afterwards.
    TwoStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub k: u32,
    pub lr: f64,
    /// Mean training loss over the epoch's mini-batches.
    pub loss: f64,
    /// Mean `|f_k(h) − g(h)|` over the training samples seen this epoch.
    pub quant_error: f64,
    /// Same metric on the monitor set, recorded at the end of each stage.
    pub monitor_quant_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    /// `(k, monitor quantization error)` at every stage end that has one.
    pub fn stage_errors(&self) -> Vec<(u32, f64)> {
        self.epochs
            .iter()
            .filter_map(|e| e.monitor_quant_error.map(|q| (e.k, q)))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("epoch k lr loss quant_error monitor_quant_error\n");
        for e in &self.epochs {
            let monitor = e
                .monitor_quant_error
                .map_or_else(|| "-".to_string(), |q| format!("{q:.6e}"));
            out.push_str(&format!(
                "{} {} {:.6e} {:.6} {:.6e} {}\n",
                e.epoch, e.k, e.lr, e.loss, e.quant_error, monitor
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions<'a> {
    pub arm: Arm,
    /// Extra feature rows whose quantization error is logged at stage ends.
    pub monitor: Option<ArrayView2<'a, f64>>,
}

impl Default for TrainOptions<'_> {
    fn default() -> Self {
        Self {
            arm: Arm::Continuation,
            monitor: None,
        }
    }
}

/// Mean quantization error of the squashed hash features of `features`.
pub fn mean_quantization_error(net: &Network, features: ArrayView2<f64>, k: u32) -> Result<f64> {
    validate_k(k)?;
    let alpha = net.config.activation.alpha();
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in features.axis_chunks_iter(Axis(0), 512) {
        let h = net.hash_features(chunk)?;
        total += h.iter().map(|&v| gap_value(v, alpha, k)).sum::<f64>();
        count += h.len();
    }
    if count == 0 {
        return Err(Error::Empty("feature set"));
    }
    Ok(total / count as f64)
}

/// Continuation training with default options.
pub fn train(
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    features: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(Network, TrainLog)> {
    train_with(net_cfg, train_cfg, features, labels, TrainOptions::default())
}

/// Mini-batch SGD with momentum, cosine learning-rate decay and `k` taken from
/// the schedule at each epoch boundary. Fully determined by the network seed.
pub fn train_with(
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    features: ArrayView2<f64>,
    labels: &[usize],
    opts: TrainOptions<'_>,
) -> Result<(Network, TrainLog)> {
    train_cfg.validate()?;
    let n = features.nrows();
    if n == 0 {
        return Err(Error::Empty("training set"));
    }
    check_labels(n, net_cfg.num_classes, labels)?;
    let mut net = Network::new(net_cfg.clone())?;
    net.check_batch(&features)?;
    if let Some(m) = &opts.monitor {
        net.check_batch(m)?;
    }

    let schedule = &train_cfg.schedule;
    let alpha = net_cfg.activation.alpha();
    let mut state = TrainState::new(&net, schedule.k_start());
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog::default();
    let d = net_cfg.code_dim;

    for epoch in 0..train_cfg.epochs {
        let k = schedule.k_at(epoch)?;
        let lr = cosine_lr(epoch, train_cfg)?;
        state.epoch = epoch;
        state.k = k;
        let act = match opts.arm {
            Arm::Continuation => HashActivation::Smooth(k),
            Arm::TwoStep => HashActivation::Identity,
        };
        order.shuffle(&mut state.rng);

        let mut loss_sum = 0.0;
        let mut gap_sum = 0.0;
        for ids in order.chunks(train_cfg.batch_size) {
            let batch = features.select(Axis(0), ids);
            let batch_labels: Vec<usize> = ids.iter().map(|&i| labels[i]).collect();
            let step = net.backward(batch.view(), &batch_labels, act)?;
            loss_sum += step.loss * ids.len() as f64;
            gap_sum += step
                .output
                .hash_pre
                .iter()
                .map(|&v| gap_value(v, alpha, k))
                .sum::<f64>();
            sgd_momentum_step(
                &mut net,
                &mut state,
                &step.grads,
                lr,
                train_cfg.momentum,
                train_cfg.weight_decay,
            )?;
        }

        let monitor_quant_error = match (&opts.monitor, schedule.is_stage_end(epoch)) {
            (Some(m), true) => Some(mean_quantization_error(&net, m.view(), k)?),
            _ => None,
        };
        let loss = loss_sum / n as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(loss));
        }
        log.epochs.push(EpochLog {
            epoch,
            k,
            lr,
            loss,
            quant_error: gap_sum / (n * d) as f64,
            monitor_quant_error,
        });
    }
    net.round_to_f32();
    Ok((net, log))
}

/// A network plus the schedule it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub schedule: ContinuationSchedule,
}

fn put_u32<W: Write>(w: &mut W, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::format("TNH1", format!("{what} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

/// Writes `TNH1`: magic; `u32` input_dim, hidden count, hidden widths,
/// code_dim, num_classes; `f64` α; `u32` k; `u32` k_start, k_end, stride,
/// total epochs; `u64` seed; then every layer's weights (row-major
/// `[fan_in × fan_out]`) followed by its biases as `f32`. All little-endian.
pub fn write_checkpoint<W: Write>(mut w: W, net: &Network, schedule: &ContinuationSchedule) -> Result<()> {
    let c = &net.config;
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(&mut w, c.input_dim, "input_dim")?;
    put_u32(&mut w, c.hidden_dims.len(), "hidden layer count")?;
    for &h in &c.hidden_dims {
        put_u32(&mut w, h, "hidden width")?;
    }
    put_u32(&mut w, c.code_dim, "code_dim")?;
    put_u32(&mut w, c.num_classes, "num_classes")?;
    w.write_all(&c.activation.alpha().to_le_bytes())?;
    w.write_all(&c.activation.k().to_le_bytes())?;
    for v in [schedule.k_start(), schedule.k_end()] {
        w.write_all(&v.to_le_bytes())?;
    }
    put_u32(&mut w, schedule.stride_epochs(), "stride_epochs")?;
    put_u32(&mut w, schedule.total_epochs(), "total_epochs")?;
    w.write_all(&c.seed.to_le_bytes())?;
    for &p in net.parameters() {
        w.write_all(&(p as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::format("TNH1", "truncated file"))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        self.bytes::<4>().map(u32::from_le_bytes)
    }

    fn usize(&mut self) -> Result<usize> {
        self.u32().map(|v| v as usize)
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Checkpoint> {
    let mut r = Reader { inner: r };
    if &r.bytes::<4>()? != CHECKPOINT_MAGIC {
        return Err(Error::format("TNH1", "bad magic"));
    }
    let input_dim = r.usize()?;
    let n_hidden = r.usize()?;
    if n_hidden > 1024 {
        return Err(Error::format("TNH1", "implausible hidden layer count"));
    }
    let hidden_dims = (0..n_hidden).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let code_dim = r.usize()?;
    let num_classes = r.usize()?;
    let alpha = f64::from_le_bytes(r.bytes::<8>()?);
    let k = r.u32()?;
    let activation = ActivationConfig::new(alpha, k)?;
    let (k_start, k_end) = (r.u32()?, r.u32()?);
    let (stride, total) = (r.usize()?, r.usize()?);
    let schedule = ContinuationSchedule::new(k_start, k_end, stride, total)?;
    let seed = u64::from_le_bytes(r.bytes::<8>()?);
    let config = NetworkConfig {
        input_dim,
        hidden_dims,
        code_dim,
        num_classes,
        activation,
        seed,
    };
    let mut network = Network::zeros(config)?;
    for p in network.parameters_mut() {
        *p = f64::from(f32::from_le_bytes(r.bytes::<4>()?));
    }
    if network.parameters().any(|v| !v.is_finite()) {
        return Err(Error::format("TNH1", "non-finite parameter"));
    }
    let mut rest = [0u8; 1];
    if r.inner.read(&mut rest)? != 0 {
        return Err(Error::format("TNH1", "trailing bytes"));
    }
    Ok(Checkpoint { network, schedule })
}
