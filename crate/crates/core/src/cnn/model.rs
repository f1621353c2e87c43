//! Network definition, forward pass and backpropagation.
//!
//! Layout: activations are `[batch, channels, length]` row-major. Each conv
//! block is `conv1d(same) -> batchnorm -> relu -> maxpool(pool, stride pool)`;
//! the head averages each channel over length (or flattens) into one
//! fully-connected layer followed by softmax. Convolutions
//! carry no bias because the batchnorm shift absorbs it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cnn::{Real, Tensor};
use crate::error::{Error, Result};

pub(crate) const BN_EPS: f64 = 1e-5;

/// One convolution block's filter count and kernel width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
}

/// How the last block's feature map reaches the fully-connected layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Head {
    /// Every channel and position feeds the FC layer.
    Flatten,
    /// Each channel is averaged over its remaining length first.
    #[default]
    GlobalAverage,
}

/// Layer layout of the classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_channels: usize,
    pub input_len: usize,
    pub blocks: Vec<ConvSpec>,
    pub pool: usize,
    pub head: Head,
    pub classes: usize,
}

impl Default for Architecture {
    /// Six conv blocks (16, 32, 48, 64, 80, 96 filters, kernel 8) over a
    /// 2×2048 I/Q input, global average pooling, then a 96→5
    /// fully-connected layer.
    fn default() -> Self {
        Self::with_filters(&[16, 32, 48, 64, 80, 96], 8)
    }
}

impl Architecture {
    pub fn with_filters(filters: &[usize], kernel: usize) -> Self {
        Self {
            input_channels: 2,
            input_len: 2048,
            blocks: filters
                .iter()
                .map(|&f| ConvSpec { filters: f, kernel })
                .collect(),
            pool: 2,
            head: Head::default(),
            classes: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ShapeMismatch(m));
        if self.input_channels == 0 || self.input_len == 0 {
            return bad("input must have at least one channel and one sample".into());
        }
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.pool == 0 {
            return bad("pool width must be positive".into());
        }
        let mut len = self.input_len;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.filters == 0 || b.kernel == 0 {
                return bad(format!("block {i} has zero filters or kernel"));
            }
            if len % self.pool != 0 {
                return bad(format!(
                    "block {i} input length {len} not divisible by pool {}",
                    self.pool
                ));
            }
            len /= self.pool;
        }
        Ok(())
    }

    /// `(in_channels, out_channels, kernel, input_len)` per block.
    pub fn block_dims(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut cin = self.input_channels;
        let mut len = self.input_len;
        self.blocks
            .iter()
            .map(|b| {
                let d = (cin, b.filters, b.kernel, len);
                cin = b.filters;
                len /= self.pool;
                d
            })
            .collect()
    }

    /// Channels and length of the last block's output.
    pub fn final_map(&self) -> (usize, usize) {
        let channels = self.blocks.last().map_or(self.input_channels, |b| b.filters);
        (channels, self.input_len / self.pool.pow(self.blocks.len() as u32))
    }

    pub fn fc_inputs(&self) -> usize {
        let (channels, len) = self.final_map();
        match self.head {
            Head::Flatten => channels * len,
            Head::GlobalAverage => channels,
        }
    }

    /// Names and shapes of all trainable tensors, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, (cin, cout, k, _)) in self.block_dims().into_iter().enumerate() {
            out.push((format!("block{i}.conv.weight"), vec![cout, cin, k]));
            out.push((format!("block{i}.bn.gamma"), vec![cout]));
            out.push((format!("block{i}.bn.beta"), vec![cout]));
        }
        out.push(("fc.weight".into(), vec![self.classes, self.fc_inputs()]));
        out.push(("fc.bias".into(), vec![self.classes]));
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Forward-pass mode: batch statistics (`Train`) or running statistics (`Infer`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Batchnorm running statistics for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    arch: Architecture,
    params: Vec<Param<T>>,
    bn: Vec<BnStats<T>>,
    pub history: Vec<EpochRecord>,
}

/// Gradients, aligned with [`Model::params`].
pub type Gradients<T> = Vec<Tensor<T>>;

/// Activations kept from a training-mode forward pass for backpropagation.
pub(crate) struct Trace<T> {
    batch: usize,
    inputs: Vec<Vec<T>>,
    conv_out: Vec<Vec<T>>,
    mean: Vec<Vec<T>>,
    var: Vec<Vec<T>>,
    inv_std: Vec<Vec<T>>,
    argmax: Vec<Vec<u8>>,
    last: Vec<T>,
    /// FC input when it differs from `last`.
    pooled: Vec<T>,
    pub(crate) logits: Vec<T>,
}

impl<T> Trace<T> {
    /// Batch mean and (biased) variance per block.
    pub(crate) fn batch_stats(&self) -> impl Iterator<Item = (&[T], &[T])> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    /// Which pool entry won and whether the pooled value passed the ReLU,
    /// for every block. Two passes with equal patterns lie on the same
    /// smooth piece of the loss.
    pub(crate) fn kink_pattern(&self) -> (Vec<&[u8]>, Vec<bool>)
    where
        T: Real,
    {
        let argmax = self.argmax.iter().map(Vec::as_slice).collect();
        let active = self
            .inputs
            .iter()
            .skip(1)
            .chain(std::iter::once(&self.last))
            .flat_map(|x| x.iter().map(|&v| v > T::zero()))
            .collect();
        (argmax, active)
    }

    /// Smallest |pre-activation| and smallest pool-window gap, i.e. how close
    /// the pass sits to a ReLU or max-pool kink.
    pub(crate) fn kink_margin(&self, model: &Model<T>) -> f64
    where
        T: Real,
    {
        let mut margin = f64::INFINITY;
        let pool = model.arch.pool;
        for (i, (_, cout, _, len)) in model.arch.block_dims().into_iter().enumerate() {
            let gamma = model.params[3 * i + 1].value.values();
            let beta = model.params[3 * i + 2].value.values();
            let y = &self.conv_out[i];
            for b in 0..self.batch {
                for c in 0..cout {
                    let scale = gamma[c] * self.inv_std[i][c];
                    let shift = beta[c] - self.mean[i][c] * scale;
                    let row = &y[(b * cout + c) * len..][..len];
                    for w in row.chunks_exact(pool) {
                        let mut z: Vec<f64> = w.iter().map(|&v| (v * scale + shift).as_f64()).collect();
                        z.sort_by(|a, b| b.total_cmp(a));
                        margin = margin.min(z[0].abs());
                        if z.len() > 1 {
                            margin = margin.min(z[0] - z[1]);
                        }
                    }
                }
            }
        }
        margin
    }
}

fn im2col<T: Real>(x: &[T], cin: usize, len: usize, k: usize, col: &mut [T]) {
    let pad_left = (k - 1) / 2;
    for c in 0..cin {
        let src = &x[c * len..(c + 1) * len];
        for kk in 0..k {
            let row = &mut col[(c * k + kk) * len..(c * k + kk + 1) * len];
            let shift = kk as isize - pad_left as isize;
            let lo = (-shift).max(0) as usize;
            let hi = (len as isize - shift).min(len as isize).max(0) as usize;
            if lo >= hi {
                row.fill(T::zero());
                continue;
            }
            row[..lo].fill(T::zero());
            row[hi..].fill(T::zero());
            let s0 = (lo as isize + shift) as usize;
            row[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
        }
    }
}

fn col2im_add<T: Real>(col: &[T], cin: usize, len: usize, k: usize, dx: &mut [T]) {
    let pad_left = (k - 1) / 2;
    for c in 0..cin {
        let dst = &mut dx[c * len..(c + 1) * len];
        for kk in 0..k {
            let row = &col[(c * k + kk) * len..(c * k + kk + 1) * len];
            let shift = kk as isize - pad_left as isize;
            let lo = (-shift).max(0) as usize;
            let hi = (len as isize - shift).min(len as isize).max(0) as usize;
            if lo >= hi {
                continue;
            }
            let s0 = (lo as isize + shift) as usize;
            for (d, &g) in dst[s0..s0 + (hi - lo)].iter_mut().zip(&row[lo..hi]) {
                *d += g;
            }
        }
    }
}

/// Row-wise softmax of `[rows, classes]` logits.
pub(crate) fn softmax_rows<T: Real>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = vec![T::zero(); logits.len()];
    for (row, dst) in logits.chunks_exact(classes).zip(out.chunks_exact_mut(classes)) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            sum += *d;
        }
        for d in dst.iter_mut() {
            *d /= sum;
        }
    }
    out
}

/// Mean cross-entropy over rows, computed from logits with log-sum-exp.
pub(crate) fn cross_entropy<T: Real>(logits: &[T], labels: &[usize], classes: usize) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.chunks_exact(classes).zip(labels) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let lse = max + row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
        total += lse - row[y].as_f64();
    }
    total / labels.len() as f64
}

impl<T: Real> Model<T> {
    /// He-uniform conv weights, unit gamma, zero beta and an all-zero FC
    /// layer, so a fresh model predicts the uniform distribution.
    pub fn build(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (name, shape) in arch.param_shapes() {
            let n: usize = shape.iter().product();
            let values: Vec<T> = if name.ends_with("conv.weight") {
                let fan_in: usize = shape[1..].iter().product();
                let bound = (6.0 / fan_in as f64).sqrt();
                (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect()
            } else if name.ends_with("gamma") {
                vec![T::one(); n]
            } else {
                vec![T::zero(); n]
            };
            params.push(Param {
                name,
                value: Tensor::from_vec(&shape, values)?,
            });
        }
        let bn = arch
            .blocks
            .iter()
            .map(|b| BnStats {
                mean: vec![T::zero(); b.filters],
                var: vec![T::one(); b.filters],
            })
            .collect();
        Ok(Self {
            arch,
            params,
            bn,
            history: Vec::new(),
        })
    }

    /// Reassemble a model from stored parts, checking every shape.
    pub fn from_parts(
        arch: Architecture,
        params: Vec<Param<T>>,
        bn: Vec<BnStats<T>>,
        history: Vec<EpochRecord>,
    ) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "architecture has {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in shapes.iter().zip(&params) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "expected {name} {shape:?}, got {} {:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        if bn.len() != arch.blocks.len()
            || bn
                .iter()
                .zip(&arch.blocks)
                .any(|(s, b)| s.mean.len() != b.filters || s.var.len() != b.filters)
        {
            return Err(Error::ShapeMismatch("batchnorm statistics do not match architecture".into()));
        }
        Ok(Self {
            arch,
            params,
            bn,
            history,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn bn_stats(&self) -> &[BnStats<T>] {
        &self.bn
    }

    pub fn bn_stats_mut(&mut self) -> &mut [BnStats<T>] {
        &mut self.bn
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        self.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect()
    }

    /// Same model in another scalar type.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            arch: self.arch.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
            bn: self
                .bn
                .iter()
                .map(|s| BnStats {
                    mean: s.mean.iter().map(|v| U::of(v.as_f64())).collect(),
                    var: s.var.iter().map(|v| U::of(v.as_f64())).collect(),
                })
                .collect(),
            history: self.history.clone(),
        }
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<usize> {
        let s = batch.shape();
        if s.len() != 3 || s[1] != self.arch.input_channels || s[2] != self.arch.input_len || s[0] == 0 {
            return Err(Error::ShapeMismatch(format!(
                "expected input [b, {}, {}], got {s:?}",
                self.arch.input_channels, self.arch.input_len
            )));
        }
        Ok(s[0])
    }

    /// Class probabilities `[batch, classes]`.
    pub fn forward(&self, batch: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let n = self.check_input(batch)?;
        let (logits, _) = self.run(batch.values(), n, mode, false)?;
        Tensor::from_vec(&[n, self.arch.classes], softmax_rows(&logits, self.arch.classes))
    }

    /// Training-mode forward pass that keeps what backpropagation needs.
    pub(crate) fn forward_train(&self, batch: &Tensor<T>) -> Result<Trace<T>> {
        let n = self.check_input(batch)?;
        let (_, trace) = self.run(batch.values(), n, Mode::Train, true)?;
        Ok(trace.expect("trace requested"))
    }

    fn run(&self, input: &[T], n: usize, mode: Mode, keep: bool) -> Result<(Vec<T>, Option<Trace<T>>)> {
        let pool = self.arch.pool;
        let mut trace = Trace {
            batch: n,
            inputs: Vec::new(),
            conv_out: Vec::new(),
            mean: Vec::new(),
            var: Vec::new(),
            inv_std: Vec::new(),
            argmax: Vec::new(),
            last: Vec::new(),
            pooled: Vec::new(),
            logits: Vec::new(),
        };
        let mut cur = input.to_vec();
        for (i, (cin, cout, k, len)) in self.arch.block_dims().into_iter().enumerate() {
            let w = self.params[3 * i].value.values();
            let gamma = self.params[3 * i + 1].value.values();
            let beta = self.params[3 * i + 2].value.values();
            let mut y = vec![T::zero(); n * cout * len];
            let mut col = vec![T::zero(); cin * k * len];
            for b in 0..n {
                im2col(&cur[b * cin * len..(b + 1) * cin * len], cin, len, k, &mut col);
                T::gemm(
                    cout,
                    cin * k,
                    len,
                    T::one(),
                    w,
                    cin * k,
                    1,
                    &col,
                    len,
                    1,
                    T::zero(),
                    &mut y[b * cout * len..(b + 1) * cout * len],
                    len,
                    1,
                );
            }
            let (mean, var) = match mode {
                Mode::Infer => (self.bn[i].mean.clone(), self.bn[i].var.clone()),
                Mode::Train => batch_moments(&y, n, cout, len),
            };
            let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::of(BN_EPS)).sqrt()).collect();
            let plen = len / pool;
            let mut next = vec![T::zero(); n * cout * plen];
            let mut argmax = if keep { vec![0u8; n * cout * plen] } else { Vec::new() };
            for b in 0..n {
                for c in 0..cout {
                    let scale = gamma[c] * inv_std[c];
                    let shift = beta[c] - mean[c] * scale;
                    let base = (b * cout + c) * len;
                    let pbase = (b * cout + c) * plen;
                    for j in 0..plen {
                        let win = &y[base + j * pool..base + (j + 1) * pool];
                        let mut best = win[0] * scale + shift;
                        let mut at = 0u8;
                        for (q, &v) in win.iter().enumerate().skip(1) {
                            let z = v * scale + shift;
                            if z > best {
                                best = z;
                                at = q as u8;
                            }
                        }
                        next[pbase + j] = best.max(T::zero());
                        if keep {
                            argmax[pbase + j] = at;
                        }
                    }
                }
            }
            if keep {
                trace.inputs.push(std::mem::replace(&mut cur, next));
                trace.conv_out.push(y);
                trace.mean.push(mean);
                trace.var.push(var);
                trace.inv_std.push(inv_std);
                trace.argmax.push(argmax);
            } else {
                cur = next;
            }
        }
        let pooled = match self.arch.head {
            Head::Flatten => Vec::new(),
            Head::GlobalAverage => {
                let (_, len) = self.arch.final_map();
                let inv = T::of(1.0 / len as f64);
                cur.chunks_exact(len)
                    .map(|row| row.iter().fold(T::zero(), |a, &v| a + v) * inv)
                    .collect()
            }
        };
        let features = if pooled.is_empty() { &cur } else { &pooled };
        let f = self.arch.fc_inputs();
        let classes = self.arch.classes;
        let fw = self.params[3 * self.arch.blocks.len()].value.values();
        let fb = self.params[3 * self.arch.blocks.len() + 1].value.values();
        let mut logits = vec![T::zero(); n * classes];
        T::gemm(n, f, classes, T::one(), features, f, 1, fw, 1, f, T::zero(), &mut logits, classes, 1);
        for row in logits.chunks_exact_mut(classes) {
            for (l, &bias) in row.iter_mut().zip(fb) {
                *l += bias;
            }
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation("logits".into()));
        }
        if keep {
            trace.last = cur;
            trace.pooled = pooled;
            trace.logits = logits.clone();
            Ok((logits, Some(trace)))
        } else {
            Ok((logits, None))
        }
    }

    /// Backpropagate mean cross-entropy through a training trace. Gradients
    /// are accumulated into `grads`; returns the loss.
    pub(crate) fn backward(&self, trace: &Trace<T>, labels: &[usize], grads: &mut Gradients<T>) -> f64 {
        let n = trace.batch;
        let classes = self.arch.classes;
        let f = self.arch.fc_inputs();
        let nb = self.arch.blocks.len();
        let pool = self.arch.pool;
        let loss = cross_entropy(&trace.logits, labels, classes);

        let mut dlogits = softmax_rows(&trace.logits, classes);
        let inv_n = T::of(1.0 / n as f64);
        for (row, &y) in dlogits.chunks_exact_mut(classes).zip(labels) {
            row[y] -= T::one();
            row.iter_mut().for_each(|v| *v *= inv_n);
        }
        {
            let gw = grads[3 * nb].values_mut();
            let features = if trace.pooled.is_empty() { &trace.last } else { &trace.pooled };
            T::gemm(classes, n, f, T::one(), &dlogits, 1, classes, features, f, 1, T::one(), gw, f, 1);
        }
        {
            let gb = grads[3 * nb + 1].values_mut();
            for row in dlogits.chunks_exact(classes) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        let fw = self.params[3 * nb].value.values();
        let mut dcur = vec![T::zero(); n * f];
        T::gemm(n, classes, f, T::one(), &dlogits, classes, 1, fw, f, 1, T::zero(), &mut dcur, f, 1);
        if self.arch.head == Head::GlobalAverage {
            let (_, len) = self.arch.final_map();
            let inv = T::of(1.0 / len as f64);
            dcur = dcur.iter().flat_map(|&g| std::iter::repeat(g * inv).take(len)).collect();
        }

        let dims = self.arch.block_dims();
        for i in (0..nb).rev() {
            let (cin, cout, k, len) = dims[i];
            let plen = len / pool;
            let post = if i + 1 == nb { &trace.last } else { &trace.inputs[i + 1] };
            let y = &trace.conv_out[i];
            let argmax = &trace.argmax[i];
            let mut dy = vec![T::zero(); n * cout * len];
            for (idx, (&g, &a)) in dcur.iter().zip(post).enumerate() {
                if a > T::zero() {
                    let bc = idx / plen;
                    let j = idx % plen;
                    dy[bc * len + j * pool + argmax[idx] as usize] = g;
                }
            }
            // batchnorm
            let gamma = self.params[3 * i + 1].value.values();
            let count = (n * len) as f64;
            let mut dgamma = vec![0.0f64; cout];
            let mut dbeta = vec![0.0f64; cout];
            for b in 0..n {
                for c in 0..cout {
                    let base = (b * cout + c) * len;
                    let (m, s) = (trace.mean[i][c], trace.inv_std[i][c]);
                    let mut sg = 0.0;
                    let mut sgx = 0.0;
                    for (&d, &v) in dy[base..base + len].iter().zip(&y[base..base + len]) {
                        sg += d.as_f64();
                        sgx += (d * (v - m) * s).as_f64();
                    }
                    dbeta[c] += sg;
                    dgamma[c] += sgx;
                }
            }
            for c in 0..cout {
                grads[3 * i + 1].values_mut()[c] += T::of(dgamma[c]);
                grads[3 * i + 2].values_mut()[c] += T::of(dbeta[c]);
            }
            for b in 0..n {
                for c in 0..cout {
                    let base = (b * cout + c) * len;
                    let (m, s) = (trace.mean[i][c], trace.inv_std[i][c]);
                    let k1 = gamma[c] * s;
                    let mb = T::of(dbeta[c] / count);
                    let mg = T::of(dgamma[c] / count);
                    for (d, &v) in dy[base..base + len].iter_mut().zip(&y[base..base + len]) {
                        *d = k1 * (*d - mb - (v - m) * s * mg);
                    }
                }
            }
            // convolution
            let w = self.params[3 * i].value.values();
            let mut col = vec![T::zero(); cin * k * len];
            let mut dx = if i > 0 { vec![T::zero(); n * cin * len] } else { Vec::new() };
            for b in 0..n {
                let dyb = &dy[b * cout * len..(b + 1) * cout * len];
                im2col(&trace.inputs[i][b * cin * len..(b + 1) * cin * len], cin, len, k, &mut col);
                T::gemm(
                    cout,
                    len,
                    cin * k,
                    T::one(),
                    dyb,
                    len,
                    1,
                    &col,
                    1,
                    len,
                    T::one(),
                    grads[3 * i].values_mut(),
                    cin * k,
                    1,
                );
                if i > 0 {
                    T::gemm(cin * k, cout, len, T::one(), w, 1, cin * k, dyb, len, 1, T::zero(), &mut col, len, 1);
                    col2im_add(&col, cin, len, k, &mut dx[b * cin * len..(b + 1) * cin * len]);
                }
            }
            dcur = dx;
        }
        loss
    }
}

/// Per-channel mean and biased variance over batch and length.
fn batch_moments<T: Real>(y: &[T], n: usize, c: usize, len: usize) -> (Vec<T>, Vec<T>) {
    let count = (n * len) as f64;
    let mut mean = vec![0.0f64; c];
    for b in 0..n {
        for ch in 0..c {
            mean[ch] += y[(b * c + ch) * len..][..len].iter().map(|v| v.as_f64()).sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0f64; c];
    for b in 0..n {
        for ch in 0..c {
            let m = mean[ch];
            var[ch] += y[(b * c + ch) * len..][..len]
                .iter()
                .map(|v| {
                    let d = v.as_f64() - m;
                    d * d
                })
                .sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= count);
    (
        mean.into_iter().map(T::of).collect(),
        var.into_iter().map(T::of).collect(),
    )
}
