use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::ops::{col2im, im2col, matmul, maxpool, maxpool_backward, Real};
use super::{Geometry, ModelConfig, NUM_FC};
use crate::derive_seed;
use crate::error::{Error, Result};

/// Probability floor inside the cross-entropy logarithm.
pub const LOSS_EPS: f64 = 1e-12;

/// Dropout sites per pair: stream a, stream b, then one per hidden fc layer.
const SITES_PER_SAMPLE: u64 = 2 + (NUM_FC as u64 - 1);

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    /// Row-major; `[out, in, k, k]` for conv, `[out, in]` for fc.
    pub weight: Vec<T>,
    pub weight_shape: Vec<usize>,
    pub bias: Vec<T>,
}

impl<T: Real> Layer<T> {
    fn zeros(weight_shape: Vec<usize>) -> Self {
        let n: usize = weight_shape.iter().product();
        let out = weight_shape[0];
        Layer { weight: vec![T::zero(); n], weight_shape, bias: vec![T::zero(); out] }
    }

    fn add_assign(&mut self, other: &Layer<T>) {
        for (a, &b) in self.weight.iter_mut().zip(&other.weight) {
            *a = *a + b;
        }
        for (a, &b) in self.bias.iter_mut().zip(&other.bias) {
            *a = *a + b;
        }
    }
}

/// One parameter set, shared by both streams.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub conv: Vec<Layer<T>>,
    pub fc: Vec<Layer<T>>,
}

/// Gradients have exactly the parameter layout.
pub type Gradients<T> = Params<T>;

impl<T: Real> Params<T> {
    pub fn zeros(config: &ModelConfig, geom: &Geometry) -> Self {
        let conv = geom
            .convs
            .iter()
            .map(|g| Layer::zeros(vec![g.out_channels, g.shape.channels, g.shape.kernel, g.shape.kernel]))
            .collect();
        let mut fan_in = 2 * geom.stream_len;
        let fc = config
            .fc_sizes
            .iter()
            .map(|&out| {
                let layer = Layer::zeros(vec![out, fan_in]);
                fan_in = out;
                layer
            })
            .collect();
        Params { conv, fc }
    }

    fn layers(&self) -> impl Iterator<Item = (String, &Layer<T>)> {
        let conv = self.conv.iter().enumerate().map(|(i, l)| (format!("conv{}", i + 1), l));
        let fc = self.fc.iter().enumerate().map(|(i, l)| (format!("fc{}", i + 1), l));
        conv.chain(fc)
    }

    /// `(name, shape, values)` for every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        self.layers()
            .flat_map(|(name, l)| {
                [
                    (format!("{name}.weight"), l.weight_shape.clone(), l.weight.as_slice()),
                    (format!("{name}.bias"), vec![l.bias.len()], l.bias.as_slice()),
                ]
            })
            .collect()
    }

    /// Mutable views in the same order as [`Params::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.conv
            .iter_mut()
            .chain(self.fc.iter_mut())
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, _, v)| v.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Params<T>) {
        for (a, b) in self.conv.iter_mut().zip(&other.conv) {
            a.add_assign(b);
        }
        for (a, b) in self.fc.iter_mut().zip(&other.fc) {
            a.add_assign(b);
        }
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        let conv_layer = |l: &Layer<T>| Layer {
            weight: l.weight.iter().map(|v| U::from_f64(v.to_f64().unwrap()).unwrap()).collect(),
            weight_shape: l.weight_shape.clone(),
            bias: l.bias.iter().map(|v| U::from_f64(v.to_f64().unwrap()).unwrap()).collect(),
        };
        Params { conv: self.conv.iter().map(conv_layer).collect(), fc: self.fc.iter().map(conv_layer).collect() }
    }
}

/// One activation map of a stream, `(C, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub name: String,
    pub shape: (usize, usize, usize),
    pub data: Vec<T>,
}

/// Everything one stream computes for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamFeatures<T> {
    /// `conv1..conv4` (post-ReLU) and `pool1, pool2`, in evaluation order.
    pub maps: Vec<FeatureMap<T>>,
    /// Output of the last conv block (after its pooling): the Grad-CAM layer.
    pub last_conv: FeatureMap<T>,
    /// Flattened stream output fed to the head (post-dropout in train mode).
    pub output: Vec<T>,
}

/// Activations of the fully-connected head for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadFeatures<T> {
    pub logits: [T; 2],
    pub probs: [T; 2],
}

/// Borrowed model input for one pair.
#[derive(Debug, Clone, Copy)]
pub struct PairInput<'a, T> {
    pub a: &'a [T],
    pub b: &'a [T],
    pub label: u8,
}

struct StreamTrace<T> {
    conv_in: Vec<Vec<T>>,
    conv_out: Vec<Vec<T>>,
    pool_arg: Vec<Option<Vec<u32>>>,
    pooled: Vec<Option<Vec<T>>>,
    /// Conv block whose pooled output was dropped out, and the scale mask.
    mask: Option<(usize, Vec<T>)>,
    output: Vec<T>,
}

struct HeadTrace<T> {
    /// Input to each fc layer, `batch x in`.
    inputs: Vec<Vec<T>>,
    /// Post-ReLU activations of the hidden layers.
    acts: Vec<Vec<T>>,
    masks: Vec<Option<Vec<T>>>,
    logits: Vec<T>,
}

/// Result of one mini-batch forward/backward pass.
#[derive(Debug, Clone)]
pub struct BatchOutput<T> {
    pub mean_loss: T,
    pub probs: Vec<[T; 2]>,
    pub grads: Gradients<T>,
}

/// `-ln(max(probs[label], 1e-12))`.
pub fn loss<T: Real>(probs: [T; 2], label: u8) -> T {
    -probs[label as usize].max(T::lit(LOSS_EPS)).ln()
}

fn softmax<T: Real>(logits: [T; 2]) -> [T; 2] {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

fn dropout_mask<T: Real>(len: usize, keep: f64, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = T::lit(1.0 / keep);
    (0..len).map(|_| if rng.random_bool(keep) { scale } else { T::zero() }).collect()
}

fn relu_inplace<T: Real>(v: &mut [T]) {
    for x in v.iter_mut() {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Converts a binary glyph (0/1 bytes) to network input.
pub fn image_to_input<T: Real>(pixels: &[u8]) -> Vec<T> {
    pixels.iter().map(|&p| if p != 0 { T::one() } else { T::zero() }).collect()
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    config: ModelConfig,
    geom: Geometry,
    pub params: Params<T>,
}

impl<T: Real> Network<T> {
    /// Wraps existing parameters after checking them against `config`.
    pub fn new(config: ModelConfig, params: Params<T>) -> Result<Self> {
        let geom = config.validate()?;
        let expected = Params::<T>::zeros(&config, &geom);
        let ok = expected.conv.len() == params.conv.len()
            && expected.fc.len() == params.fc.len()
            && expected.layers().zip(params.layers()).all(|((_, e), (_, p))| {
                e.weight_shape == p.weight_shape && e.weight.len() == p.weight.len() && e.bias.len() == p.bias.len()
            });
        if !ok {
            return Err(Error::ShapeMismatch("parameter shapes do not match the model config".into()));
        }
        Ok(Network { config, geom, params })
    }

    /// Fan-in-scaled normal initialization (He for ReLU layers, LeCun for
    /// the output layer), zero biases. Deterministic in `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let geom = config.validate()?;
        let mut params = Params::<T>::zeros(&config, &geom);
        let n_fc = params.fc.len();
        let layers = params.conv.iter_mut().chain(params.fc.iter_mut()).enumerate();
        for (idx, layer) in layers {
            let fan_in: usize = layer.weight_shape[1..].iter().product();
            let gain = if idx == NUM_FC + config.conv_channels.len() - 1 { 1.0 } else { 2.0 };
            let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("finite std");
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, idx as u64));
            for w in layer.weight.iter_mut() {
                *w = T::lit(normal.sample(&mut rng));
            }
        }
        debug_assert_eq!(n_fc, NUM_FC);
        Ok(Network { config, geom, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    fn check_image(&self, img: &[T]) -> Result<()> {
        let n = self.config.input_size * self.config.input_size;
        if img.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "image has {} pixels, model expects {}x{}",
                img.len(),
                self.config.input_size,
                self.config.input_size
            )));
        }
        Ok(())
    }

    fn check_features(&self, f: &[T]) -> Result<()> {
        if f.len() != self.geom.stream_len {
            return Err(Error::ShapeMismatch(format!(
                "stream feature vector has {} values, model expects {}",
                f.len(),
                self.geom.stream_len
            )));
        }
        Ok(())
    }

    fn dropout_active(&self) -> bool {
        self.config.dropout_keep < 1.0
    }

    fn stream_trace(&self, img: &[T], mask_seed: Option<u64>, keep_maps: bool) -> StreamTrace<T> {
        let mut x = img.to_vec();
        let n = self.geom.convs.len();
        let mut trace = StreamTrace {
            conv_in: Vec::with_capacity(n),
            conv_out: Vec::with_capacity(n),
            pool_arg: Vec::with_capacity(n),
            pooled: Vec::with_capacity(n),
            mask: None,
            output: Vec::new(),
        };
        let mut seen_pool = false;
        for (i, g) in self.geom.convs.iter().enumerate() {
            let layer = &self.params.conv[i];
            let hw = g.out_height * g.out_width;
            let k = g.shape.patch_len();
            let mut col = vec![T::zero(); k * hw];
            im2col(&x, &g.shape, &mut col);
            let mut y = vec![T::zero(); g.out_channels * hw];
            for (o, row) in y.chunks_mut(hw).enumerate() {
                row.fill(layer.bias[o]);
            }
            matmul(g.out_channels, k, hw, &layer.weight, false, &col, false, T::one(), &mut y);
            relu_inplace(&mut y);

            let mut next = if g.pooled.is_some() {
                let (p, arg) =
                    maxpool(&y, g.out_channels, g.out_height, g.out_width, self.config.pool_kernel, self.config.pool_stride);
                trace.pool_arg.push(Some(arg));
                trace.pooled.push(keep_maps.then(|| p.clone()));
                p
            } else {
                trace.pool_arg.push(None);
                trace.pooled.push(None);
                y.clone()
            };
            if g.pooled.is_some() && !seen_pool {
                seen_pool = true;
                if let Some(seed) = mask_seed.filter(|_| self.dropout_active()) {
                    let mask = dropout_mask::<T>(next.len(), self.config.dropout_keep, seed);
                    for (v, &m) in next.iter_mut().zip(&mask) {
                        *v = *v * m;
                    }
                    trace.mask = Some((i, mask));
                }
            }
            trace.conv_in.push(x);
            trace.conv_out.push(y);
            x = next;
        }
        trace.output = x;
        trace
    }

    fn stream_backward(&self, t: &StreamTrace<T>, d_out: &[T]) -> Vec<Layer<T>> {
        let mut grads: Vec<Layer<T>> =
            self.params.conv.iter().map(|l| Layer::zeros(l.weight_shape.clone())).collect();
        let mut d = d_out.to_vec();
        for (i, g) in self.geom.convs.iter().enumerate().rev() {
            if let Some((li, mask)) = &t.mask {
                if *li == i {
                    for (v, &m) in d.iter_mut().zip(mask) {
                        *v = *v * m;
                    }
                }
            }
            let hw = g.out_height * g.out_width;
            if let Some(arg) = &t.pool_arg[i] {
                d = maxpool_backward(&d, arg, g.out_channels * hw);
            }
            for (v, &y) in d.iter_mut().zip(&t.conv_out[i]) {
                if y <= T::zero() {
                    *v = T::zero();
                }
            }
            let grad = &mut grads[i];
            for (o, row) in d.chunks(hw).enumerate() {
                grad.bias[o] = row.iter().copied().sum();
            }
            let k = g.shape.patch_len();
            let mut col = vec![T::zero(); k * hw];
            im2col(&t.conv_in[i], &g.shape, &mut col);
            matmul(g.out_channels, hw, k, &d, false, &col, true, T::zero(), &mut grad.weight);
            if i > 0 {
                let mut dcol = vec![T::zero(); k * hw];
                matmul(k, g.out_channels, hw, &self.params.conv[i].weight, true, &d, false, T::zero(), &mut dcol);
                let mut dx = vec![T::zero(); g.shape.channels * g.shape.height * g.shape.width];
                col2im(&dcol, &g.shape, &mut dx);
                d = dx;
            }
        }
        grads
    }

    fn head_forward(&self, z: Vec<T>, batch: usize, mask_seed: Option<u64>) -> HeadTrace<T> {
        let mut x = z;
        let last = self.params.fc.len() - 1;
        let mut trace = HeadTrace { inputs: Vec::new(), acts: Vec::new(), masks: Vec::new(), logits: Vec::new() };
        for (l, layer) in self.params.fc.iter().enumerate() {
            let (out, inp) = (layer.weight_shape[0], layer.weight_shape[1]);
            let mut y = vec![T::zero(); batch * out];
            for row in y.chunks_mut(out) {
                row.copy_from_slice(&layer.bias);
            }
            matmul(batch, inp, out, &x, false, &layer.weight, true, T::one(), &mut y);
            trace.inputs.push(x);
            if l < last {
                relu_inplace(&mut y);
                trace.acts.push(y.clone());
                let mask = mask_seed.filter(|_| self.dropout_active()).map(|seed| {
                    let mut mask = Vec::with_capacity(batch * out);
                    for s in 0..batch {
                        let site = s as u64 * SITES_PER_SAMPLE + 2 + l as u64;
                        mask.extend(dropout_mask::<T>(out, self.config.dropout_keep, derive_seed(seed, site)));
                    }
                    mask
                });
                if let Some(mask) = &mask {
                    for (v, &m) in y.iter_mut().zip(mask) {
                        *v = *v * m;
                    }
                }
                trace.masks.push(mask);
            }
            x = y;
        }
        trace.logits = x;
        trace
    }

    /// Returns fc-layer gradients and the gradient w.r.t. the head input.
    fn head_backward(&self, t: &HeadTrace<T>, dlogits: Vec<T>, batch: usize) -> (Vec<Layer<T>>, Vec<T>) {
        let last = self.params.fc.len() - 1;
        let mut grads = Vec::with_capacity(self.params.fc.len());
        let mut d = dlogits;
        for (l, layer) in self.params.fc.iter().enumerate().rev() {
            let (out, inp) = (layer.weight_shape[0], layer.weight_shape[1]);
            if l < last {
                if let Some(mask) = &t.masks[l] {
                    for (v, &m) in d.iter_mut().zip(mask) {
                        *v = *v * m;
                    }
                }
                for (v, &a) in d.iter_mut().zip(&t.acts[l]) {
                    if a <= T::zero() {
                        *v = T::zero();
                    }
                }
            }
            let mut g = Layer::zeros(layer.weight_shape.clone());
            matmul(out, batch, inp, &d, true, &t.inputs[l], false, T::zero(), &mut g.weight);
            for row in d.chunks(out) {
                for (b, &v) in g.bias.iter_mut().zip(row) {
                    *b = *b + v;
                }
            }
            let mut dx = vec![T::zero(); batch * inp];
            matmul(batch, out, inp, &d, false, &layer.weight, false, T::zero(), &mut dx);
            grads.push(g);
            d = dx;
        }
        grads.reverse();
        (grads, d)
    }

    fn stream_seed(dropout_seed: u64, sample: usize, slot: u64) -> u64 {
        derive_seed(dropout_seed, sample as u64 * SITES_PER_SAMPLE + slot)
    }

    /// Runs one stream on one image.
    pub fn stream_forward(&self, img: &[T], train: bool, dropout_seed: u64) -> Result<StreamFeatures<T>> {
        self.check_image(img)?;
        let seed = train.then(|| Self::stream_seed(dropout_seed, 0, 0));
        let t = self.stream_trace(img, seed, true);
        let mut maps = Vec::new();
        let mut pool_no = 0;
        let mut last_conv = None;
        for (i, g) in self.geom.convs.iter().enumerate() {
            maps.push(FeatureMap {
                name: format!("conv{}", i + 1),
                shape: (g.out_channels, g.out_height, g.out_width),
                data: t.conv_out[i].clone(),
            });
            let block_out = if let (Some((ph, pw)), Some(p)) = (g.pooled, &t.pooled[i]) {
                pool_no += 1;
                let map = FeatureMap { name: format!("pool{pool_no}"), shape: (g.out_channels, ph, pw), data: p.clone() };
                maps.push(map.clone());
                map
            } else {
                maps.last().cloned().expect("just pushed")
            };
            last_conv = Some(block_out);
        }
        Ok(StreamFeatures { maps, last_conv: last_conv.expect("at least one conv layer"), output: t.output })
    }

    /// Evaluation-mode stream outputs of both slots, as fed to the head.
    pub fn slot_features(&self, a: &[T], b: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        self.check_image(a)?;
        self.check_image(b)?;
        Ok((self.stream_trace(a, None, false).output, self.stream_trace(b, None, false).output))
    }

    /// The piecewise-linear region of an evaluation-mode forward pass: every
    /// ReLU on/off state and max-pool argmax of both streams and the head.
    /// Finite differences are exact only while this pattern is unchanged.
    pub fn activation_pattern(&self, a: &[T], b: &[T]) -> Result<Vec<u32>> {
        self.check_image(a)?;
        self.check_image(b)?;
        let mut pattern = Vec::new();
        let mut z = Vec::with_capacity(2 * self.geom.stream_len);
        for img in [a, b] {
            let t = self.stream_trace(img, None, false);
            for (y, arg) in t.conv_out.iter().zip(&t.pool_arg) {
                pattern.extend(y.iter().map(|&v| u32::from(v > T::zero())));
                if let Some(arg) = arg {
                    pattern.extend_from_slice(arg);
                }
            }
            z.extend_from_slice(&t.output);
        }
        let head = self.head_forward(z, 1, None);
        for act in &head.acts {
            pattern.extend(act.iter().map(|&v| u32::from(v > T::zero())));
        }
        Ok(pattern)
    }

    /// Batched forward pass; `probs[i][1]` is p(same font).
    pub fn forward_batch(&self, pairs: &[PairInput<T>], train: bool, dropout_seed: u64) -> Result<Vec<[T; 2]>> {
        Ok(self.run_batch(pairs, train, dropout_seed, false)?.probs)
    }

    pub fn forward(&self, a: &[T], b: &[T], train: bool, dropout_seed: u64) -> Result<[T; 2]> {
        Ok(self.forward_batch(&[PairInput { a, b, label: 0 }], train, dropout_seed)?[0])
    }

    /// Exact gradients of the cross-entropy of one pair.
    pub fn backward(
        &self,
        a: &[T],
        b: &[T],
        label: u8,
        train: bool,
        dropout_seed: u64,
    ) -> Result<(T, [T; 2], Gradients<T>)> {
        let out = self.run_batch(&[PairInput { a, b, label }], train, dropout_seed, true)?;
        Ok((out.mean_loss, out.probs[0], out.grads))
    }

    /// Mean loss over the batch and its exact gradient. Conv gradients of
    /// the two streams are summed into the single shared parameter set.
    pub fn batch_gradients(&self, pairs: &[PairInput<T>], train: bool, dropout_seed: u64) -> Result<BatchOutput<T>> {
        self.run_batch(pairs, train, dropout_seed, true)
    }

    fn run_batch(
        &self,
        pairs: &[PairInput<T>],
        train: bool,
        dropout_seed: u64,
        with_grads: bool,
    ) -> Result<BatchOutput<T>> {
        if pairs.is_empty() {
            return Err(Error::EmptyDataset("empty batch".into()));
        }
        for p in pairs {
            self.check_image(p.a)?;
            self.check_image(p.b)?;
            if p.label > 1 {
                return Err(Error::InvalidArgument(format!("label must be 0 or 1, got {}", p.label)));
            }
        }
        let batch = pairs.len();
        let f = self.geom.stream_len;
        let traces: Vec<(StreamTrace<T>, StreamTrace<T>)> = pairs
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let sa = train.then(|| Self::stream_seed(dropout_seed, i, 0));
                let sb = train.then(|| Self::stream_seed(dropout_seed, i, 1));
                (self.stream_trace(p.a, sa, false), self.stream_trace(p.b, sb, false))
            })
            .collect();
        let mut z = Vec::with_capacity(batch * 2 * f);
        for (ta, tb) in &traces {
            z.extend_from_slice(&ta.output);
            z.extend_from_slice(&tb.output);
        }
        let head = self.head_forward(z, batch, train.then_some(dropout_seed));
        let probs: Vec<[T; 2]> = head.logits.chunks(2).map(|l| softmax([l[0], l[1]])).collect();
        let losses: Vec<T> = probs.iter().zip(pairs).map(|(p, pair)| loss(*p, pair.label)).collect();
        let mean_loss = losses.iter().copied().sum::<T>() / T::lit(batch as f64);

        let mut grads = Params::zeros(&self.config, &self.geom);
        if with_grads {
            let scale = T::lit(1.0 / batch as f64);
            let mut dlogits = Vec::with_capacity(batch * 2);
            for (p, pair) in probs.iter().zip(pairs) {
                let y = pair.label as usize;
                if p[y] < T::lit(LOSS_EPS) {
                    dlogits.extend([T::zero(), T::zero()]);
                } else {
                    for (c, &pc) in p.iter().enumerate() {
                        let target = if c == y { T::one() } else { T::zero() };
                        dlogits.push((pc - target) * scale);
                    }
                }
            }
            let (fc_grads, dz) = self.head_backward(&head, dlogits, batch);
            grads.fc = fc_grads;
            let per_sample: Vec<Vec<Layer<T>>> = traces
                .par_iter()
                .enumerate()
                .map(|(i, (ta, tb))| {
                    let row = &dz[i * 2 * f..(i + 1) * 2 * f];
                    let mut g = self.stream_backward(ta, &row[..f]);
                    for (acc, other) in g.iter_mut().zip(self.stream_backward(tb, &row[f..])) {
                        acc.add_assign(&other);
                    }
                    g
                })
                .collect();
            // Ordered reduction keeps results independent of thread count.
            for sample in &per_sample {
                for (acc, g) in grads.conv.iter_mut().zip(sample) {
                    acc.add_assign(g);
                }
            }
        }
        Ok(BatchOutput { mean_loss, probs, grads })
    }

    /// Head output for precomputed stream features (evaluation mode).
    pub fn head_logits(&self, fa: &[T], fb: &[T]) -> Result<HeadFeatures<T>> {
        self.check_features(fa)?;
        self.check_features(fb)?;
        let z = [fa, fb].concat();
        let t = self.head_forward(z, 1, None);
        let logits = [t.logits[0], t.logits[1]];
        Ok(HeadFeatures { logits, probs: softmax(logits) })
    }

    /// Backpropagates `dlogits` through the head (evaluation mode) and
    /// returns the gradients w.r.t. both stream outputs.
    pub fn head_input_gradient(&self, fa: &[T], fb: &[T], dlogits: [T; 2]) -> Result<(Vec<T>, Vec<T>)> {
        self.check_features(fa)?;
        self.check_features(fb)?;
        let t = self.head_forward([fa, fb].concat(), 1, None);
        let (_, dz) = self.head_backward(&t, dlogits.to_vec(), 1);
        let f = self.geom.stream_len;
        Ok((dz[..f].to_vec(), dz[f..].to_vec()))
    }

    /// Conv gradients contributed by one slot only (the other slot's
    /// feature gradient is zeroed). Used to check weight-sharing sums.
    #[cfg(test)]
    pub(crate) fn slot_conv_gradients(&self, a: &[T], b: &[T], label: u8, slot: usize) -> Vec<Layer<T>> {
        let f = self.geom.stream_len;
        let ta = self.stream_trace(a, None, false);
        let tb = self.stream_trace(b, None, false);
        let z = [ta.output.as_slice(), tb.output.as_slice()].concat();
        let head = self.head_forward(z, 1, None);
        let p = softmax([head.logits[0], head.logits[1]]);
        let y = label as usize;
        let dl: Vec<T> = (0..2).map(|c| p[c] - if c == y { T::one() } else { T::zero() }).collect();
        let (_, dz) = self.head_backward(&head, dl, 1);
        if slot == 0 {
            self.stream_backward(&ta, &dz[..f])
        } else {
            self.stream_backward(&tb, &dz[f..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
        (0..n * n).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = Network::<f32>::init(ModelConfig::default(), 7).unwrap();
        let b = Network::<f32>::init(ModelConfig::default(), 7).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.params.conv[0].weight_shape, vec![16, 1, 3, 3]);
        assert_eq!(a.params.fc[0].weight_shape, vec![512, 40_000]);
        assert!(a.params.conv.iter().all(|l| l.bias.iter().all(|&v| v == 0.0)));
        let c = Network::<f32>::init(ModelConfig::default(), 8).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn zero_image_gives_zero_features() {
        let net = Network::<f64>::init(ModelConfig::reduced(), 1).unwrap();
        let feats = net.stream_forward(&[0.0; 64], false, 0).unwrap();
        assert!(feats.output.iter().all(|&v| v == 0.0));
        assert_eq!(feats.last_conv.shape, (3, 2, 2));
    }

    #[test]
    fn uniform_logits_when_output_layer_is_zero() {
        let mut net = Network::<f64>::init(ModelConfig::reduced(), 2).unwrap();
        let last = net.params.fc.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = net.forward(&random_image(&mut rng, 8), &random_image(&mut rng, 8), false, 0).unwrap();
        assert_eq!(p, [0.5, 0.5]);
    }

    #[test]
    fn loss_values() {
        assert!((loss([0.5f64, 0.5], 0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((loss([0.5f64, 0.5], 1) - 0.693_147_180_559_945_3).abs() < 1e-12);
        assert_eq!(loss([0.0f64, 1.0], 1), 0.0);
        assert!((loss([0.9f64, 0.1], 1) - 2.302_585_092_994_046).abs() < 1e-12);
        // floor keeps the loss finite
        assert!((loss([1.0f64, 0.0], 1) - 27.631_021_115_928_547).abs() < 1e-9);
    }

    #[test]
    fn confident_correct_prediction_has_no_gradient() {
        let mut net = Network::<f64>::init(ModelConfig::reduced(), 3).unwrap();
        // Force p(same) to 1 through a huge output bias.
        let last = net.params.fc.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias[0] = -1000.0;
        last.bias[1] = 1000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (l, p, g) = net.backward(&random_image(&mut rng, 8), &random_image(&mut rng, 8), 1, false, 0).unwrap();
        assert_eq!(p[1], 1.0);
        assert_eq!(l, 0.0);
        for (_, _, v) in g.tensors() {
            assert!(v.iter().all(|x| x.abs() <= 1e-12));
        }
    }

    #[test]
    fn shared_weight_gradients_are_sum_of_slots() {
        let net = Network::<f64>::init(ModelConfig::reduced(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = random_image(&mut rng, 8);
        let (_, _, total) = net.backward(&img, &img, 1, false, 0).unwrap();
        let ga = net.slot_conv_gradients(&img, &img, 1, 0);
        let gb = net.slot_conv_gradients(&img, &img, 1, 1);
        for ((t, a), b) in total.conv.iter().zip(&ga).zip(&gb) {
            for ((x, y), z) in t.weight.iter().zip(&a.weight).zip(&b.weight) {
                assert!((x - (y + z)).abs() < 1e-12);
            }
        }
        // With identical inputs the two slots see identical activations, so
        // each slot's contribution differs only through the head weights.
        assert_ne!(ga[0].weight, gb[0].weight);
    }

    #[test]
    fn batch_gradient_is_mean_of_single_gradients() {
        let net = Network::<f64>::init(ModelConfig::reduced(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let imgs: Vec<Vec<f64>> = (0..6).map(|_| random_image(&mut rng, 8)).collect();
        let pairs: Vec<PairInput<f64>> =
            (0..3).map(|i| PairInput { a: &imgs[2 * i], b: &imgs[2 * i + 1], label: (i % 2) as u8 }).collect();
        let batch = net.batch_gradients(&pairs, false, 0).unwrap();
        let mut mean = Params::zeros(net.config(), net.geometry());
        for p in &pairs {
            let (_, _, g) = net.backward(p.a, p.b, p.label, false, 0).unwrap();
            mean.add_assign(&g);
        }
        for ((_, _, a), (_, _, b)) in batch.grads.tensors().iter().zip(mean.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_wrong_image_size() {
        let net = Network::<f64>::init(ModelConfig::reduced(), 1).unwrap();
        assert!(matches!(net.forward(&[0.0; 63], &[0.0; 64], false, 0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn eval_mode_ignores_dropout_seed() {
        let net = Network::<f64>::init(ModelConfig::reduced(), 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, b) = (random_image(&mut rng, 8), random_image(&mut rng, 8));
        assert_eq!(net.forward(&a, &b, false, 1).unwrap(), net.forward(&a, &b, false, 2).unwrap());
        assert_ne!(net.forward(&a, &b, true, 1).unwrap(), net.forward(&a, &b, true, 2).unwrap());
    }
}
