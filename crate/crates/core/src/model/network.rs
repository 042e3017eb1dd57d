//! The classifier: conv(3×3, c→8) → relu → maxpool(2) → conv(3×3, 8→16) →
//! relu → maxpool(2) → dense(→64) → relu → dropout → dense(→2) → softmax.
//!
//! Tensors are channel-major (`C × H × W`) per sample. Convolutions use zero
//! "same" padding; pooling drops an odd trailing row or column.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

pub const CONV1_CHANNELS: usize = 8;
pub const CONV2_CHANNELS: usize = 16;
pub const HIDDEN: usize = 64;
pub const CLASSES: usize = 2;
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InputShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl InputShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self> {
        if height < 4 || width < 4 || channels == 0 {
            return Err(Error::Shape(format!(
                "model input must be at least 4x4 with one channel, got {height}x{width}x{channels}"
            )));
        }
        Ok(InputShape {
            height,
            width,
            channels,
        })
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn pooled1(&self) -> (usize, usize) {
        (self.height / 2, self.width / 2)
    }

    fn pooled2(&self) -> (usize, usize) {
        let (h, w) = self.pooled1();
        (h / 2, w / 2)
    }

    pub fn flat_len(&self) -> usize {
        let (h, w) = self.pooled2();
        h * w * CONV2_CHANNELS
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(name: &'static str, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            name,
            shape,
            data: vec![0.0; n],
        }
    }
}

pub const TENSOR_NAMES: [&str; 8] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "fc1.weight",
    "fc1.bias",
    "fc2.weight",
    "fc2.bias",
];

/// Tensor shapes in declaration order for a given input.
pub fn tensor_shapes(input: &InputShape) -> Vec<(&'static str, Vec<usize>)> {
    let shapes = vec![
        vec![CONV1_CHANNELS, input.channels, 3, 3],
        vec![CONV1_CHANNELS],
        vec![CONV2_CHANNELS, CONV1_CHANNELS, 3, 3],
        vec![CONV2_CHANNELS],
        vec![HIDDEN, input.flat_len()],
        vec![HIDDEN],
        vec![CLASSES, HIDDEN],
        vec![CLASSES],
    ];
    TENSOR_NAMES.into_iter().zip(shapes).collect()
}

/// Weights in declaration order, plus a generation counter bumped by every update.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub input: InputShape,
    pub dropout_p: f64,
    pub tensors: Vec<Tensor>,
    pub(crate) generation: u64,
}

/// Same layout as [`ModelParams::tensors`].
pub type Gradients = Vec<Tensor>;

impl ModelParams {
    pub fn zeros(input: InputShape, dropout_p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::Param(format!("dropout_p must lie in [0, 1), got {dropout_p}")));
        }
        let tensors = tensor_shapes(&input)
            .into_iter()
            .map(|(name, shape)| Tensor::zeros(name, shape))
            .collect();
        Ok(ModelParams {
            input,
            dropout_p,
            tensors,
            generation: 0,
        })
    }

    /// He-uniform weights (`±sqrt(6 / fan_in)`), zero biases.
    pub fn init(input: InputShape, dropout_p: f64, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(input, dropout_p)?;
        let mut rng = rng_from_seed(seed);
        for t in params.tensors.iter_mut().filter(|t| t.shape.len() > 1) {
            let fan_in: usize = t.shape[1..].iter().product();
            let limit = (6.0 / fan_in as f64).sqrt();
            for w in &mut t.data {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(params)
    }

    pub fn zero_grads(&self) -> Gradients {
        self.tensors
            .iter()
            .map(|t| Tensor::zeros(t.name, t.shape.clone()))
            .collect()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub(crate) fn bump(&mut self) {
        self.generation += 1;
    }

    fn w(&self, i: usize) -> &[f64] {
        &self.tensors[i].data
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Activations kept for backpropagation of one sample.
#[derive(Clone, Debug)]
pub(crate) struct SampleCache {
    input: Vec<f64>,
    z1: Vec<f64>,
    p1: Vec<f64>,
    arg1: Vec<usize>,
    z2: Vec<f64>,
    p2: Vec<f64>,
    arg2: Vec<usize>,
    z3: Vec<f64>,
    mask: Option<Vec<f64>>,
    a3d: Vec<f64>,
    probs: [f64; 2],
}

impl SampleCache {
    pub(crate) fn probs(&self) -> [f64; 2] {
        self.probs
    }
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    samples: Vec<SampleCache>,
    generation: u64,
}

#[derive(Clone, Debug)]
pub struct Forward {
    pub probs: Vec<[f64; 2]>,
    pub cache: Option<ForwardCache>,
}

fn conv3x3(input: &[f64], cin: usize, h: usize, w: usize, weight: &[f64], bias: &[f64], cout: usize) -> Vec<f64> {
    let mut out = vec![0.0; cout * h * w];
    for o in 0..cout {
        let plane = &mut out[o * h * w..(o + 1) * h * w];
        plane.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..cin {
            let src = &input[i * h * w..(i + 1) * h * w];
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = weight[((o * cin + i) * 3 + ky) * 3 + kx];
                    if k == 0.0 {
                        continue;
                    }
                    let (x_lo, x_hi) = (usize::from(kx == 0), w - usize::from(kx == 2));
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                        let orow = &mut plane[y * w..(y + 1) * w];
                        for x in x_lo..x_hi {
                            orow[x] += k * srow[x + kx - 1];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients and optionally the input gradient of [`conv3x3`].
#[allow(clippy::too_many_arguments)]
fn conv3x3_backward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    dz: &[f64],
    cout: usize,
    dweight: &mut [f64],
    dbias: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    for o in 0..cout {
        let dplane = &dz[o * h * w..(o + 1) * h * w];
        dbias[o] += dplane.iter().sum::<f64>();
        for i in 0..cin {
            let src = &input[i * h * w..(i + 1) * h * w];
            for ky in 0..3 {
                for kx in 0..3 {
                    let widx = ((o * cin + i) * 3 + ky) * 3 + kx;
                    let (x_lo, x_hi) = (usize::from(kx == 0), w - usize::from(kx == 2));
                    let mut acc = 0.0;
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                        let drow = &dplane[y * w..(y + 1) * w];
                        for x in x_lo..x_hi {
                            acc += drow[x] * srow[x + kx - 1];
                        }
                    }
                    dweight[widx] += acc;
                    if let Some(din) = dinput.as_deref_mut() {
                        let k = weight[widx];
                        let dsrc = &mut din[i * h * w..(i + 1) * h * w];
                        for y in 0..h {
                            let sy = y as isize + ky as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let drow = &dplane[y * w..(y + 1) * w];
                            let srow = &mut dsrc[sy as usize * w..(sy as usize + 1) * w];
                            for x in x_lo..x_hi {
                                srow[x + kx - 1] += k * drow[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// relu then 2×2 max pooling; returns pooled values and the winning flat indices.
fn relu_maxpool(z: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ph * pw);
    let mut arg = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        for py in 0..ph {
            for px in 0..pw {
                let mut best = (f64::NEG_INFINITY, 0);
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let idx = ch * h * w + (2 * py + dy) * w + 2 * px + dx;
                    if z[idx] > best.0 {
                        best = (z[idx], idx);
                    }
                }
                out.push(best.0.max(0.0));
                arg.push(best.1);
            }
        }
    }
    (out, arg)
}

/// Routes pooled gradients back through the max and the relu.
fn relu_maxpool_backward(dp: &[f64], arg: &[usize], z: &[f64]) -> Vec<f64> {
    let mut dz = vec![0.0; z.len()];
    for (g, &i) in dp.iter().zip(arg) {
        if z[i] > 0.0 {
            dz[i] += g;
        }
    }
    dz
}

fn dense(input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, b)| b + weight[o * n..(o + 1) * n].iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
        .collect()
}

fn softmax2(logits: &[f64]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Inverted-dropout mask: kept units scaled by `1 / (1 − p)`.
pub(crate) fn dropout_mask(p: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..HIDDEN)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect()
}

pub(crate) fn forward_sample(params: &ModelParams, x: &[f64], mask: Option<Vec<f64>>) -> SampleCache {
    let s = params.input;
    let (h, w) = (s.height, s.width);
    let z1 = conv3x3(x, s.channels, h, w, params.w(0), params.w(1), CONV1_CHANNELS);
    let (p1, arg1) = relu_maxpool(&z1, CONV1_CHANNELS, h, w);
    let (h1, w1) = s.pooled1();
    let z2 = conv3x3(&p1, CONV1_CHANNELS, h1, w1, params.w(2), params.w(3), CONV2_CHANNELS);
    let (p2, arg2) = relu_maxpool(&z2, CONV2_CHANNELS, h1, w1);
    let z3 = dense(&p2, params.w(4), params.w(5));
    let a3d: Vec<f64> = match &mask {
        Some(m) => z3.iter().zip(m).map(|(z, k)| z.max(0.0) * k).collect(),
        None => z3.iter().map(|z| z.max(0.0)).collect(),
    };
    let logits = dense(&a3d, params.w(6), params.w(7));
    SampleCache {
        input: x.to_vec(),
        z1,
        p1,
        arg1,
        z2,
        p2,
        arg2,
        z3,
        mask,
        a3d,
        probs: softmax2(&logits),
    }
}

/// Adds `scale ·` this sample's loss gradient into `grads`.
pub(crate) fn backward_sample(params: &ModelParams, c: &SampleCache, class: usize, scale: f64, grads: &mut Gradients) {
    let s = params.input;
    let mut dlogits = [c.probs[0], c.probs[1]];
    dlogits[class] -= 1.0;
    dlogits.iter_mut().for_each(|g| *g *= scale);

    let mut da3d = vec![0.0; HIDDEN];
    {
        let w2 = params.w(6);
        for (o, g) in dlogits.iter().enumerate() {
            grads[7].data[o] += g;
            let row = &mut grads[6].data[o * HIDDEN..(o + 1) * HIDDEN];
            for (j, a) in c.a3d.iter().enumerate() {
                row[j] += g * a;
                da3d[j] += g * w2[o * HIDDEN + j];
            }
        }
    }

    let dz3: Vec<f64> = (0..HIDDEN)
        .map(|j| {
            let keep = c.mask.as_ref().map_or(1.0, |m| m[j]);
            if c.z3[j] > 0.0 {
                da3d[j] * keep
            } else {
                0.0
            }
        })
        .collect();

    let n = c.p2.len();
    let mut dp2 = vec![0.0; n];
    {
        let w1 = params.w(4);
        for (o, g) in dz3.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            grads[5].data[o] += g;
            let row = &mut grads[4].data[o * n..(o + 1) * n];
            let wrow = &w1[o * n..(o + 1) * n];
            for j in 0..n {
                row[j] += g * c.p2[j];
                dp2[j] += g * wrow[j];
            }
        }
    }

    let (h1, w1) = s.pooled1();
    let dz2 = relu_maxpool_backward(&dp2, &c.arg2, &c.z2);
    let mut dp1 = vec![0.0; c.p1.len()];
    {
        let (gw, rest) = grads.split_at_mut(3);
        conv3x3_backward(
            &c.p1,
            CONV1_CHANNELS,
            h1,
            w1,
            params.w(2),
            &dz2,
            CONV2_CHANNELS,
            &mut gw[2].data,
            &mut rest[0].data,
            Some(&mut dp1),
        );
    }
    let dz1 = relu_maxpool_backward(&dp1, &c.arg1, &c.z1);
    let (gw, rest) = grads.split_at_mut(1);
    conv3x3_backward(
        &c.input,
        s.channels,
        s.height,
        s.width,
        params.w(0),
        &dz1,
        CONV1_CHANNELS,
        &mut gw[0].data,
        &mut rest[0].data,
        None,
    );
}

fn check_batch(params: &ModelParams, batch: &[Vec<f64>]) -> Result<()> {
    let want = params.input.len();
    if let Some((i, x)) = batch.iter().enumerate().find(|(_, x)| x.len() != want) {
        return Err(Error::Shape(format!(
            "sample {i} has {} values, model expects {}x{}x{} = {want}",
            x.len(),
            params.input.height,
            params.input.width,
            params.input.channels
        )));
    }
    Ok(())
}

/// Class probabilities for a batch. Train mode draws one dropout mask per
/// sample from `rng` (in batch order) and keeps activations for [`backward`].
pub fn forward(params: &ModelParams, batch: &[Vec<f64>], mode: Mode, rng: &mut Rng) -> Result<Forward> {
    check_batch(params, batch)?;
    match mode {
        Mode::Infer => Ok(Forward {
            probs: predict_proba(params, batch)?,
            cache: None,
        }),
        Mode::Train => {
            let samples: Vec<SampleCache> = batch
                .iter()
                .map(|x| {
                    let mask = (params.dropout_p > 0.0).then(|| dropout_mask(params.dropout_p, rng));
                    forward_sample(params, x, mask)
                })
                .collect();
            Ok(Forward {
                probs: samples.iter().map(|c| c.probs).collect(),
                cache: Some(ForwardCache {
                    samples,
                    generation: params.generation,
                }),
            })
        }
    }
}

/// Inference-mode probabilities; samples are evaluated in parallel.
pub fn predict_proba(params: &ModelParams, batch: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    use rayon::prelude::*;
    check_batch(params, batch)?;
    Ok(batch
        .par_iter()
        .map(|x| forward_sample(params, x, None).probs)
        .collect())
}

/// Mean negative log-likelihood of the true classes.
pub fn loss(probs: &[[f64; 2]], classes: &[usize]) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(classes)
        .map(|(p, &c)| -p[c].max(LOG_CLAMP).ln())
        .sum();
    total / probs.len() as f64
}

/// Gradients of [`loss`] for the batch cached by a train-mode [`forward`].
pub fn backward(params: &ModelParams, cache: Option<&ForwardCache>, classes: &[usize]) -> Result<Gradients> {
    let cache = cache.ok_or_else(|| {
        Error::State("backward needs the cache of a train-mode forward pass".into())
    })?;
    if cache.generation != params.generation {
        return Err(Error::State(format!(
            "cache is stale: produced at parameter generation {}, parameters are at {}",
            cache.generation, params.generation
        )));
    }
    if cache.samples.len() != classes.len() {
        return Err(Error::State(format!(
            "cache holds {} samples but {} labels were given",
            cache.samples.len(),
            classes.len()
        )));
    }
    let mut grads = params.zero_grads();
    let scale = 1.0 / classes.len() as f64;
    for (c, &class) in cache.samples.iter().zip(classes) {
        backward_sample(params, c, class, scale, &mut grads);
    }
    Ok(grads)
}

/// Loss gradient with respect to the logits of one sample.
pub fn logit_gradient(probs: [f64; 2], class: usize) -> [f64; 2] {
    let mut g = probs;
    g[class] -= 1.0;
    g
}
