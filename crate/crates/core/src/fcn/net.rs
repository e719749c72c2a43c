//! FCN-8s topology: five conv/ReLU stacks each closed by 2×2 max-pooling,
//! 1×1 score layers on the outputs of stacks 3, 4 and 5, and a fused
//! upsampling path
//!
//! ```text
//! fused4 = up2(score5) + score4
//! fused3 = up2(fused4) + score3
//! logits = up8(fused3)
//! ```

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::RasterImage;

use super::ops::{
    ce_item, col2im, conv_item_backward, conv_item_forward, im2col, maxpool_item,
    maxpool_item_backward, relu_backward_inplace, relu_inplace, ConvParams, Upsampler,
};
use super::tensor::{Real, Tensor};

pub const NUM_STACKS: usize = 5;
pub const INPUT_MULTIPLE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackConfig {
    pub convs: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub in_channels: usize,
    pub stacks: Vec<StackConfig>,
    pub num_classes: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::with_widths(&[16, 32, 64, 128, 128], 2)
    }
}

impl NetworkConfig {
    pub fn with_widths(widths: &[usize], convs_per_stack: usize) -> Self {
        NetworkConfig {
            in_channels: 3,
            stacks: widths
                .iter()
                .map(|&width| StackConfig {
                    convs: convs_per_stack,
                    width,
                })
                .collect(),
            num_classes: 2,
        }
    }

    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.stacks.len() != NUM_STACKS {
            v.push(format!("network needs exactly {NUM_STACKS} stacks, got {}", self.stacks.len()));
        }
        for (i, s) in self.stacks.iter().enumerate() {
            if s.convs == 0 {
                v.push(format!("stack {} has no conv layers", i + 1));
            }
            if s.width == 0 {
                v.push(format!("stack {} has zero width", i + 1));
            }
        }
        if self.num_classes < 2 {
            v.push(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.in_channels == 0 {
            v.push("in_channels must be positive".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(v.join("; ")))
        }
    }
}

/// All learnable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Fcn8sParams<T> {
    pub config: NetworkConfig,
    pub stacks: Vec<Vec<ConvParams<T>>>,
    /// Score layers attached after stacks 3, 4 and 5.
    pub score3: ConvParams<T>,
    pub score4: ConvParams<T>,
    pub score5: ConvParams<T>,
}

impl<T: Real> Fcn8sParams<T> {
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut stacks = Vec::with_capacity(NUM_STACKS);
        let mut in_ch = config.in_channels;
        for s in &config.stacks {
            let mut layers = Vec::with_capacity(s.convs);
            for _ in 0..s.convs {
                layers.push(ConvParams::zeros(s.width, in_ch, 3));
                in_ch = s.width;
            }
            stacks.push(layers);
        }
        let k = config.num_classes;
        Ok(Fcn8sParams {
            score3: ConvParams::zeros(k, config.stacks[2].width, 1),
            score4: ConvParams::zeros(k, config.stacks[3].width, 1),
            score5: ConvParams::zeros(k, config.stacks[4].width, 1),
            stacks,
            config: config.clone(),
        })
    }

    /// Kaiming fan-in normal init for stack kernels; biases and score
    /// layers start at zero, so the initial logits are identically zero.
    pub fn init(config: &NetworkConfig, rng: &mut impl Rng) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        for layer in p.stacks.iter_mut().flatten() {
            let std = (2.0 / (layer.in_ch * layer.k * layer.k) as f64).sqrt();
            for w in &mut layer.weight {
                let z: f64 = StandardNormal.sample(rng);
                *w = T::from_f64(z * std);
            }
        }
        Ok(p)
    }

    /// Every learnable array in a fixed order, with a stable name.
    pub fn named_arrays(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::new();
        for (s, layers) in self.stacks.iter().enumerate() {
            for (l, c) in layers.iter().enumerate() {
                out.push((format!("stack{}.conv{}.weight", s + 1, l + 1), c.weight.as_slice()));
                out.push((format!("stack{}.conv{}.bias", s + 1, l + 1), c.bias.as_slice()));
            }
        }
        for (name, c) in [("score3", &self.score3), ("score4", &self.score4), ("score5", &self.score5)] {
            out.push((format!("{name}.weight"), c.weight.as_slice()));
            out.push((format!("{name}.bias"), c.bias.as_slice()));
        }
        out
    }

    pub fn layers(&self) -> Vec<&ConvParams<T>> {
        let mut v: Vec<&ConvParams<T>> = self.stacks.iter().flatten().collect();
        v.extend([&self.score3, &self.score4, &self.score5]);
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut ConvParams<T>> {
        let mut v: Vec<&mut ConvParams<T>> = self.stacks.iter_mut().flatten().collect();
        v.extend([&mut self.score3, &mut self.score4, &mut self.score5]);
        v
    }

    /// Mutable views of every array in [`Fcn8sParams::named_arrays`] order.
    pub fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for c in self.layers_mut() {
            out.push(c.weight.as_mut_slice());
            out.push(c.bias.as_mut_slice());
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|c| c.weight.len() + c.bias.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers_mut().into_iter().zip(other.layers()) {
            a.weight.iter_mut().zip(&b.weight).for_each(|(x, &y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, &y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in self.arrays_mut() {
            a.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn cast<U: Real>(&self) -> Fcn8sParams<U> {
        let cast = |c: &ConvParams<T>| ConvParams {
            out_ch: c.out_ch,
            in_ch: c.in_ch,
            k: c.k,
            weight: c.weight.iter().map(|&v| U::from_f64(v.as_f64())).collect(),
            bias: c.bias.iter().map(|&v| U::from_f64(v.as_f64())).collect(),
        };
        Fcn8sParams {
            config: self.config.clone(),
            stacks: self.stacks.iter().map(|l| l.iter().map(cast).collect()).collect(),
            score3: cast(&self.score3),
            score4: cast(&self.score4),
            score5: cast(&self.score5),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers()
            .iter()
            .all(|c| c.weight.iter().chain(&c.bias).all(|v| v.is_finite()))
    }
}

/// Intermediate values of one item's forward pass needed for backward.
struct ItemCache<T> {
    /// Per conv layer: its column matrix (or raw input for 1×1) and its
    /// post-ReLU output.
    convs: Vec<(Vec<T>, Vec<T>)>,
    pools: Vec<Vec<u32>>,
    /// Pooled output of each stack.
    pooled: Vec<Vec<T>>,
}

/// Shapes observed during a forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardShapes {
    /// (channels, height, width) after each stack's pooling.
    pub stacks: Vec<[usize; 3]>,
    pub logits: [usize; 3],
}

fn check_input<T: Real>(params: &Fcn8sParams<T>, c: usize, h: usize, w: usize) -> Result<()> {
    if c != params.config.in_channels {
        return Err(Error::Shape(format!(
            "network expects {} input channels, got {c}",
            params.config.in_channels
        )));
    }
    if h == 0 || w == 0 || !h.is_multiple_of(INPUT_MULTIPLE) || !w.is_multiple_of(INPUT_MULTIPLE) {
        return Err(Error::Shape(format!(
            "input dims must be positive multiples of {INPUT_MULTIPLE}, got {h}x{w}"
        )));
    }
    Ok(())
}

/// Forward one C×H×W item. With `cache` set, everything backward needs is
/// retained; otherwise intermediates are dropped as soon as possible.
fn forward_item<T: Real>(
    params: &Fcn8sParams<T>,
    x: &[T],
    h: usize,
    w: usize,
    keep: bool,
) -> (Vec<T>, Option<ItemCache<T>>, ForwardShapes) {
    let mut cache = ItemCache {
        convs: Vec::new(),
        pools: Vec::new(),
        pooled: Vec::new(),
    };
    let mut shapes = ForwardShapes {
        stacks: Vec::new(),
        logits: [0; 3],
    };
    let mut cur = x.to_vec();
    let mut c = params.config.in_channels;
    let (mut ch, mut cw) = (h, w);
    let mut stack_out: Vec<(Vec<T>, usize, usize)> = Vec::with_capacity(NUM_STACKS);
    for layers in &params.stacks {
        for layer in layers {
            let cols = im2col(&cur, c, ch, cw, layer.k);
            let mut out = conv_item_forward(layer, &cols, ch * cw);
            relu_inplace(&mut out);
            c = layer.out_ch;
            if keep {
                cache.convs.push((cols, out.clone()));
            }
            cur = out;
        }
        let (pooled, arg) = maxpool_item(&cur, c, ch, cw);
        ch /= 2;
        cw /= 2;
        shapes.stacks.push([c, ch, cw]);
        if keep {
            cache.pools.push(arg);
            cache.pooled.push(pooled.clone());
        }
        stack_out.push((pooled.clone(), ch, cw));
        cur = pooled;
    }

    let k = params.config.num_classes;
    let (p3, h3, w3) = &stack_out[2];
    let (p4, h4, w4) = &stack_out[3];
    let (p5, h5, w5) = &stack_out[4];
    let score3 = conv_item_forward(&params.score3, p3, h3 * w3);
    let score4 = conv_item_forward(&params.score4, p4, h4 * w4);
    let score5 = conv_item_forward(&params.score5, p5, h5 * w5);

    let mut fused4 = Upsampler::new(*h5, *w5, 2).forward(&score5, k);
    fused4.iter_mut().zip(&score4).for_each(|(a, &b)| *a += b);
    let mut fused3 = Upsampler::new(*h4, *w4, 2).forward(&fused4, k);
    fused3.iter_mut().zip(&score3).for_each(|(a, &b)| *a += b);
    let logits = Upsampler::new(*h3, *w3, 8).forward(&fused3, k);
    shapes.logits = [k, h3 * 8, w3 * 8];
    (logits, keep.then_some(cache), shapes)
}

/// Backward one item from `dlogits`, accumulating parameter gradients.
fn backward_item<T: Real>(
    params: &Fcn8sParams<T>,
    cache: &ItemCache<T>,
    dlogits: &[T],
    h: usize,
    w: usize,
    grad: &mut Fcn8sParams<T>,
) {
    let k = params.config.num_classes;
    let dims: Vec<(usize, usize)> = (1..=NUM_STACKS).map(|s| (h >> s, w >> s)).collect();
    let (h3, w3) = dims[2];
    let (h4, w4) = dims[3];
    let (h5, w5) = dims[4];

    let dfused3 = Upsampler::new(h3, w3, 8).backward(dlogits, k);
    let dfused4 = Upsampler::new(h4, w4, 2).backward(&dfused3, k);
    let dscore5 = Upsampler::new(h5, w5, 2).backward(&dfused4, k);

    // gradients arriving at each stack's pooled output from score layers
    let mut dpooled: Vec<Option<Vec<T>>> = vec![None; NUM_STACKS];
    let score_grads = [
        (2, &params.score3, &mut grad.score3, &dfused3),
        (3, &params.score4, &mut grad.score4, &dfused4),
        (4, &params.score5, &mut grad.score5, &dscore5),
    ];
    for (s, layer, g, dy) in score_grads {
        let (sh, sw) = dims[s];
        let d = conv_item_backward(layer, &cache.pooled[s], dy, sh * sw, g, true);
        dpooled[s] = d;
    }

    let mut layer_idx = cache.convs.len();
    let mut carry: Option<Vec<T>> = None;
    for s in (0..NUM_STACKS).rev() {
        let d = match (dpooled[s].take(), carry.take()) {
            (Some(mut a), Some(b)) => {
                a.iter_mut().zip(&b).for_each(|(x, &y)| *x += y);
                a
            }
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => unreachable!("stack {s} receives no gradient"),
        };
        let (ih, iw) = if s == 0 { (h, w) } else { dims[s - 1] };
        let c_out = params.stacks[s].last().unwrap().out_ch;
        let mut dy = maxpool_item_backward(&d, &cache.pools[s], c_out, ih, iw);
        for (l, layer) in params.stacks[s].iter().enumerate().rev() {
            layer_idx -= 1;
            let (cols, out) = &cache.convs[layer_idx];
            relu_backward_inplace(out, &mut dy);
            let first_layer = s == 0 && l == 0;
            let dcols = conv_item_backward(
                layer,
                cols,
                &dy,
                ih * iw,
                &mut grad.stacks[s][l],
                !first_layer,
            );
            if let Some(dc) = dcols {
                dy = col2im(&dc, layer.in_ch, ih, iw, layer.k);
            }
        }
        if s > 0 {
            carry = Some(dy);
        }
    }
}

/// Logits for every item of `x` (N × num_classes × H × W).
pub fn fcn8s_forward<T: Real>(params: &Fcn8sParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(fcn8s_forward_shapes(params, x)?.0)
}

/// Like [`fcn8s_forward`], also reporting the per-stack feature shapes.
pub fn fcn8s_forward_shapes<T: Real>(
    params: &Fcn8sParams<T>,
    x: &Tensor<T>,
) -> Result<(Tensor<T>, ForwardShapes)> {
    let [n, c, h, w] = x.shape();
    check_input(params, c, h, w)?;
    let mut data = Vec::with_capacity(n * params.config.num_classes * h * w);
    let mut shapes = None;
    for i in 0..n {
        let (logits, _, s) = forward_item(params, x.item(i), h, w, false);
        data.extend(logits);
        shapes = Some(s);
    }
    let shapes = shapes.ok_or_else(|| Error::Shape("empty batch".into()))?;
    Ok((Tensor::new([n, params.config.num_classes, h, w], data)?, shapes))
}

/// Which ReLUs are active and which element each max-pool window picked,
/// for every item. Within a region where this does not change the network
/// is an affine function of its parameters, so it tells whether a small
/// perturbation crossed a non-differentiable point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationPattern {
    pub relu: Vec<Vec<bool>>,
    pub pool: Vec<Vec<u32>>,
}

pub fn activation_pattern<T: Real>(params: &Fcn8sParams<T>, x: &Tensor<T>) -> Result<ActivationPattern> {
    let [n, c, h, w] = x.shape();
    check_input(params, c, h, w)?;
    let mut pat = ActivationPattern {
        relu: Vec::new(),
        pool: Vec::new(),
    };
    for i in 0..n {
        let (_, cache, _) = forward_item(params, x.item(i), h, w, true);
        let cache = cache.expect("kept");
        pat.relu
            .extend(cache.convs.into_iter().map(|(_, out)| out.iter().map(|&v| v > T::zero()).collect()));
        pat.pool.extend(cache.pools);
    }
    Ok(pat)
}

/// Gradient of arbitrary upstream `dlogits` w.r.t. every parameter.
pub fn fcn8s_backward<T: Real>(
    params: &Fcn8sParams<T>,
    x: &Tensor<T>,
    dlogits: &Tensor<T>,
) -> Result<Fcn8sParams<T>> {
    let [n, c, h, w] = x.shape();
    check_input(params, c, h, w)?;
    if dlogits.shape() != [n, params.config.num_classes, h, w] {
        return Err(Error::Shape("logit gradient does not match logits".into()));
    }
    let mut grad = Fcn8sParams::zeros(&params.config)?;
    for i in 0..n {
        let (_, cache, _) = forward_item(params, x.item(i), h, w, true);
        backward_item(params, &cache.unwrap(), dlogits.item(i), h, w, &mut grad);
    }
    Ok(grad)
}

/// Masked mean cross-entropy of a batch and its parameter gradient.
///
/// Items are evaluated in parallel; their contributions are summed in item
/// order, so the result is bitwise independent of the thread count.
pub fn loss_and_grad<T: Real>(
    params: &Fcn8sParams<T>,
    x: &Tensor<T>,
    labels: &[&[u8]],
) -> Result<(f64, Fcn8sParams<T>)> {
    let [n, c, h, w] = x.shape();
    check_input(params, c, h, w)?;
    if labels.len() != n || labels.iter().any(|l| l.len() != h * w) {
        return Err(Error::Shape("labels do not match input".into()));
    }
    let k = params.config.num_classes;
    let parts: Vec<(f64, usize, Fcn8sParams<T>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (logits, cache, _) = forward_item(params, x.item(i), h, w, true);
            let (loss, count, dlogits) = ce_item(&logits, labels[i], k, h * w);
            let mut g = Fcn8sParams::zeros(&params.config).expect("validated config");
            if count > 0 {
                backward_item(params, &cache.unwrap(), &dlogits, h, w, &mut g);
            }
            (loss, count, g)
        })
        .collect();
    let mut total = 0.0;
    let mut count = 0usize;
    let mut grad = Fcn8sParams::zeros(&params.config)?;
    for (l, c, g) in &parts {
        total += l;
        count += c;
        grad.add_assign(g);
    }
    if count == 0 {
        return Ok((0.0, grad));
    }
    grad.scale(T::from_f64(1.0 / count as f64));
    Ok((total / count as f64, grad))
}

/// Map 8-bit samples to network inputs, `v/255 − 0.5`, replicating a
/// single gray channel when the network expects three.
pub fn image_to_tensor<T: Real>(img: &RasterImage, channels: usize) -> Result<Tensor<T>> {
    let src = if img.channels() == channels {
        img.clone()
    } else if img.channels() == 1 && channels == 3 {
        img.to_rgb()
    } else {
        return Err(Error::Shape(format!(
            "cannot feed a {}-channel image to a {channels}-channel network",
            img.channels()
        )));
    };
    let (h, w) = (src.height(), src.width());
    let mut data = vec![T::zero(); channels * h * w];
    for (p, px) in src.data().chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * h * w + p] = T::from_f64(v as f64 / 255.0 - 0.5);
        }
    }
    Tensor::new([1, channels, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fcn::ops::softmax_ce_masked;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config() -> NetworkConfig {
        NetworkConfig::with_widths(&[2, 2, 2, 2, 2], 1)
    }

    /// Random weights everywhere, including biases and score layers.
    fn random_params(cfg: &NetworkConfig, seed: u64) -> Fcn8sParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Fcn8sParams::<f64>::zeros(cfg).unwrap();
        for a in p.arrays_mut() {
            for v in a {
                *v = rng.random_range(-0.8..0.8);
            }
        }
        p
    }

    #[test]
    fn shapes_follow_the_input() {
        let p = Fcn8sParams::<f32>::init(&tiny_config(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let x = Tensor::<f32>::zeros([1, 3, 64, 96]);
        let (y, s) = fcn8s_forward_shapes(&p, &x).unwrap();
        assert_eq!(y.shape(), [1, 2, 64, 96]);
        assert_eq!(s.stacks[4], [2, 2, 3]);
        assert_eq!(s.logits, [2, 64, 96]);
        assert!(fcn8s_forward(&p, &Tensor::zeros([1, 3, 48, 64])).is_err());
        assert!(fcn8s_forward(&p, &Tensor::zeros([1, 1, 64, 64])).is_err());
    }

    #[test]
    fn fresh_init_gives_zero_logits() {
        let cfg = NetworkConfig::default();
        let p = Fcn8sParams::<f32>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::from_fn([1, 3, 32, 32], |_| rng.random_range(-0.5f32..0.5));
        assert!(fcn8s_forward(&p, &x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let cfg = tiny_config();
        let p = random_params(&cfg, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = Tensor::from_fn([1, 3, 64, 64], |_| rng.random_range(-0.5..0.5));
        let r = Tensor::from_fn([1, 2, 64, 64], |_| rng.random_range(-1.0..1.0));
        let g = fcn8s_backward(&p, &x, &r).unwrap();
        let loss = |q: &Fcn8sParams<f64>| -> f64 {
            fcn8s_forward(q, &x)
                .unwrap()
                .data()
                .iter()
                .zip(r.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let grads: Vec<Vec<f64>> = g.named_arrays().into_iter().map(|(_, a)| a.to_vec()).collect();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (ai, ga) in grads.iter().enumerate() {
            for i in (0..ga.len()).step_by(ga.len().div_ceil(4)) {
                let mut q = p.clone();
                q.arrays_mut()[ai][i] += h;
                let fp = loss(&q);
                q.arrays_mut()[ai][i] -= 2.0 * h;
                let fm = loss(&q);
                let num = (fp - fm) / (2.0 * h);
                worst = worst.max((num - ga[i]).abs() / num.abs().max(ga[i].abs()).max(1e-8));
            }
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn loss_and_grad_matches_generic_backward() {
        let cfg = tiny_config();
        let p = random_params(&cfg, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = Tensor::from_fn([2, 3, 32, 32], |_| rng.random_range(-0.5..0.5));
        let labels: Vec<Vec<u8>> = (0..2)
            .map(|_| (0..1024).map(|_| rng.random_range(0..3u8)).collect())
            .collect();
        let refs: Vec<&[u8]> = labels.iter().map(|l| l.as_slice()).collect();
        let (loss, grad) = loss_and_grad(&p, &x, &refs).unwrap();
        let logits = fcn8s_forward(&p, &x).unwrap();
        let (expect_loss, dlogits) = softmax_ce_masked(&logits, &refs).unwrap();
        let expect = fcn8s_backward(&p, &x, &dlogits).unwrap();
        assert!((loss - expect_loss).abs() < 1e-12);
        for ((_, a), (_, b)) in grad.named_arrays().iter().zip(expect.named_arrays()) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
        let (l2, g2) = loss_and_grad(&p, &x, &refs).unwrap();
        assert_eq!((l2, &g2), (loss, &grad));
    }

    #[test]
    fn cast_roundtrip_and_input_mapping() {
        let p = random_params(&tiny_config(), 3);
        let back: Fcn8sParams<f64> = p.cast::<f32>().cast();
        for ((_, a), (_, b)) in p.named_arrays().iter().zip(back.named_arrays()) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-6);
            }
        }
        let img = RasterImage::new(1, 2, 1, vec![0, 255]).unwrap();
        let t = image_to_tensor::<f64>(&img, 3).unwrap();
        assert_eq!(t.shape(), [1, 3, 1, 2]);
        assert_eq!(t.data(), &[-0.5, 0.5, -0.5, 0.5, -0.5, 0.5]);
    }

    #[test]
    fn config_violations_are_all_reported() {
        let cfg = NetworkConfig {
            in_channels: 0,
            stacks: vec![StackConfig { convs: 0, width: 0 }],
            num_classes: 1,
        };
        assert_eq!(cfg.violations().len(), 5);
    }
}
