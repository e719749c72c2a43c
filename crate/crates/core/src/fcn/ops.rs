//! Differentiable building blocks. Every forward op has a backward
//! counterpart returning exact analytic gradients.

use crate::error::{Error, Result};
use crate::imaging::{bilinear_taps, Tap};
use crate::page_gt::AMBIGUOUS;

use super::tensor::{Real, Tensor};

/// Convolution weights: `out_ch × in_ch × k × k` kernel plus one bias per
/// output channel. Stride 1, zero "same" padding, odd `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub out_ch: usize,
    pub in_ch: usize,
    pub k: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvParams<T> {
    pub fn zeros(out_ch: usize, in_ch: usize, k: usize) -> Self {
        ConvParams {
            out_ch,
            in_ch,
            k,
            weight: vec![T::zero(); out_ch * in_ch * k * k],
            bias: vec![T::zero(); out_ch],
        }
    }

    pub fn new(out_ch: usize, in_ch: usize, k: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if k.is_multiple_of(2) {
            return Err(Error::Shape(format!("kernel size must be odd, got {k}")));
        }
        if weight.len() != out_ch * in_ch * k * k || bias.len() != out_ch {
            return Err(Error::Shape(format!(
                "{out_ch}x{in_ch}x{k}x{k} conv got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(ConvParams {
            out_ch,
            in_ch,
            k,
            weight,
            bias,
        })
    }

    fn col_rows(&self) -> usize {
        self.in_ch * self.k * self.k
    }
}

/// Unfold one C×H×W item into a `(C·k·k) × (H·W)` matrix.
pub(crate) fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize) -> Vec<T> {
    let p = k / 2;
    let hw = h * w;
    let mut cols = vec![T::zero(); c * k * k * hw];
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let dx = kx as isize - p as isize;
                // valid output x range where 0 <= x + dx < w
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - p as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let s0 = (x0 as isize + dx) as usize;
                    dst[y * w + x0..y * w + x1].copy_from_slice(&src_row[s0..s0 + (x1 - x0)]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back into a C×H×W item.
pub(crate) fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, k: usize) -> Vec<T> {
    let p = k / 2;
    let hw = h * w;
    let mut x = vec![T::zero(); c * hw];
    for ci in 0..c {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let dx = kx as isize - p as isize;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - p as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s0 = (x0 as isize + dx) as usize;
                    let dst = &mut plane[sy as usize * w + s0..sy as usize * w + s0 + (x1 - x0)];
                    for (d, &v) in dst.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                        *d += v;
                    }
                }
            }
        }
    }
    x
}

/// Forward pass for one item given its (possibly unfolded) input.
/// For `k = 1` the input itself is the column matrix.
pub(crate) fn conv_item_forward<T: Real>(p: &ConvParams<T>, cols: &[T], hw: usize) -> Vec<T> {
    let mut out = vec![T::zero(); p.out_ch * hw];
    for (co, chunk) in out.chunks_exact_mut(hw).enumerate() {
        chunk.fill(p.bias[co]);
    }
    T::gemm(p.out_ch, p.col_rows(), hw, &p.weight, false, cols, false, T::one(), &mut out);
    out
}

/// Accumulates kernel and bias gradients into `grad`; returns the gradient
/// w.r.t. the column matrix when `want_input` is set.
pub(crate) fn conv_item_backward<T: Real>(
    p: &ConvParams<T>,
    cols: &[T],
    dy: &[T],
    hw: usize,
    grad: &mut ConvParams<T>,
    want_input: bool,
) -> Option<Vec<T>> {
    T::gemm(p.out_ch, hw, p.col_rows(), dy, false, cols, true, T::one(), &mut grad.weight);
    for (co, chunk) in dy.chunks_exact(hw).enumerate() {
        grad.bias[co] += chunk.iter().copied().sum::<T>();
    }
    want_input.then(|| {
        let mut dcols = vec![T::zero(); p.col_rows() * hw];
        T::gemm(p.col_rows(), p.out_ch, hw, &p.weight, true, dy, false, T::zero(), &mut dcols);
        dcols
    })
}

fn check_conv_input<T: Real>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<()> {
    if x.c() != p.in_ch {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {}",
            p.in_ch,
            x.c()
        )));
    }
    Ok(())
}

/// Stride-1 "same" cross-correlation.
pub fn conv2d_forward<T: Real>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    check_conv_input(x, p)?;
    let [n, c, h, w] = x.shape();
    let hw = h * w;
    let mut data = Vec::with_capacity(n * p.out_ch * hw);
    for i in 0..n {
        let item = x.item(i);
        let out = if p.k == 1 {
            conv_item_forward(p, item, hw)
        } else {
            conv_item_forward(p, &im2col(item, c, h, w, p.k), hw)
        };
        data.extend(out);
    }
    Tensor::new([n, p.out_ch, h, w], data)
}

/// Gradients of a convolution: `(d input, d params)`.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    p: &ConvParams<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, ConvParams<T>)> {
    check_conv_input(x, p)?;
    let [n, c, h, w] = x.shape();
    if dy.shape() != [n, p.out_ch, h, w] {
        return Err(Error::Shape(format!(
            "conv output gradient has shape {:?}, expected {:?}",
            dy.shape(),
            [n, p.out_ch, h, w]
        )));
    }
    let hw = h * w;
    let mut grad = ConvParams::zeros(p.out_ch, p.in_ch, p.k);
    let mut dx = Vec::with_capacity(x.data().len());
    for i in 0..n {
        let item = x.item(i);
        let dcols = if p.k == 1 {
            conv_item_backward(p, item, dy.item(i), hw, &mut grad, true).unwrap()
        } else {
            let cols = im2col(item, c, h, w, p.k);
            let dcols = conv_item_backward(p, &cols, dy.item(i), hw, &mut grad, true).unwrap();
            col2im(&dcols, c, h, w, p.k)
        };
        dx.extend(dcols);
    }
    Ok((Tensor::new(x.shape(), dx)?, grad))
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Gradient of ReLU given its *output*.
pub fn relu_backward<T: Real>(out: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = out
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(out.shape(), data).expect("same shape")
}

pub(crate) fn relu_inplace<T: Real>(v: &mut [T]) {
    for x in v {
        if !(*x > T::zero()) {
            *x = T::zero();
        }
    }
}

pub(crate) fn relu_backward_inplace<T: Real>(out: &[T], dy: &mut [T]) {
    for (g, &o) in dy.iter_mut().zip(out) {
        if !(o > T::zero()) {
            *g = T::zero();
        }
    }
}

/// 2×2 max-pooling with stride 2 over one C×H×W item; returns the pooled
/// values and, per output, the flat in-plane index of its source.
pub(crate) fn maxpool_item<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let base = 2 * oy * w + 2 * ox;
                // row-major scan, strict > keeps the first maximum
                let mut best = base;
                for idx in [base + 1, base + w, base + w + 1] {
                    if plane[idx] > plane[best] {
                        best = idx;
                    }
                }
                out.push(plane[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_item_backward<T: Real>(
    dy: &[T],
    arg: &[u32],
    c: usize,
    h: usize,
    w: usize,
) -> Vec<T> {
    let per = (h / 2) * (w / 2);
    let mut dx = vec![T::zero(); c * h * w];
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for j in 0..per {
            plane[arg[ci * per + j] as usize] += dy[ci * per + j];
        }
    }
    dx
}

/// Argmax indices from [`maxpool2d`], kept for the backward pass.
#[derive(Debug, Clone)]
pub struct PoolIndices {
    input_shape: [usize; 4],
    arg: Vec<u32>,
}

pub fn maxpool2d<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let [n, c, h, w] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("max-pool needs even dims, got {h}x{w}")));
    }
    let mut data = Vec::with_capacity(x.data().len() / 4);
    let mut arg = Vec::with_capacity(x.data().len() / 4);
    for i in 0..n {
        let (o, a) = maxpool_item(x.item(i), c, h, w);
        data.extend(o);
        arg.extend(a);
    }
    Ok((
        Tensor::new([n, c, h / 2, w / 2], data)?,
        PoolIndices {
            input_shape: x.shape(),
            arg,
        },
    ))
}

pub fn maxpool2d_backward<T: Real>(dy: &Tensor<T>, idx: &PoolIndices) -> Result<Tensor<T>> {
    let [n, c, h, w] = idx.input_shape;
    if dy.shape() != [n, c, h / 2, w / 2] {
        return Err(Error::Shape("pool gradient does not match pooled shape".into()));
    }
    let per = c * (h / 2) * (w / 2);
    let mut data = Vec::with_capacity(n * c * h * w);
    for i in 0..n {
        data.extend(maxpool_item_backward(dy.item(i), &idx.arg[i * per..(i + 1) * per], c, h, w));
    }
    Tensor::new(idx.input_shape, data)
}

/// Fixed bilinear resampling of every plane of a C×H×W item by `factor`,
/// using the same sample positions as [`crate::imaging::resize_bilinear`].
pub(crate) struct Upsampler<T> {
    ty: Vec<(usize, usize, T, T)>,
    tx: Vec<(usize, usize, T, T)>,
    h: usize,
    w: usize,
}

impl<T: Real> Upsampler<T> {
    pub(crate) fn new(h: usize, w: usize, factor: usize) -> Self {
        let conv = |t: &Tap| (t.i0, t.i1, T::from_f64(1.0 - t.frac), T::from_f64(t.frac));
        Upsampler {
            ty: bilinear_taps(h, h * factor).iter().map(conv).collect(),
            tx: bilinear_taps(w, w * factor).iter().map(conv).collect(),
            h,
            w,
        }
    }

    fn out_hw(&self) -> (usize, usize) {
        (self.ty.len(), self.tx.len())
    }

    pub(crate) fn forward(&self, x: &[T], c: usize) -> Vec<T> {
        let (h, w) = (self.h, self.w);
        let (oh, ow) = self.out_hw();
        let mut out = vec![T::zero(); c * oh * ow];
        let mut rows = vec![T::zero(); h * ow];
        for ci in 0..c {
            let plane = &x[ci * h * w..(ci + 1) * h * w];
            for y in 0..h {
                let src = &plane[y * w..(y + 1) * w];
                for (ox, &(i0, i1, a, b)) in self.tx.iter().enumerate() {
                    rows[y * ow + ox] = src[i0] * a + src[i1] * b;
                }
            }
            let dst = &mut out[ci * oh * ow..(ci + 1) * oh * ow];
            for (oy, &(i0, i1, a, b)) in self.ty.iter().enumerate() {
                let r0 = &rows[i0 * ow..(i0 + 1) * ow];
                let r1 = &rows[i1 * ow..(i1 + 1) * ow];
                for ((d, &u), &v) in dst[oy * ow..(oy + 1) * ow].iter_mut().zip(r0).zip(r1) {
                    *d = u * a + v * b;
                }
            }
        }
        out
    }

    /// Transpose of [`Upsampler::forward`].
    pub(crate) fn backward(&self, dy: &[T], c: usize) -> Vec<T> {
        let (h, w) = (self.h, self.w);
        let (oh, ow) = self.out_hw();
        let mut dx = vec![T::zero(); c * h * w];
        let mut rows = vec![T::zero(); h * ow];
        for ci in 0..c {
            rows.fill(T::zero());
            let src = &dy[ci * oh * ow..(ci + 1) * oh * ow];
            for (oy, &(i0, i1, a, b)) in self.ty.iter().enumerate() {
                let g = &src[oy * ow..(oy + 1) * ow];
                for (j, &v) in g.iter().enumerate() {
                    rows[i0 * ow + j] += v * a;
                }
                for (j, &v) in g.iter().enumerate() {
                    rows[i1 * ow + j] += v * b;
                }
            }
            let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
            for y in 0..h {
                let r = &rows[y * ow..(y + 1) * ow];
                let dst = &mut plane[y * w..(y + 1) * w];
                for (&(i0, i1, a, b), &v) in self.tx.iter().zip(r) {
                    dst[i0] += v * a;
                    dst[i1] += v * b;
                }
            }
        }
        dx
    }
}

pub fn bilinear_upsample<T: Real>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(Error::InvalidArgument("upsampling factor must be positive".into()));
    }
    let [n, c, h, w] = x.shape();
    let up = Upsampler::new(h, w, factor);
    let mut data = Vec::with_capacity(x.data().len() * factor * factor);
    for i in 0..n {
        data.extend(up.forward(x.item(i), c));
    }
    Tensor::new([n, c, h * factor, w * factor], data)
}

pub fn bilinear_upsample_backward<T: Real>(
    dy: &Tensor<T>,
    factor: usize,
    input_shape: [usize; 4],
) -> Result<Tensor<T>> {
    let [n, c, h, w] = input_shape;
    if dy.shape() != [n, c, h * factor, w * factor] {
        return Err(Error::Shape("upsample gradient does not match output shape".into()));
    }
    let up = Upsampler::new(h, w, factor);
    let mut data = Vec::with_capacity(n * c * h * w);
    for i in 0..n {
        data.extend(up.backward(dy.item(i), c));
    }
    Tensor::new(input_shape, data)
}

/// Per-pixel softmax over the class axis of one K×H×W item.
pub(crate) fn softmax_item<T: Real>(logits: &[T], k: usize, hw: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * hw];
    for p in 0..hw {
        let mut m = logits[p];
        for c in 1..k {
            m = m.max(logits[c * hw + p]);
        }
        let mut s = T::zero();
        for c in 0..k {
            let e = (logits[c * hw + p] - m).exp();
            out[c * hw + p] = e;
            s += e;
        }
        for c in 0..k {
            out[c * hw + p] = out[c * hw + p] / s;
        }
    }
    out
}

pub fn softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let [n, k, h, w] = logits.shape();
    let mut data = Vec::with_capacity(logits.data().len());
    for i in 0..n {
        data.extend(softmax_item(logits.item(i), k, h * w));
    }
    Tensor::new(logits.shape(), data).expect("same shape")
}

/// Unnormalized masked cross-entropy for one item: returns the summed
/// loss, the number of contributing pixels, and `softmax − onehot` on
/// contributing pixels (zero on ambiguous ones).
pub(crate) fn ce_item<T: Real>(logits: &[T], labels: &[u8], k: usize, hw: usize) -> (f64, usize, Vec<T>) {
    let mut grad = softmax_item(logits, k, hw);
    let mut loss = 0.0;
    let mut count = 0;
    for (p, &l) in labels.iter().enumerate() {
        if l == AMBIGUOUS || l as usize >= k {
            for c in 0..k {
                grad[c * hw + p] = T::zero();
            }
            continue;
        }
        let l = l as usize;
        // log-softmax computed from logits for accuracy
        let mut m = logits[p];
        for c in 1..k {
            m = m.max(logits[c * hw + p]);
        }
        let lse = (0..k)
            .map(|c| (logits[c * hw + p] - m).as_f64().exp())
            .sum::<f64>()
            .ln()
            + m.as_f64();
        loss += lse - logits[l * hw + p].as_f64();
        count += 1;
        grad[l * hw + p] = grad[l * hw + p] - T::one();
    }
    (loss, count, grad)
}

/// Mean cross-entropy over non-ambiguous pixels and its gradient w.r.t.
/// the logits. `labels[i]` holds item `i`'s H×W labels.
pub fn softmax_ce_masked<T: Real>(logits: &Tensor<T>, labels: &[&[u8]]) -> Result<(f64, Tensor<T>)> {
    let [n, k, h, w] = logits.shape();
    if labels.len() != n || labels.iter().any(|l| l.len() != h * w) {
        return Err(Error::Shape("labels do not match logits".into()));
    }
    let mut total = 0.0;
    let mut count = 0;
    let mut grad = Vec::with_capacity(logits.data().len());
    for (i, lab) in labels.iter().enumerate() {
        let (l, c, g) = ce_item(logits.item(i), lab, k, h * w);
        total += l;
        count += c;
        grad.extend(g);
    }
    if count == 0 {
        return Ok((0.0, Tensor::zeros(logits.shape())));
    }
    let scale = T::from_f64(1.0 / count as f64);
    for g in &mut grad {
        *g *= scale;
    }
    Ok((total / count as f64, Tensor::new(logits.shape(), grad)?))
}
