//! Feed-forward blocks: temporal convolution, max pooling, the linear
//! readout and the keypoint interpolation that restores full length.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::kernels::{add_wtx, back_wtx};
use crate::numerics::{Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// Stride-1 1-D convolution with symmetric zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1dParams {
    /// `out_ch × in_ch × k`
    pub kernel: Tensor,
    pub bias: Tensor,
    pub padding: usize,
}

#[derive(Clone, Debug)]
pub struct Conv1dCache {
    x: Tensor,
    /// `1.0` where the activation passed the gradient.
    mask: Option<Vec<f64>>,
}

pub struct Conv1dGrads {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub input: Option<Tensor>,
}

pub fn conv_out_len(len: usize, kernel: usize, padding: usize) -> Option<usize> {
    (len + 2 * padding).checked_sub(kernel).map(|v| v + 1)
}

impl Conv1dParams {
    pub fn zeros(out_ch: usize, in_ch: usize, k: usize, padding: usize) -> Self {
        Self {
            kernel: Tensor::zeros(&[out_ch, in_ch, k]),
            bias: Tensor::zeros(&[out_ch]),
            padding,
        }
    }

    /// Kernel uniform in `±√(6/fan_in)` (He, for the following ReLU), bias
    /// in `±1/√fan_in`, with `fan_in = in_ch·k`.
    pub fn init(out_ch: usize, in_ch: usize, k: usize, padding: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(out_ch, in_ch, k, padding);
        let fan_in = (in_ch * k) as f64;
        let (kb, bb) = ((6.0 / fan_in).sqrt(), 1.0 / fan_in.sqrt());
        for v in p.kernel.data_mut() {
            *v = rng.uniform_range(-kb, kb);
        }
        for v in p.bias.data_mut() {
            *v = rng.uniform_range(-bb, bb);
        }
        p
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.shape()[2]
    }

    /// Kernel re-laid out as `[in][k][out]` so the output channel is the
    /// contiguous axis.
    fn kernel_iko(&self) -> Vec<f64> {
        let (o_n, i_n, k_n) = (self.out_channels(), self.in_channels(), self.kernel_size());
        let src = self.kernel.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..o_n {
            for i in 0..i_n {
                for j in 0..k_n {
                    out[(i * k_n + j) * o_n + o] = src[(o * i_n + i) * k_n + j];
                }
            }
        }
        out
    }
}

/// `y[o, t] = act(b[o] + Σ_i Σ_j K[o, i, j] · x_pad[i, t + j])`.
pub fn conv1d_forward(p: &Conv1dParams, x: &Tensor, act: Activation) -> Result<(Tensor, Conv1dCache)> {
    let (o_n, i_n, k_n) = (p.out_channels(), p.in_channels(), p.kernel_size());
    if x.shape().len() != 2 || x.shape()[0] != i_n {
        return Err(Error::dim("conv1d_forward", x.shape(), &[i_n, 0]));
    }
    let len = x.shape()[1];
    let out_len = match conv_out_len(len, k_n, p.padding) {
        Some(l) if l >= 1 => l,
        _ => {
            return Err(Error::config(format!(
                "conv1d: input length {len} with kernel {k_n} and padding {} leaves no output",
                p.padding
            )))
        }
    };
    let kt = p.kernel_iko();
    // accumulate time-major, output channel contiguous
    let mut acc = vec![0.0; out_len * o_n];
    for t in 0..out_len {
        acc[t * o_n..(t + 1) * o_n].copy_from_slice(p.bias.data());
    }
    let xd = x.data();
    for i in 0..i_n {
        let row = &xd[i * len..(i + 1) * len];
        for (s, &xv) in row.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            // input s feeds output t = s + padding - j
            for j in 0..k_n {
                let t = s + p.padding;
                if t < j || t - j >= out_len {
                    continue;
                }
                let t = t - j;
                let w = &kt[(i * k_n + j) * o_n..(i * k_n + j + 1) * o_n];
                for (a, &wv) in acc[t * o_n..(t + 1) * o_n].iter_mut().zip(w) {
                    *a += xv * wv;
                }
            }
        }
    }
    let mut y = vec![0.0; o_n * out_len];
    for t in 0..out_len {
        for o in 0..o_n {
            y[o * out_len + t] = acc[t * o_n + o];
        }
    }
    let mask = match act {
        Activation::None => None,
        Activation::Relu => {
            let m: Vec<f64> = y.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
            for (v, &mv) in y.iter_mut().zip(&m) {
                *v *= mv;
            }
            Some(m)
        }
    };
    let cache = Conv1dCache { x: x.clone(), mask };
    Ok((Tensor::new(vec![o_n, out_len], y)?, cache))
}

pub fn conv1d_backward(
    p: &Conv1dParams,
    cache: &Conv1dCache,
    dy: &Tensor,
    need_input_grad: bool,
) -> Result<Conv1dGrads> {
    let (o_n, i_n, k_n) = (p.out_channels(), p.in_channels(), p.kernel_size());
    let len = cache.x.shape()[1];
    let out_len = dy.shape().get(1).copied().unwrap_or(0);
    if dy.shape() != [o_n, out_len] || conv_out_len(len, k_n, p.padding) != Some(out_len) {
        return Err(Error::dim("conv1d_backward", dy.shape(), &[o_n, out_len]));
    }
    // pre-activation gradient, time-major
    let mut g = vec![0.0; out_len * o_n];
    for o in 0..o_n {
        for t in 0..out_len {
            let idx = o * out_len + t;
            let m = cache.mask.as_ref().map_or(1.0, |m| m[idx]);
            g[t * o_n + o] = dy.data()[idx] * m;
        }
    }
    let mut dbias = vec![0.0; o_n];
    for t in 0..out_len {
        for o in 0..o_n {
            dbias[o] += g[t * o_n + o];
        }
    }
    let mut dk_iko = vec![0.0; o_n * i_n * k_n];
    let xd = cache.x.data();
    for i in 0..i_n {
        for s in 0..len {
            let xv = xd[i * len + s];
            if xv == 0.0 {
                continue;
            }
            for j in 0..k_n {
                let t = s + p.padding;
                if t < j || t - j >= out_len {
                    continue;
                }
                let t = t - j;
                let dst = &mut dk_iko[(i * k_n + j) * o_n..(i * k_n + j + 1) * o_n];
                for (d, &gv) in dst.iter_mut().zip(&g[t * o_n..(t + 1) * o_n]) {
                    *d += xv * gv;
                }
            }
        }
    }
    let mut dkernel = vec![0.0; o_n * i_n * k_n];
    for o in 0..o_n {
        for i in 0..i_n {
            for j in 0..k_n {
                dkernel[(o * i_n + i) * k_n + j] = dk_iko[(i * k_n + j) * o_n + o];
            }
        }
    }
    let input = if need_input_grad {
        let kt = p.kernel_iko();
        let mut dx = vec![0.0; i_n * len];
        for i in 0..i_n {
            for s in 0..len {
                let mut acc = 0.0;
                for j in 0..k_n {
                    let t = s + p.padding;
                    if t < j || t - j >= out_len {
                        continue;
                    }
                    let t = t - j;
                    let w = &kt[(i * k_n + j) * o_n..(i * k_n + j + 1) * o_n];
                    acc += w
                        .iter()
                        .zip(&g[t * o_n..(t + 1) * o_n])
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                }
                dx[i * len + s] = acc;
            }
        }
        Some(Tensor::new(vec![i_n, len], dx)?)
    } else {
        None
    };
    Ok(Conv1dGrads {
        kernel: Tensor::new(vec![o_n, i_n, k_n], dkernel)?,
        bias: Tensor::vector(dbias),
        input,
    })
}

#[derive(Clone, Debug)]
pub struct PoolCache {
    in_len: usize,
    /// Absolute input index of each output's maximum, `ch × out_len`.
    argmax: Vec<usize>,
}

/// Non-overlapping max over pairs; an odd trailing element is dropped and
/// ties resolve to the earlier index.
pub fn maxpool1d(x: &Tensor) -> Result<(Tensor, PoolCache)> {
    if x.shape().len() != 2 {
        return Err(Error::dim("maxpool1d", x.shape(), &[0, 0]));
    }
    let (ch, len) = (x.shape()[0], x.shape()[1]);
    if len < 2 {
        return Err(Error::config(format!("maxpool1d needs length >= 2, got {len}")));
    }
    let out_len = len / 2;
    let mut y = Vec::with_capacity(ch * out_len);
    let mut argmax = Vec::with_capacity(ch * out_len);
    for c in 0..ch {
        let row = x.row(c);
        for t in 0..out_len {
            let (a, b) = (row[2 * t], row[2 * t + 1]);
            let k = if b > a { 2 * t + 1 } else { 2 * t };
            y.push(row[k]);
            argmax.push(c * len + k);
        }
    }
    Ok((Tensor::new(vec![ch, out_len], y)?, PoolCache { in_len: len, argmax }))
}

pub fn maxpool1d_backward(cache: &PoolCache, dy: &Tensor) -> Result<Tensor> {
    if dy.len() != cache.argmax.len() {
        return Err(Error::dim("maxpool1d_backward", dy.shape(), &[cache.argmax.len()]));
    }
    let ch = dy.shape()[0];
    let mut dx = vec![0.0; ch * cache.in_len];
    for (&idx, &g) in cache.argmax.iter().zip(dy.data()) {
        dx[idx] += g;
    }
    Tensor::new(vec![ch, cache.in_len], dx)
}

/// Fully connected readout `y = Wᵀx + b`, `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Clone, Debug)]
pub struct LinearCache {
    x: Tensor,
}

pub struct LinearGrads {
    pub w: Tensor,
    pub b: Tensor,
    pub input: Tensor,
}

impl LinearParams {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Tensor::zeros(&[input, output]),
            b: Tensor::zeros(&[output]),
        }
    }

    pub fn init(input: usize, output: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(input, output);
        let bound = 1.0 / (input as f64).sqrt();
        for v in p.w.data_mut().iter_mut().chain(p.b.data_mut()) {
            *v = rng.uniform_range(-bound, bound);
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn output_size(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Applies the layer to a vector `[in]` or to every row of `[n × in]`.
pub fn linear_forward(p: &LinearParams, x: &Tensor) -> Result<(Tensor, LinearCache)> {
    let (n_in, n_out) = (p.input_size(), p.output_size());
    let (rows, shape) = match x.shape() {
        [d] if *d == n_in => (1, vec![n_out]),
        [r, d] if *d == n_in => (*r, vec![*r, n_out]),
        other => return Err(Error::dim("linear_forward", other, &[n_in])),
    };
    let mut y = Vec::with_capacity(rows * n_out);
    for r in 0..rows {
        let mut out = p.b.data().to_vec();
        add_wtx(p.w.data(), n_out, &x.data()[r * n_in..(r + 1) * n_in], &mut out);
        y.extend(out);
    }
    Ok((Tensor::new(shape, y)?, LinearCache { x: x.clone() }))
}

pub fn linear_backward(p: &LinearParams, cache: &LinearCache, dy: &Tensor) -> Result<LinearGrads> {
    let (n_in, n_out) = (p.input_size(), p.output_size());
    let rows = cache.x.len() / n_in;
    if dy.len() != rows * n_out {
        return Err(Error::dim("linear_backward", dy.shape(), &[rows, n_out]));
    }
    let mut dw = Tensor::zeros(&[n_in, n_out]);
    let mut db = vec![0.0; n_out];
    let mut dx = vec![0.0; rows * n_in];
    for r in 0..rows {
        let g = &dy.data()[r * n_out..(r + 1) * n_out];
        for (d, v) in db.iter_mut().zip(g) {
            *d += v;
        }
        back_wtx(
            p.w.data(),
            n_out,
            &cache.x.data()[r * n_in..(r + 1) * n_in],
            g,
            dw.data_mut(),
            Some(&mut dx[r * n_in..(r + 1) * n_in]),
        );
    }
    Ok(LinearGrads {
        w: dw,
        b: Tensor::vector(db),
        input: Tensor::new(cache.x.shape().to_vec(), dx)?,
    })
}

/// Piecewise-linear upsampling of `K × D` keypoints to `(K - 1)·s × D`:
/// `out[t] = kp[⌊t/s⌋] + (t mod s)/s · (kp[⌊t/s⌋ + 1] - kp[⌊t/s⌋])`.
pub fn lerp_upsample(keypoints: &Tensor, stride: usize) -> Result<Tensor> {
    let (k, d) = lerp_dims(keypoints, stride)?;
    let n = (k - 1) * stride;
    let kp = keypoints.data();
    let mut out = vec![0.0; n * d];
    for t in 0..n {
        let seg = t / stride;
        let frac = (t % stride) as f64 / stride as f64;
        for c in 0..d {
            let a = kp[seg * d + c];
            let b = kp[(seg + 1) * d + c];
            out[t * d + c] = a + frac * (b - a);
        }
    }
    Tensor::new(vec![n, d], out)
}

/// Routes `dy` back to the two bracketing keypoints with weights
/// `1 - frac` and `frac`.
pub fn lerp_upsample_backward(dy: &Tensor, keypoints: usize, stride: usize) -> Result<Tensor> {
    if keypoints < 2 || stride == 0 {
        return Err(Error::config("lerp_upsample needs K >= 2 and s >= 1"));
    }
    let n = (keypoints - 1) * stride;
    if dy.shape().len() != 2 || dy.shape()[0] != n {
        return Err(Error::dim("lerp_upsample_backward", dy.shape(), &[n, 0]));
    }
    let d = dy.shape()[1];
    let mut dkp = vec![0.0; keypoints * d];
    for t in 0..n {
        let seg = t / stride;
        let frac = (t % stride) as f64 / stride as f64;
        for c in 0..d {
            let g = dy.data()[t * d + c];
            dkp[seg * d + c] += (1.0 - frac) * g;
            dkp[(seg + 1) * d + c] += frac * g;
        }
    }
    Tensor::new(vec![keypoints, d], dkp)
}

fn lerp_dims(keypoints: &Tensor, stride: usize) -> Result<(usize, usize)> {
    let (k, d) = match keypoints.shape() {
        [k, d] => (*k, *d),
        [k] => (*k, 1),
        other => return Err(Error::dim("lerp_upsample", other, &[0, 0])),
    };
    if k < 2 {
        return Err(Error::config(format!("lerp_upsample needs at least 2 keypoints, got {k}")));
    }
    if stride == 0 {
        return Err(Error::config("lerp_upsample stride must be >= 1"));
    }
    Ok((k, d))
}
