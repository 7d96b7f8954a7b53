//! Minimal neural-network kernels with hand-written backward passes.
//!
//! Tensors are flat `Vec<f32>` in planar `(channel, row, col)` layout. The
//! convolution loops are arranged as row-wise fused multiply-adds over
//! contiguous slices so they vectorize on a single core.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// 2d convolution, kernel 3x3 (zero padding, stride 1) or 1x1.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub weight: Vec<f32>, // (out_ch, in_ch, k, k)
    pub bias: Vec<f32>,   // (out_ch)
}

impl Conv {
    pub fn new(in_ch: usize, out_ch: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(k == 1 || k == 3, "only 1x1 and 3x3 kernels are used");
        let fan_in = (in_ch * k * k) as f32;
        let bound = (1.0 / fan_in).sqrt();
        let weight = (0..out_ch * in_ch * k * k)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Conv {
            in_ch,
            out_ch,
            k,
            weight,
            bias: vec![0.0; out_ch],
        }
    }

    #[inline]
    fn w(&self, oc: usize, ic: usize, dy: usize, dx: usize) -> f32 {
        self.weight[((oc * self.in_ch + ic) * self.k + dy) * self.k + dx]
    }

    pub fn forward(&self, input: &[f32], h: usize, w: usize) -> Vec<f32> {
        debug_assert_eq!(input.len(), self.in_ch * h * w);
        let mut out = vec![0.0f32; self.out_ch * h * w];
        if self.k == 1 {
            for oc in 0..self.out_ch {
                let o0 = oc * h * w;
                out[o0..o0 + h * w].iter_mut().for_each(|v| *v = self.bias[oc]);
                for ic in 0..self.in_ch {
                    let wv = self.w(oc, ic, 0, 0);
                    let i0 = ic * h * w;
                    for i in 0..h * w {
                        out[o0 + i] += wv * input[i0 + i];
                    }
                }
            }
            return out;
        }
        for oc in 0..self.out_ch {
            let o0 = oc * h * w;
            out[o0..o0 + h * w].iter_mut().for_each(|v| *v = self.bias[oc]);
            for ic in 0..self.in_ch {
                let i0 = ic * h * w;
                for dy in 0..3usize {
                    for dx in 0..3usize {
                        let wv = self.w(oc, ic, dy, dx);
                        if wv == 0.0 {
                            continue;
                        }
                        // Output rows y where input row y+dy-1 is in range.
                        let y_lo = 1usize.saturating_sub(dy);
                        let y_hi = h - (dy.saturating_sub(1)).min(h);
                        // Output cols x where input col x+dx-1 is in range.
                        let x_lo = 1usize.saturating_sub(dx);
                        let x_hi = w - (dx.saturating_sub(1)).min(w);
                        for y in y_lo..y_hi {
                            let iy = y + dy - 1;
                            let in_row = &input[i0 + iy * w + (x_lo + dx - 1)..];
                            let out_row = &mut out[o0 + y * w + x_lo..o0 + y * w + x_hi];
                            for (ov, iv) in out_row.iter_mut().zip(in_row) {
                                *ov += wv * iv;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Gradients w.r.t. input, weight and bias given upstream `d_out`.
    pub fn backward(
        &self,
        input: &[f32],
        d_out: &[f32],
        h: usize,
        w: usize,
        d_weight: &mut [f32],
        d_bias: &mut [f32],
    ) -> Vec<f32> {
        debug_assert_eq!(d_out.len(), self.out_ch * h * w);
        let mut d_in = vec![0.0f32; self.in_ch * h * w];
        for oc in 0..self.out_ch {
            let o0 = oc * h * w;
            d_bias[oc] += d_out[o0..o0 + h * w].iter().sum::<f32>();
            for ic in 0..self.in_ch {
                let i0 = ic * h * w;
                if self.k == 1 {
                    let wv = self.w(oc, ic, 0, 0);
                    let mut dw = 0.0f32;
                    for i in 0..h * w {
                        d_in[i0 + i] += wv * d_out[o0 + i];
                        dw += input[i0 + i] * d_out[o0 + i];
                    }
                    d_weight[(oc * self.in_ch + ic) * 1] += dw;
                    continue;
                }
                for dy in 0..3usize {
                    for dx in 0..3usize {
                        let wv = self.w(oc, ic, dy, dx);
                        let widx = ((oc * self.in_ch + ic) * 3 + dy) * 3 + dx;
                        let y_lo = 1usize.saturating_sub(dy);
                        let y_hi = h - (dy.saturating_sub(1)).min(h);
                        let x_lo = 1usize.saturating_sub(dx);
                        let x_hi = w - (dx.saturating_sub(1)).min(w);
                        let mut dw = 0.0f32;
                        for y in y_lo..y_hi {
                            let iy = y + dy - 1;
                            let in_off = i0 + iy * w + (x_lo + dx - 1);
                            let out_off = o0 + y * w + x_lo;
                            let n = x_hi - x_lo;
                            let in_row = &input[in_off..in_off + n];
                            let out_row = &d_out[out_off..out_off + n];
                            let din_row = &mut d_in[in_off..in_off + n];
                            for i in 0..n {
                                din_row[i] += wv * out_row[i];
                                dw += in_row[i] * out_row[i];
                            }
                        }
                        d_weight[widx] += dw;
                    }
                }
            }
        }
        d_in
    }
}

/// Fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f32>, // (out_dim, in_dim)
    pub bias: Vec<f32>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (1.0 / in_dim as f32).sqrt();
        let weight = (0..out_dim * in_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Dense {
            in_dim,
            out_dim,
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, input: &[f32]) -> Vec<f32> {
        debug_assert_eq!(input.len(), self.in_dim);
        let mut out = self.bias.clone();
        for o in 0..self.out_dim {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = 0.0f32;
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out[o] += acc;
        }
        out
    }

    pub fn backward(
        &self,
        input: &[f32],
        d_out: &[f32],
        d_weight: &mut [f32],
        d_bias: &mut [f32],
    ) -> Vec<f32> {
        let mut d_in = vec![0.0f32; self.in_dim];
        for o in 0..self.out_dim {
            let g = d_out[o];
            d_bias[o] += g;
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let drow = &mut d_weight[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                d_in[i] += g * row[i];
                drow[i] += g * input[i];
            }
        }
        d_in
    }
}

pub fn relu(x: &mut [f32]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Backward through ReLU given the post-activation values.
pub fn relu_backward(activated: &[f32], d_out: &mut [f32]) {
    for (d, a) in d_out.iter_mut().zip(activated) {
        if *a <= 0.0 {
            *d = 0.0;
        }
    }
}

/// 2x2 average pooling; halves both spatial dims.
pub fn avgpool2(input: &[f32], ch: usize, h: usize, w: usize) -> Vec<f32> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0f32; ch * oh * ow];
    for c in 0..ch {
        for y in 0..oh {
            for x in 0..ow {
                let i = c * h * w + 2 * y * w + 2 * x;
                out[(c * oh + y) * ow + x] =
                    0.25 * (input[i] + input[i + 1] + input[i + w] + input[i + w + 1]);
            }
        }
    }
    out
}

pub fn avgpool2_backward(d_out: &[f32], ch: usize, h: usize, w: usize) -> Vec<f32> {
    let (oh, ow) = (h / 2, w / 2);
    let mut d_in = vec![0.0f32; ch * h * w];
    for c in 0..ch {
        for y in 0..oh {
            for x in 0..ow {
                let g = 0.25 * d_out[(c * oh + y) * ow + x];
                let i = c * h * w + 2 * y * w + 2 * x;
                d_in[i] += g;
                d_in[i + 1] += g;
                d_in[i + w] += g;
                d_in[i + w + 1] += g;
            }
        }
    }
    d_in
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample2(input: &[f32], ch: usize, h: usize, w: usize) -> Vec<f32> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0f32; ch * oh * ow];
    for c in 0..ch {
        for y in 0..oh {
            let sy = y / 2;
            for x in 0..ow {
                out[(c * oh + y) * ow + x] = input[(c * h + sy) * w + x / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward(d_out: &[f32], ch: usize, h: usize, w: usize) -> Vec<f32> {
    // h, w are the input (pre-upsample) dims.
    let (oh, ow) = (2 * h, 2 * w);
    let mut d_in = vec![0.0f32; ch * h * w];
    for c in 0..ch {
        for y in 0..oh {
            let sy = y / 2;
            for x in 0..ow {
                d_in[(c * h + sy) * w + x / 2] += d_out[(c * oh + y) * ow + x];
            }
        }
    }
    d_in
}

/// Channel concatenation of two planar tensors with equal spatial dims.
pub fn concat(a: &[f32], b: &[f32]) -> Vec<f32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

/// Add a per-channel bias vector across the spatial extent.
pub fn add_channel_bias(x: &mut [f32], bias: &[f32], hw: usize) {
    for (c, b) in bias.iter().enumerate() {
        for v in &mut x[c * hw..(c + 1) * hw] {
            *v += b;
        }
    }
}

/// Reduce a spatial gradient to per-channel sums (backward of the above).
pub fn channel_bias_grad(d_out: &[f32], ch: usize, hw: usize) -> Vec<f32> {
    (0..ch)
        .map(|c| d_out[c * hw..(c + 1) * hw].iter().sum())
        .collect()
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl Adam {
    pub fn new(lr: f32, param_count: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn update(&mut self, params: &mut [f32], grads: &[f32]) {
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}
