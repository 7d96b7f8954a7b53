//! A small convolutional epsilon-predictor with two downsampling stages, skip
//! connections, sinusoidal time embedding and an additive condition pathway.
//! Sized to train on a CPU in minutes at 40x40.

use super::nn::{
    add_channel_bias, avgpool2, avgpool2_backward, channel_bias_grad, concat, relu,
    relu_backward, upsample2, upsample2_backward, Conv, Dense,
};
use super::Denoiser;
use crate::error::{Error, Result};
use crate::rng;

pub const TIME_DIM: usize = 32;
pub const JOINT_DIM: usize = 32;

/// Condition handling: unconditional models never read the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondMode {
    Unconditional,
    Conditional { dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallUnet {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub base: usize,
    pub mode: CondMode,
    conv_in: Conv,   // C -> F
    conv_enc2: Conv, // F -> 2F at H/2
    conv_mid: Conv,  // 2F -> 2F at H/4
    conv_dec2: Conv, // 4F -> 2F at H/2 (after skip concat)
    conv_dec1: Conv, // 2F -> F at H
    conv_out: Conv,  // 2F -> C, 1x1 (after skip concat)
    dense_time: Dense,
    dense_cond: Dense,
    bias_enc1: Dense, // JOINT -> F
    bias_enc2: Dense, // JOINT -> 2F
    bias_mid: Dense,  // JOINT -> 2F
    bias_dec2: Dense, // JOINT -> 2F
}

/// Forward activations retained for the backward pass.
pub struct ForwardCache {
    x: Vec<f32>,
    temb: Vec<f32>,
    cemb: Vec<f32>,
    joint: Vec<f32>,
    e1: Vec<f32>,
    p1: Vec<f32>,
    e2: Vec<f32>,
    p2: Vec<f32>,
    mid: Vec<f32>,
    cat1: Vec<f32>,
    d2: Vec<f32>,
    u2: Vec<f32>,
    d1: Vec<f32>,
    cat2: Vec<f32>,
}

fn sinusoidal_embedding(t: usize, dim: usize) -> Vec<f32> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (10_000.0f32).powf(-(i as f32) / (half - 1) as f32);
        out.push((t as f32 * freq).sin());
    }
    for i in 0..half {
        let freq = (10_000.0f32).powf(-(i as f32) / (half - 1) as f32);
        out.push((t as f32 * freq).cos());
    }
    out
}

impl SmallUnet {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        base: usize,
        mode: CondMode,
        seed: u64,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Config(format!("channels must be 1 or 3, got {channels}")));
        }
        if height % 4 != 0 || width % 4 != 0 || height < 8 || width < 8 {
            return Err(Error::Config(format!(
                "model dims must be multiples of 4 and >= 8, got {height}x{width}"
            )));
        }
        if base < 2 {
            return Err(Error::Config("base channel count must be >= 2".into()));
        }
        let cond_dim = match mode {
            CondMode::Unconditional => super::condition::COND_DIM,
            CondMode::Conditional { dim } => dim,
        };
        let mut r = rng::stream(seed, &["unet-init"]);
        let f = base;
        Ok(SmallUnet {
            channels,
            height,
            width,
            base,
            mode,
            conv_in: Conv::new(channels, f, 3, &mut r),
            conv_enc2: Conv::new(f, 2 * f, 3, &mut r),
            conv_mid: Conv::new(2 * f, 2 * f, 3, &mut r),
            conv_dec2: Conv::new(4 * f, 2 * f, 3, &mut r),
            conv_dec1: Conv::new(2 * f, f, 3, &mut r),
            conv_out: Conv::new(2 * f, channels, 1, &mut r),
            dense_time: Dense::new(TIME_DIM, JOINT_DIM, &mut r),
            dense_cond: Dense::new(cond_dim, JOINT_DIM, &mut r),
            bias_enc1: Dense::new(JOINT_DIM, f, &mut r),
            bias_enc2: Dense::new(JOINT_DIM, 2 * f, &mut r),
            bias_mid: Dense::new(JOINT_DIM, 2 * f, &mut r),
            bias_dec2: Dense::new(JOINT_DIM, 2 * f, &mut r),
        })
    }

    pub fn cond_dim(&self) -> usize {
        self.dense_cond.in_dim
    }

    pub fn forward_full(
        &self,
        x: &[f32],
        cond: Option<&[f32]>,
        t: usize,
        keep_cache: bool,
    ) -> (Vec<f32>, Option<ForwardCache>) {
        let (h, w) = (self.height, self.width);
        let (h2, w2) = (h / 2, w / 2);
        let (h4, w4) = (h / 4, w / 4);
        let f = self.base;

        let temb = sinusoidal_embedding(t, TIME_DIM);
        let cemb: Vec<f32> = match (self.mode, cond) {
            (CondMode::Conditional { .. }, Some(c)) => c.to_vec(),
            _ => vec![0.0; self.dense_cond.in_dim],
        };
        let mut joint = self.dense_time.forward(&temb);
        let cj = self.dense_cond.forward(&cemb);
        for (j, c) in joint.iter_mut().zip(&cj) {
            *j += c;
        }
        relu(&mut joint);

        let tb1 = self.bias_enc1.forward(&joint);
        let tb2 = self.bias_enc2.forward(&joint);
        let tb3 = self.bias_mid.forward(&joint);
        let tb4 = self.bias_dec2.forward(&joint);

        let mut e1 = self.conv_in.forward(x, h, w);
        add_channel_bias(&mut e1, &tb1, h * w);
        relu(&mut e1);

        let p1 = avgpool2(&e1, f, h, w);
        let mut e2 = self.conv_enc2.forward(&p1, h2, w2);
        add_channel_bias(&mut e2, &tb2, h2 * w2);
        relu(&mut e2);

        let p2 = avgpool2(&e2, 2 * f, h2, w2);
        let mut mid = self.conv_mid.forward(&p2, h4, w4);
        add_channel_bias(&mut mid, &tb3, h4 * w4);
        relu(&mut mid);

        let u1 = upsample2(&mid, 2 * f, h4, w4);
        let cat1 = concat(&u1, &e2);
        let mut d2 = self.conv_dec2.forward(&cat1, h2, w2);
        add_channel_bias(&mut d2, &tb4, h2 * w2);
        relu(&mut d2);

        let u2 = upsample2(&d2, 2 * f, h2, w2);
        let mut d1 = self.conv_dec1.forward(&u2, h, w);
        relu(&mut d1);

        let cat2 = concat(&d1, &e1);
        let out = self.conv_out.forward(&cat2, h, w);

        let cache = keep_cache.then(|| ForwardCache {
            x: x.to_vec(),
            temb,
            cemb,
            joint,
            e1,
            p1,
            e2,
            p2,
            mid,
            cat1,
            d2,
            u2,
            d1,
            cat2,
        });
        (out, cache)
    }

    /// Accumulate parameter gradients for one sample into `grads`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f32], grads: &mut UnetGrads) {
        let (h, w) = (self.height, self.width);
        let (h2, w2) = (h / 2, w / 2);
        let (h4, w4) = (h / 4, w / 4);
        let f = self.base;

        // out = conv_out(cat2)
        let d_cat2 = self.conv_out.backward(
            &cache.cat2,
            d_out,
            h,
            w,
            &mut grads.conv_out_w,
            &mut grads.conv_out_b,
        );
        let (d_d1_part, d_e1_part) = d_cat2.split_at(f * h * w);

        // d1 = relu(conv_dec1(u2))
        let mut d_d1 = d_d1_part.to_vec();
        relu_backward(&cache.d1, &mut d_d1);
        let d_u2 = self.conv_dec1.backward(
            &cache.u2,
            &d_d1,
            h,
            w,
            &mut grads.conv_dec1_w,
            &mut grads.conv_dec1_b,
        );

        // u2 = upsample(d2); d2 = relu(conv_dec2(cat1) + tb4)
        let mut d_d2 = upsample2_backward(&d_u2, 2 * f, h2, w2);
        relu_backward(&cache.d2, &mut d_d2);
        let g_tb4 = channel_bias_grad(&d_d2, 2 * f, h2 * w2);
        let d_cat1 = self.conv_dec2.backward(
            &cache.cat1,
            &d_d2,
            h2,
            w2,
            &mut grads.conv_dec2_w,
            &mut grads.conv_dec2_b,
        );
        let (d_u1, d_e2_skip) = d_cat1.split_at(2 * f * h2 * w2);

        // u1 = upsample(mid); mid = relu(conv_mid(p2) + tb3)
        let mut d_mid = upsample2_backward(d_u1, 2 * f, h4, w4);
        relu_backward(&cache.mid, &mut d_mid);
        let g_tb3 = channel_bias_grad(&d_mid, 2 * f, h4 * w4);
        let d_p2 = self.conv_mid.backward(
            &cache.p2,
            &d_mid,
            h4,
            w4,
            &mut grads.conv_mid_w,
            &mut grads.conv_mid_b,
        );

        // p2 = avgpool(e2); e2 = relu(conv_enc2(p1) + tb2); skip adds d_e2_skip
        let mut d_e2 = avgpool2_backward(&d_p2, 2 * f, h2, w2);
        for (a, b) in d_e2.iter_mut().zip(d_e2_skip) {
            *a += b;
        }
        relu_backward(&cache.e2, &mut d_e2);
        let g_tb2 = channel_bias_grad(&d_e2, 2 * f, h2 * w2);
        let d_p1 = self.conv_enc2.backward(
            &cache.p1,
            &d_e2,
            h2,
            w2,
            &mut grads.conv_enc2_w,
            &mut grads.conv_enc2_b,
        );

        // p1 = avgpool(e1); e1 = relu(conv_in(x) + tb1); skip adds d_e1_part
        let mut d_e1 = avgpool2_backward(&d_p1, f, h, w);
        for (a, b) in d_e1.iter_mut().zip(d_e1_part) {
            *a += b;
        }
        relu_backward(&cache.e1, &mut d_e1);
        let g_tb1 = channel_bias_grad(&d_e1, f, h * w);
        let _d_x = self.conv_in.backward(
            &cache.x,
            &d_e1,
            h,
            w,
            &mut grads.conv_in_w,
            &mut grads.conv_in_b,
        );

        // Embedding pathway: joint feeds four bias heads.
        let mut d_joint = vec![0.0f32; JOINT_DIM];
        for (dense, g, gw, gb) in [
            (&self.bias_enc1, &g_tb1, &mut grads.bias_enc1_w, &mut grads.bias_enc1_b),
            (&self.bias_enc2, &g_tb2, &mut grads.bias_enc2_w, &mut grads.bias_enc2_b),
            (&self.bias_mid, &g_tb3, &mut grads.bias_mid_w, &mut grads.bias_mid_b),
            (&self.bias_dec2, &g_tb4, &mut grads.bias_dec2_w, &mut grads.bias_dec2_b),
        ] {
            let d = dense.backward(&cache.joint, g, gw, gb);
            for (a, b) in d_joint.iter_mut().zip(&d) {
                *a += b;
            }
        }
        relu_backward(&cache.joint, &mut d_joint);
        self.dense_time.backward(
            &cache.temb,
            &d_joint,
            &mut grads.dense_time_w,
            &mut grads.dense_time_b,
        );
        if matches!(self.mode, CondMode::Conditional { .. }) {
            self.dense_cond.backward(
                &cache.cemb,
                &d_joint,
                &mut grads.dense_cond_w,
                &mut grads.dense_cond_b,
            );
        }
    }

    /// Parameter tensors in canonical order, flattened.
    pub fn to_flat(&self) -> Vec<f32> {
        let mut out = Vec::new();
        for (w, b) in self.param_refs() {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_refs().iter().map(|(w, b)| w.len() + b.len()).sum()
    }

    pub fn apply_flat(&mut self, flat: &[f32]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Model(format!(
                "checkpoint has {} parameters, model needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for (w, b) in self.param_refs_mut() {
            let wl = w.len();
            w.copy_from_slice(&flat[off..off + wl]);
            off += wl;
            let bl = b.len();
            b.copy_from_slice(&flat[off..off + bl]);
            off += bl;
        }
        Ok(())
    }

    fn param_refs(&self) -> Vec<(&Vec<f32>, &Vec<f32>)> {
        vec![
            (&self.conv_in.weight, &self.conv_in.bias),
            (&self.conv_enc2.weight, &self.conv_enc2.bias),
            (&self.conv_mid.weight, &self.conv_mid.bias),
            (&self.conv_dec2.weight, &self.conv_dec2.bias),
            (&self.conv_dec1.weight, &self.conv_dec1.bias),
            (&self.conv_out.weight, &self.conv_out.bias),
            (&self.dense_time.weight, &self.dense_time.bias),
            (&self.dense_cond.weight, &self.dense_cond.bias),
            (&self.bias_enc1.weight, &self.bias_enc1.bias),
            (&self.bias_enc2.weight, &self.bias_enc2.bias),
            (&self.bias_mid.weight, &self.bias_mid.bias),
            (&self.bias_dec2.weight, &self.bias_dec2.bias),
        ]
    }

    fn param_refs_mut(&mut self) -> Vec<(&mut Vec<f32>, &mut Vec<f32>)> {
        vec![
            (&mut self.conv_in.weight, &mut self.conv_in.bias),
            (&mut self.conv_enc2.weight, &mut self.conv_enc2.bias),
            (&mut self.conv_mid.weight, &mut self.conv_mid.bias),
            (&mut self.conv_dec2.weight, &mut self.conv_dec2.bias),
            (&mut self.conv_dec1.weight, &mut self.conv_dec1.bias),
            (&mut self.conv_out.weight, &mut self.conv_out.bias),
            (&mut self.dense_time.weight, &mut self.dense_time.bias),
            (&mut self.dense_cond.weight, &mut self.dense_cond.bias),
            (&mut self.bias_enc1.weight, &mut self.bias_enc1.bias),
            (&mut self.bias_enc2.weight, &mut self.bias_enc2.bias),
            (&mut self.bias_mid.weight, &mut self.bias_mid.bias),
            (&mut self.bias_dec2.weight, &mut self.bias_dec2.bias),
        ]
    }
}

impl Denoiser for SmallUnet {
    fn channels(&self) -> usize {
        self.channels
    }

    fn height(&self) -> usize {
        self.height
    }

    fn width(&self) -> usize {
        self.width
    }

    fn predict_eps(&self, x_t: &[f32], cond: Option<&[f32]>, t: usize) -> Vec<f32> {
        self.forward_full(x_t, cond, t, false).0
    }
}

/// Gradient accumulator mirroring the parameter layout.
#[derive(Debug, Clone)]
pub struct UnetGrads {
    pub conv_in_w: Vec<f32>,
    pub conv_in_b: Vec<f32>,
    pub conv_enc2_w: Vec<f32>,
    pub conv_enc2_b: Vec<f32>,
    pub conv_mid_w: Vec<f32>,
    pub conv_mid_b: Vec<f32>,
    pub conv_dec2_w: Vec<f32>,
    pub conv_dec2_b: Vec<f32>,
    pub conv_dec1_w: Vec<f32>,
    pub conv_dec1_b: Vec<f32>,
    pub conv_out_w: Vec<f32>,
    pub conv_out_b: Vec<f32>,
    pub dense_time_w: Vec<f32>,
    pub dense_time_b: Vec<f32>,
    pub dense_cond_w: Vec<f32>,
    pub dense_cond_b: Vec<f32>,
    pub bias_enc1_w: Vec<f32>,
    pub bias_enc1_b: Vec<f32>,
    pub bias_enc2_w: Vec<f32>,
    pub bias_enc2_b: Vec<f32>,
    pub bias_mid_w: Vec<f32>,
    pub bias_mid_b: Vec<f32>,
    pub bias_dec2_w: Vec<f32>,
    pub bias_dec2_b: Vec<f32>,
}

impl UnetGrads {
    pub fn zeros_like(model: &SmallUnet) -> Self {
        let z = |v: &Vec<f32>| vec![0.0f32; v.len()];
        UnetGrads {
            conv_in_w: z(&model.conv_in.weight),
            conv_in_b: z(&model.conv_in.bias),
            conv_enc2_w: z(&model.conv_enc2.weight),
            conv_enc2_b: z(&model.conv_enc2.bias),
            conv_mid_w: z(&model.conv_mid.weight),
            conv_mid_b: z(&model.conv_mid.bias),
            conv_dec2_w: z(&model.conv_dec2.weight),
            conv_dec2_b: z(&model.conv_dec2.bias),
            conv_dec1_w: z(&model.conv_dec1.weight),
            conv_dec1_b: z(&model.conv_dec1.bias),
            conv_out_w: z(&model.conv_out.weight),
            conv_out_b: z(&model.conv_out.bias),
            dense_time_w: z(&model.dense_time.weight),
            dense_time_b: z(&model.dense_time.bias),
            dense_cond_w: z(&model.dense_cond.weight),
            dense_cond_b: z(&model.dense_cond.bias),
            bias_enc1_w: z(&model.bias_enc1.weight),
            bias_enc1_b: z(&model.bias_enc1.bias),
            bias_enc2_w: z(&model.bias_enc2.weight),
            bias_enc2_b: z(&model.bias_enc2.bias),
            bias_mid_w: z(&model.bias_mid.weight),
            bias_mid_b: z(&model.bias_mid.bias),
            bias_dec2_w: z(&model.bias_dec2.weight),
            bias_dec2_b: z(&model.bias_dec2.bias),
        }
    }

    pub fn to_flat(&self) -> Vec<f32> {
        let mut out = Vec::new();
        for part in [
            &self.conv_in_w,
            &self.conv_in_b,
            &self.conv_enc2_w,
            &self.conv_enc2_b,
            &self.conv_mid_w,
            &self.conv_mid_b,
            &self.conv_dec2_w,
            &self.conv_dec2_b,
            &self.conv_dec1_w,
            &self.conv_dec1_b,
            &self.conv_out_w,
            &self.conv_out_b,
            &self.dense_time_w,
            &self.dense_time_b,
            &self.dense_cond_w,
            &self.dense_cond_b,
            &self.bias_enc1_w,
            &self.bias_enc1_b,
            &self.bias_enc2_w,
            &self.bias_enc2_b,
            &self.bias_mid_w,
            &self.bias_mid_b,
            &self.bias_dec2_w,
            &self.bias_dec2_b,
        ] {
            out.extend_from_slice(part);
        }
        out
    }

    pub fn add(&mut self, other: &UnetGrads) {
        for (a, b) in [
            (&mut self.conv_in_w, &other.conv_in_w),
            (&mut self.conv_in_b, &other.conv_in_b),
            (&mut self.conv_enc2_w, &other.conv_enc2_w),
            (&mut self.conv_enc2_b, &other.conv_enc2_b),
            (&mut self.conv_mid_w, &other.conv_mid_w),
            (&mut self.conv_mid_b, &other.conv_mid_b),
            (&mut self.conv_dec2_w, &other.conv_dec2_w),
            (&mut self.conv_dec2_b, &other.conv_dec2_b),
            (&mut self.conv_dec1_w, &other.conv_dec1_w),
            (&mut self.conv_dec1_b, &other.conv_dec1_b),
            (&mut self.conv_out_w, &other.conv_out_w),
            (&mut self.conv_out_b, &other.conv_out_b),
            (&mut self.dense_time_w, &other.dense_time_w),
            (&mut self.dense_time_b, &other.dense_time_b),
            (&mut self.dense_cond_w, &other.dense_cond_w),
            (&mut self.dense_cond_b, &other.dense_cond_b),
            (&mut self.bias_enc1_w, &other.bias_enc1_w),
            (&mut self.bias_enc1_b, &other.bias_enc1_b),
            (&mut self.bias_enc2_w, &other.bias_enc2_w),
            (&mut self.bias_enc2_b, &other.bias_enc2_b),
            (&mut self.bias_mid_w, &other.bias_mid_w),
            (&mut self.bias_mid_b, &other.bias_mid_b),
            (&mut self.bias_dec2_w, &other.bias_dec2_w),
            (&mut self.bias_dec2_b, &other.bias_dec2_b),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f32) {
        for part in [
            &mut self.conv_in_w,
            &mut self.conv_in_b,
            &mut self.conv_enc2_w,
            &mut self.conv_enc2_b,
            &mut self.conv_mid_w,
            &mut self.conv_mid_b,
            &mut self.conv_dec2_w,
            &mut self.conv_dec2_b,
            &mut self.conv_dec1_w,
            &mut self.conv_dec1_b,
            &mut self.conv_out_w,
            &mut self.conv_out_b,
            &mut self.dense_time_w,
            &mut self.dense_time_b,
            &mut self.dense_cond_w,
            &mut self.dense_cond_b,
            &mut self.bias_enc1_w,
            &mut self.bias_enc1_b,
            &mut self.bias_enc2_w,
            &mut self.bias_enc2_b,
            &mut self.bias_mid_w,
            &mut self.bias_mid_b,
            &mut self.bias_dec2_w,
            &mut self.bias_dec2_b,
        ] {
            for v in part.iter_mut() {
                *v *= factor;
            }
        }
    }
}
