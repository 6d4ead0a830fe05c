//! DeskNet: a small fixed CNN with exact reverse-mode gradients.
//!
//! Architecture: `conv3x3(C→8) → ReLU → maxpool2 → conv3x3(8→16) → ReLU →
//! maxpool2 → global average pool → dense(16→1)`, producing one logit per
//! sample. Max pooling breaks ties in favour of the first position in
//! row-major order, which also decides where its gradient goes.

mod gradcheck;
mod layers;
mod loss;
mod model;

use rand::Rng;

pub use gradcheck::{
    finite_diff_check, random_case, relative_error, GradCheckCase, GradCheckReport, GradModel, StepSchedule,
};
pub use loss::bce_loss;
pub use model::{Model, ModelTape};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use layers::{conv3x3_backward, conv3x3_forward, maxpool2_backward, maxpool2_forward, relu_inplace};

pub const CONV1_OUT: usize = 8;
pub const CONV2_OUT: usize = 16;

/// Gradient (or any per-parameter array) for one named parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub name: &'static str,
    pub values: Vec<f64>,
}

pub const DESKNET_GROUPS: [&str; 6] = ["conv1.w", "conv1.b", "conv2.w", "conv2.b", "fc.w", "fc.b"];

#[derive(Debug, Clone, PartialEq)]
pub struct DeskNet {
    in_channels: usize,
    conv1_w: Vec<f64>,
    conv1_b: Vec<f64>,
    conv2_w: Vec<f64>,
    conv2_b: Vec<f64>,
    fc_w: Vec<f64>,
    fc_b: Vec<f64>,
    version: u64,
}

/// Activations cached by [`DeskNet::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    version: u64,
    dims: (usize, usize, usize, usize),
    input: Vec<f64>,
    act1: Vec<f64>,
    pool1: Vec<f64>,
    arg1: Vec<u32>,
    act2: Vec<f64>,
    arg2: Vec<u32>,
}

fn glorot<R: Rng>(rng: &mut R, n: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
}

impl DeskNet {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng>(in_channels: usize, rng: &mut R) -> Self {
        let c = in_channels;
        Self {
            in_channels: c,
            conv1_w: glorot(rng, CONV1_OUT * c * 9, c * 9, CONV1_OUT * 9),
            conv1_b: vec![0.0; CONV1_OUT],
            conv2_w: glorot(rng, CONV2_OUT * CONV1_OUT * 9, CONV1_OUT * 9, CONV2_OUT * 9),
            conv2_b: vec![0.0; CONV2_OUT],
            fc_w: glorot(rng, CONV2_OUT, CONV2_OUT, 1),
            fc_b: vec![0.0; 1],
            version: 0,
        }
    }

    pub fn zeros(in_channels: usize) -> Self {
        Self {
            in_channels,
            conv1_w: vec![0.0; CONV1_OUT * in_channels * 9],
            conv1_b: vec![0.0; CONV1_OUT],
            conv2_w: vec![0.0; CONV2_OUT * CONV1_OUT * 9],
            conv2_b: vec![0.0; CONV2_OUT],
            fc_w: vec![0.0; CONV2_OUT],
            fc_b: vec![0.0; 1],
            version: 0,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn param_groups(&self) -> [(&'static str, &[f64]); 6] {
        [
            (DESKNET_GROUPS[0], &self.conv1_w),
            (DESKNET_GROUPS[1], &self.conv1_b),
            (DESKNET_GROUPS[2], &self.conv2_w),
            (DESKNET_GROUPS[3], &self.conv2_b),
            (DESKNET_GROUPS[4], &self.fc_w),
            (DESKNET_GROUPS[5], &self.fc_b),
        ]
    }

    /// Mutable parameter access. Invalidates every outstanding tape.
    pub fn param_groups_mut(&mut self) -> [(&'static str, &mut [f64]); 6] {
        self.version += 1;
        [
            (DESKNET_GROUPS[0], &mut self.conv1_w),
            (DESKNET_GROUPS[1], &mut self.conv1_b),
            (DESKNET_GROUPS[2], &mut self.conv2_w),
            (DESKNET_GROUPS[3], &mut self.conv2_b),
            (DESKNET_GROUPS[4], &mut self.fc_w),
            (DESKNET_GROUPS[5], &mut self.fc_b),
        ]
    }

    /// Replaces a named group, checking its length.
    pub fn set_group(&mut self, name: &str, values: &[f64]) -> Result<()> {
        for (n, dst) in self.param_groups_mut() {
            if n == name {
                if dst.len() != values.len() {
                    return Err(Error::ShapeMismatch { expected: vec![dst.len()], actual: vec![values.len()] });
                }
                dst.copy_from_slice(values);
                return Ok(());
            }
        }
        Err(Error::Malformed { what: "parameter group", detail: format!("unknown group '{name}'") })
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Vec<f64>, ForwardTape)> {
        let (n, c, h, w) = input.dims4()?;
        if c != self.in_channels || h < 4 || w < 4 {
            return Err(Error::ShapeMismatch {
                expected: vec![n, self.in_channels, h.max(4), w.max(4)],
                actual: input.shape().to_vec(),
            });
        }
        let (h2, w2) = (h / 2, w / 2);
        let (h4, w4) = (h2 / 2, w2 / 2);
        let (s_in, s1, s1p, s2, s2p) =
            (c * h * w, CONV1_OUT * h * w, CONV1_OUT * h2 * w2, CONV2_OUT * h2 * w2, CONV2_OUT * h4 * w4);
        let mut act1 = vec![0.0; n * s1];
        let mut pool1 = vec![0.0; n * s1p];
        let mut arg1 = vec![0u32; n * s1p];
        let mut act2 = vec![0.0; n * s2];
        let mut arg2 = vec![0u32; n * s2p];
        let mut pool2 = vec![0.0; s2p];
        let mut logits = Vec::with_capacity(n);
        let gap_scale = 1.0 / (h4 * w4) as f64;
        for i in 0..n {
            let x = &input.data()[i * s_in..(i + 1) * s_in];
            let a1 = &mut act1[i * s1..(i + 1) * s1];
            conv3x3_forward(x, c, h, w, &self.conv1_w, &self.conv1_b, a1);
            relu_inplace(a1);
            let p1 = &mut pool1[i * s1p..(i + 1) * s1p];
            maxpool2_forward(a1, CONV1_OUT, h, w, p1, &mut arg1[i * s1p..(i + 1) * s1p]);
            let a2 = &mut act2[i * s2..(i + 1) * s2];
            conv3x3_forward(p1, CONV1_OUT, h2, w2, &self.conv2_w, &self.conv2_b, a2);
            relu_inplace(a2);
            maxpool2_forward(a2, CONV2_OUT, h2, w2, &mut pool2, &mut arg2[i * s2p..(i + 1) * s2p]);
            let mut logit = self.fc_b[0];
            for (ch, fw) in self.fc_w.iter().enumerate() {
                let feat: f64 = pool2[ch * h4 * w4..(ch + 1) * h4 * w4].iter().sum::<f64>() * gap_scale;
                logit += fw * feat;
            }
            logits.push(logit);
        }
        let tape = ForwardTape {
            version: self.version,
            dims: (n, c, h, w),
            input: input.data().to_vec(),
            act1,
            pool1,
            arg1,
            act2,
            arg2,
        };
        Ok((logits, tape))
    }

    /// Exact gradients of `Σ d_logits·logit` with respect to every parameter
    /// group and to the input.
    pub fn backward(&self, tape: &ForwardTape, d_logits: &[f64]) -> Result<(Vec<ParamGrad>, Tensor)> {
        let (grads, d_input) = self.backward_impl(tape, d_logits, true)?;
        let (n, c, h, w) = tape.dims;
        Ok((grads, Tensor::new(vec![n, c, h, w], d_input.unwrap_or_default())?))
    }

    /// Like [`DeskNet::backward`] but skips the input gradient.
    pub fn backward_params(&self, tape: &ForwardTape, d_logits: &[f64]) -> Result<Vec<ParamGrad>> {
        Ok(self.backward_impl(tape, d_logits, false)?.0)
    }

    fn backward_impl(
        &self,
        tape: &ForwardTape,
        d_logits: &[f64],
        want_input: bool,
    ) -> Result<(Vec<ParamGrad>, Option<Vec<f64>>)> {
        if tape.version != self.version {
            return Err(Error::StaleTape);
        }
        let (n, c, h, w) = tape.dims;
        if d_logits.len() != n {
            return Err(Error::ShapeMismatch { expected: vec![n], actual: vec![d_logits.len()] });
        }
        let (h2, w2) = (h / 2, w / 2);
        let (h4, w4) = (h2 / 2, w2 / 2);
        let (s_in, s1, s1p, s2, s2p) =
            (c * h * w, CONV1_OUT * h * w, CONV1_OUT * h2 * w2, CONV2_OUT * h2 * w2, CONV2_OUT * h4 * w4);
        let gap_scale = 1.0 / (h4 * w4) as f64;

        let mut g_conv1_w = vec![0.0; self.conv1_w.len()];
        let mut g_conv1_b = vec![0.0; CONV1_OUT];
        let mut g_conv2_w = vec![0.0; self.conv2_w.len()];
        let mut g_conv2_b = vec![0.0; CONV2_OUT];
        let mut g_fc_w = vec![0.0; CONV2_OUT];
        let mut g_fc_b = 0.0;
        let mut d_input = want_input.then(|| vec![0.0; n * s_in]);

        let mut d_a2 = vec![0.0; s2];
        let mut d_p1 = vec![0.0; s1p];
        let mut d_a1 = vec![0.0; s1];
        for i in 0..n {
            let g = d_logits[i];
            g_fc_b += g;
            let arg2 = &tape.arg2[i * s2p..(i + 1) * s2p];
            let a2 = &tape.act2[i * s2..(i + 1) * s2];
            // fc and GAP: every pooled cell of channel ch receives g·fc_w[ch]/cells
            d_a2.fill(0.0);
            for ch in 0..CONV2_OUT {
                let cells = &arg2[ch * h4 * w4..(ch + 1) * h4 * w4];
                let feat: f64 = cells.iter().map(|&j| a2[j as usize]).sum::<f64>() * gap_scale;
                g_fc_w[ch] += g * feat;
                let d_cell = g * self.fc_w[ch] * gap_scale;
                for &j in cells {
                    d_a2[j as usize] += d_cell;
                }
            }
            for (d, &a) in d_a2.iter_mut().zip(a2) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            let p1 = &tape.pool1[i * s1p..(i + 1) * s1p];
            d_p1.fill(0.0);
            conv3x3_backward(
                p1,
                CONV1_OUT,
                h2,
                w2,
                &self.conv2_w,
                &d_a2,
                &mut g_conv2_w,
                &mut g_conv2_b,
                Some(&mut d_p1),
            );

            d_a1.fill(0.0);
            maxpool2_backward(&d_p1, &tape.arg1[i * s1p..(i + 1) * s1p], &mut d_a1);
            let a1 = &tape.act1[i * s1..(i + 1) * s1];
            for (d, &a) in d_a1.iter_mut().zip(a1) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            let x = &tape.input[i * s_in..(i + 1) * s_in];
            let d_x = d_input.as_mut().map(|d| &mut d[i * s_in..(i + 1) * s_in]);
            conv3x3_backward(x, c, h, w, &self.conv1_w, &d_a1, &mut g_conv1_w, &mut g_conv1_b, d_x);
        }
        let grads = vec![
            ParamGrad { name: DESKNET_GROUPS[0], values: g_conv1_w },
            ParamGrad { name: DESKNET_GROUPS[1], values: g_conv1_b },
            ParamGrad { name: DESKNET_GROUPS[2], values: g_conv2_w },
            ParamGrad { name: DESKNET_GROUPS[3], values: g_conv2_b },
            ParamGrad { name: DESKNET_GROUPS[4], values: g_fc_w },
            ParamGrad { name: DESKNET_GROUPS[5], values: vec![g_fc_b] },
        ];
        Ok((grads, d_input))
    }
}
