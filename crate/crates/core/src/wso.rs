//! Trainable window setting optimization layer.
//!
//! Each channel applies a 1×1 affine transform `z = w·x + b` to the raw HU
//! input, followed by a bounded activation: an upper-bounded ReLU
//! `clamp(z, 0, u)` for linear windows, or `u·σ(z)` for sigmoid windows.
//! The layer emits activations divided by `u`, so downstream layers see
//! values in `[0, 1]`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::windowing::{logistic, DisplayRange, WindowFnKind, WindowSetting};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WsoChannel {
    pub w: f64,
    pub b: f64,
}

/// A stack of trainable window channels sharing one kind and display range.
#[derive(Debug, Clone, PartialEq)]
pub struct WsoLayer {
    kind: WindowFnKind,
    range: DisplayRange,
    w: Vec<f64>,
    b: Vec<f64>,
}

/// Per-channel `dL/dw` and `dL/db`.
#[derive(Debug, Clone, PartialEq)]
pub struct WsoGradients {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Initial `(w, b)` reproducing a clinical window.
pub fn channel_for_setting(kind: WindowFnKind, d: DisplayRange, s: WindowSetting) -> WsoChannel {
    let (level, width) = (s.level(), s.width());
    match kind {
        WindowFnKind::Linear => {
            let w = d.u() / width;
            WsoChannel { w, b: -(d.u() / width) * (level - width / 2.0) }
        }
        WindowFnKind::Sigmoid => {
            let k = d.edge_logit();
            WsoChannel { w: (2.0 / width) * k, b: (-2.0 * level / width) * k }
        }
    }
}

impl WsoLayer {
    pub fn from_channels(kind: WindowFnKind, range: DisplayRange, channels: &[WsoChannel]) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidDataset("a WSO layer needs at least one channel".into()));
        }
        if let Some(c) = channels.iter().find(|c| !(c.w.is_finite() && c.b.is_finite())) {
            return Err(Error::NonFiniteInput(if c.w.is_finite() { c.b } else { c.w }));
        }
        Ok(Self { kind, range, w: channels.iter().map(|c| c.w).collect(), b: channels.iter().map(|c| c.b).collect() })
    }

    /// One channel per setting, in order.
    pub fn init_from_settings(kind: WindowFnKind, range: DisplayRange, settings: &[WindowSetting]) -> Result<Self> {
        let channels: Vec<WsoChannel> = settings
            .iter()
            .map(|&s| {
                WindowSetting::new(s.level(), s.width())?;
                Ok(channel_for_setting(kind, range, s))
            })
            .collect::<Result<_>>()?;
        Self::from_channels(kind, range, &channels)
    }

    pub fn kind(&self) -> WindowFnKind {
        self.kind
    }

    pub fn range(&self) -> DisplayRange {
        self.range
    }

    pub fn num_channels(&self) -> usize {
        self.w.len()
    }

    pub fn channels(&self) -> Vec<WsoChannel> {
        self.w.iter().zip(&self.b).map(|(&w, &b)| WsoChannel { w, b }).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn biases(&self) -> &[f64] {
        &self.b
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.w, &mut self.b)
    }

    /// Activation of one pre-activation value, already divided by `u`.
    #[inline]
    fn activate(&self, z: f64) -> f64 {
        match self.kind {
            WindowFnKind::Linear => z.clamp(0.0, self.range.u()) / self.range.u(),
            WindowFnKind::Sigmoid => logistic(z),
        }
    }

    /// Maps a raw-HU batch `N×1×H×W` to `N×C×H×W` activations in `[0, 1]`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let (n, c_in, h, w) = batch.dims4()?;
        if c_in != 1 {
            return Err(Error::ShapeMismatch { expected: vec![n, 1, h, w], actual: batch.shape().to_vec() });
        }
        if !batch.is_finite() {
            let bad = batch.data().iter().copied().find(|v| !v.is_finite()).unwrap_or(f64::NAN);
            return Err(Error::NonFiniteInput(bad));
        }
        let c = self.num_channels();
        let plane = h * w;
        let mut out = Tensor::zeros(vec![n, c, h, w]);
        let src = batch.data();
        let dst = out.data_mut();
        for i in 0..n {
            let x = &src[i * plane..(i + 1) * plane];
            for ch in 0..c {
                let (wc, bc) = (self.w[ch], self.b[ch]);
                let o = &mut dst[(i * c + ch) * plane..(i * c + ch + 1) * plane];
                for (o, &x) in o.iter_mut().zip(x) {
                    *o = self.activate(wc * x + bc);
                }
            }
        }
        Ok(out)
    }

    /// Gradients of the loss with respect to `(w, b)` per channel and to the
    /// raw input, given `upstream = dL/d(output)` for the scaled output.
    pub fn backward(&self, batch: &Tensor, upstream: &Tensor) -> Result<(WsoGradients, Tensor)> {
        let (n, _, h, w) = batch.dims4()?;
        let c = self.num_channels();
        batch.expect_shape(&[n, 1, h, w])?;
        upstream.expect_shape(&[n, c, h, w])?;
        let plane = h * w;
        let u = self.range.u();
        let mut grads = WsoGradients { w: vec![0.0; c], b: vec![0.0; c] };
        let mut dx = Tensor::zeros(vec![n, 1, h, w]);
        let src = batch.data();
        let up = upstream.data();
        let dxd = dx.data_mut();
        for i in 0..n {
            let x = &src[i * plane..(i + 1) * plane];
            let dxi = &mut dxd[i * plane..(i + 1) * plane];
            for ch in 0..c {
                let (wc, bc) = (self.w[ch], self.b[ch]);
                let g = &up[(i * c + ch) * plane..(i * c + ch + 1) * plane];
                let (mut gw, mut gb) = (0.0, 0.0);
                for ((&x, &g), dxp) in x.iter().zip(g).zip(dxi.iter_mut()) {
                    let z = wc * x + bc;
                    // dF/dz of the scaled output
                    let slope = match self.kind {
                        WindowFnKind::Linear => {
                            if z > 0.0 && z < u {
                                1.0 / u
                            } else {
                                0.0
                            }
                        }
                        WindowFnKind::Sigmoid => {
                            let s = logistic(z);
                            s * (1.0 - s)
                        }
                    };
                    let gz = g * slope;
                    gw += gz * x;
                    gb += gz;
                    *dxp += gz * wc;
                }
                grads.w[ch] += gw;
                grads.b[ch] += gb;
            }
        }
        Ok((grads, dx))
    }

    /// Clinical windows equivalent to the current channel parameters.
    pub fn settings(&self) -> Result<Vec<WindowSetting>> {
        let u = self.range.u();
        self.channels()
            .iter()
            .enumerate()
            .map(|(channel, c)| {
                if !c.w.is_finite() || c.w <= 0.0 {
                    return Err(Error::DegenerateWindow { channel, w: c.w });
                }
                let (level, width) = match self.kind {
                    WindowFnKind::Linear => {
                        let width = u / c.w;
                        (-c.b / c.w + width / 2.0, width)
                    }
                    WindowFnKind::Sigmoid => (-c.b / c.w, 2.0 * self.range.edge_logit() / c.w),
                };
                WindowSetting::new(level, width).map_err(|_| Error::DegenerateWindow { channel, w: c.w })
            })
            .collect()
    }
}

/// Recovers the clinical windows a layer currently applies.
pub fn settings_from_layer(layer: &WsoLayer) -> Result<Vec<WindowSetting>> {
    layer.settings()
}
