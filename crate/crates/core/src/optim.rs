//! Adam with a step-decay learning-rate schedule.

use crate::error::{Error, Result};
use crate::nn::ParamGrad;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyper {
    pub base_lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            base_lr: 0.001,
            decay_factor: 10.0,
            decay_every: 20,
            epochs: 60,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.base_lr, self.decay_factor, self.beta1, self.beta2, self.eps_adam]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.decay_every == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidHyper(format!("all hyperparameters must be positive: {self:?}")));
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::InvalidHyper("beta1 and beta2 must be below 1".into()));
        }
        if self.decay_every > self.epochs {
            return Err(Error::InvalidHyper(format!(
                "decay_every ({}) exceeds epochs ({})",
                self.decay_every, self.epochs
            )));
        }
        Ok(())
    }

    /// Learning rate for a 0-based epoch: `base_lr / decay_factor^(epoch / decay_every)`.
    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        lr_at(epoch, self)
    }
}

pub fn lr_at(epoch: usize, hyper: &TrainHyper) -> Result<f64> {
    if epoch >= hyper.epochs {
        return Err(Error::EpochOutOfRange { epoch, epochs: hyper.epochs });
    }
    let decays = (epoch / hyper.decay_every) as i32;
    Ok(hyper.base_lr / hyper.decay_factor.powi(decays))
}

/// First and second moments per parameter group, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(group_sizes: &[usize]) -> Self {
        Self {
            m: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update. Parameters are left untouched when any
    /// gradient is non-finite or shapes disagree.
    pub fn step(
        &mut self,
        params: &mut [(&'static str, &mut [f64])],
        grads: &[ParamGrad],
        lr: f64,
        hyper: &TrainHyper,
    ) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidHyper(format!("learning rate must be positive, got {lr}")));
        }
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::ShapeMismatch { expected: vec![self.m.len()], actual: vec![params.len(), grads.len()] });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.1.len() != g.values.len() || m.len() != g.values.len() {
                return Err(Error::ShapeMismatch { expected: vec![m.len()], actual: vec![p.1.len(), g.values.len()] });
            }
            if g.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(g.name.to_string()));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - hyper.beta1.powi(t);
        let bc2 = 1.0 - hyper.beta2.powi(t);
        for (((_, p), g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((p, &g), m), v) in p.iter_mut().zip(&g.values).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
                *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + hyper.eps_adam);
            }
        }
        Ok(())
    }
}
