//! Central finite-difference check of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DeskNet, Model, ParamGrad};
use crate::error::Result;
use crate::tensor::Tensor;
use crate::windowing::{DisplayRange, Preset, WindowFnKind, WindowSetting};
use crate::wso::WsoLayer;

/// Anything with named parameter groups and an analytic gradient.
pub trait GradModel {
    fn loss(&self, input: &Tensor, labels: &[f64]) -> Result<f64>;
    fn loss_and_grads(&self, input: &Tensor, labels: &[f64]) -> Result<(f64, Vec<ParamGrad>)>;
    fn param(&self, group: usize, index: usize) -> f64;
    fn set_param(&mut self, group: usize, index: usize, value: f64);
}

impl GradModel for Model {
    fn loss(&self, input: &Tensor, labels: &[f64]) -> Result<f64> {
        Model::loss(self, input, labels)
    }

    fn loss_and_grads(&self, input: &Tensor, labels: &[f64]) -> Result<(f64, Vec<ParamGrad>)> {
        Model::loss_and_grads(self, input, labels)
    }

    fn param(&self, group: usize, index: usize) -> f64 {
        self.param_groups()[group].1[index]
    }

    fn set_param(&mut self, group: usize, index: usize, value: f64) {
        self.param_groups_mut()[group].1[index] = value;
    }
}

/// Candidate step sizes per parameter family. Every step is tried and the
/// closest agreement is kept, so a step that happens to straddle a ReLU or
/// clamp kink does not produce a false alarm.
#[derive(Debug, Clone)]
pub struct StepSchedule {
    pub wso_w: Vec<f64>,
    pub wso_b: Vec<f64>,
    pub net: Vec<f64>,
}

impl Default for StepSchedule {
    fn default() -> Self {
        // WSO weights multiply raw HU (|x| in the hundreds), so their steps
        // are scaled down to keep w·x perturbations small.
        Self { wso_w: vec![1e-6, 1e-7], wso_b: vec![1e-4, 1e-5], net: vec![1e-4, 1e-5, 1e-6] }
    }
}

impl StepSchedule {
    fn steps_for(&self, group: &str) -> &[f64] {
        match group {
            "wso.w" => &self.wso_w,
            "wso.b" => &self.wso_b,
            _ => &self.net,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Group and index of the worst parameter.
    pub worst: (&'static str, usize),
    pub checked: usize,
}

/// Relative error, falling back to absolute error when both magnitudes are
/// below `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < 1e-8 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Perturbs every parameter and returns the worst disagreement between the
/// analytic gradient and central differences.
pub fn finite_diff_check<M: GradModel>(
    model: &mut M,
    input: &Tensor,
    labels: &[f64],
    schedule: &StepSchedule,
) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_and_grads(input, labels)?;
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: ("", 0), checked: 0 };
    for (gi, g) in grads.iter().enumerate() {
        for (j, &analytic) in g.values.iter().enumerate() {
            let orig = model.param(gi, j);
            let mut best = f64::INFINITY;
            for &h in schedule.steps_for(g.name) {
                model.set_param(gi, j, orig + h);
                let fp = model.loss(input, labels)?;
                model.set_param(gi, j, orig - h);
                let fm = model.loss(input, labels)?;
                model.set_param(gi, j, orig);
                best = best.min(relative_error(analytic, (fp - fm) / (2.0 * h)));
            }
            report.checked += 1;
            if report.worst.0.is_empty() || best > report.max_rel_error {
                report.max_rel_error = best;
                report.worst = (g.name, j);
            }
        }
    }
    Ok(report)
}

/// A seeded end-to-end configuration: WSO layer plus DeskNet on an 8×8 batch.
#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub model: Model,
    pub input: Tensor,
    pub labels: Vec<f64>,
}

/// Draws a window kind, one or two jittered presets, a DeskNet with small
/// random biases, and a batch of 2 to 4 raw-HU images.
pub fn random_case(seed: u64) -> Result<GradCheckCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = if rng.random_bool(0.5) { WindowFnKind::Sigmoid } else { WindowFnKind::Linear };
    let channels = rng.random_range(1..=2);
    let settings = (0..channels)
        .map(|_| {
            let p = Preset::ALL[rng.random_range(0..Preset::ALL.len())].setting();
            WindowSetting::new(p.level() + rng.random_range(-10.0..10.0), p.width() * rng.random_range(0.8..1.25))
        })
        .collect::<Result<Vec<_>>>()?;
    let wso = WsoLayer::init_from_settings(kind, DisplayRange::default(), &settings)?;
    let mut net = DeskNet::new(channels, &mut rng);
    for (name, vals) in net.param_groups_mut() {
        if name.ends_with(".b") {
            vals.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
    let n = rng.random_range(2..=4);
    let centre = settings[0].level();
    let half = settings[0].width();
    let input = Tensor::new(vec![n, 1, 8, 8], (0..n * 64).map(|_| centre + rng.random_range(-half..half)).collect())?;
    let labels = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
    Ok(GradCheckCase { model: Model::new(Some(wso), net)?, input, labels })
}
