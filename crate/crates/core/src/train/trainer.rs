use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::variant::{prepare_input, ExperimentVariant, InputMode};
use crate::data::{DatasetSplit, Sample};
use crate::error::{Error, Result};
use crate::format::fmt6;
use crate::metrics::ScoredLabels;
use crate::nn::{bce_loss, DeskNet, Model};
use crate::optim::{AdamState, TrainHyper};
use crate::tensor::Tensor;
use crate::windowing::{logistic, DisplayRange, WindowSetting};
use crate::wso::WsoLayer;

/// Selected model plus the optimizer state at the selected epoch.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub variant: ExperimentVariant,
    pub model: Model,
    pub optimizer: AdamState,
    /// 0-based epoch with the lowest validation loss.
    pub selected_epoch: usize,
    pub val_loss: f64,
}

impl TrainedModel {
    /// Current window settings of the WSO layer, or `None` without one.
    pub fn learned_windows(&self) -> Result<Option<Vec<WindowSetting>>> {
        self.model.wso.as_ref().map(|l| l.settings()).transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    /// NaN when validation has a single class.
    pub val_ap: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,val_loss,val_ap,val_auc";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch,
                fmt6(r.lr),
                fmt6(r.train_loss),
                fmt6(r.val_loss),
                fmt6(r.val_ap),
                fmt6(r.val_auc)
            ));
        }
        out
    }
}

/// Inputs prepared once per sample, with labels as 0/1.
pub(crate) struct PreparedSet {
    inputs: Vec<Tensor>,
    labels: Vec<f64>,
    flags: Vec<bool>,
}

impl PreparedSet {
    pub(crate) fn new(variant: &ExperimentVariant, samples: &[Sample], range: DisplayRange) -> Result<Self> {
        let inputs = samples.iter().map(|s| prepare_input(variant, &s.image, range)).collect::<Result<Vec<_>>>()?;
        let flags: Vec<bool> = samples.iter().map(|s| s.label).collect();
        let labels = flags.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        Ok(Self { inputs, labels, flags })
    }

    fn batch(&self, idx: &[usize]) -> Result<(Tensor, Vec<f64>)> {
        let refs: Vec<&Tensor> = idx.iter().map(|&i| &self.inputs[i]).collect();
        Ok((Tensor::stack(&refs)?, idx.iter().map(|&i| self.labels[i]).collect()))
    }

    /// Logits over the whole set, `chunk` samples per forward pass.
    fn logits(&self, model: &Model, chunk: usize) -> Result<Vec<f64>> {
        let order: Vec<usize> = (0..self.inputs.len()).collect();
        let mut out = Vec::with_capacity(order.len());
        for idx in order.chunks(chunk.max(1)) {
            let (x, _) = self.batch(idx)?;
            out.extend(model.logits(&x)?);
        }
        Ok(out)
    }
}

/// Builds the untrained model for a variant. DeskNet weights come from `rng`.
pub fn build_model(variant: &ExperimentVariant, range: DisplayRange, rng: &mut ChaCha8Rng) -> Result<Model> {
    let net = DeskNet::new(variant.cnn_channels(), rng);
    let wso = match variant.input() {
        InputMode::Wso { kind, init } => Some(WsoLayer::init_from_settings(*kind, range, init)?),
        _ => None,
    };
    Model::new(wso, net)
}

fn nan_if_undefined(r: Result<f64>) -> Result<f64> {
    match r {
        Ok(v) => Ok(v),
        Err(Error::AucUndefined | Error::ApUndefined) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// Trains one variant with Adam and the step-decay schedule, keeping the
/// model from the epoch with the lowest validation loss (earliest on ties).
/// Identical inputs and `seed` give bit-identical results.
pub fn train_model(
    variant: &ExperimentVariant,
    split: &DatasetSplit,
    hyper: &TrainHyper,
    seed: u64,
) -> Result<(TrainedModel, TrainHistory)> {
    hyper.validate()?;
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(Error::InvalidDataset("training and validation sets must be non-empty".into()));
    }
    let range = DisplayRange::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = build_model(variant, range, &mut rng)?;
    let train = PreparedSet::new(variant, &split.train, range)?;
    let val = PreparedSet::new(variant, &split.validation, range)?;

    let sizes: Vec<usize> = model.param_groups().iter().map(|(_, p)| p.len()).collect();
    let mut adam = AdamState::new(&sizes);
    let mut order: Vec<usize> = (0..train.inputs.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<TrainedModel> = None;

    for epoch in 0..hyper.epochs {
        let lr = hyper.lr_at(epoch)?;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch, idx) in order.chunks(hyper.batch_size).enumerate() {
            let (x, y) = train.batch(idx)?;
            let (loss, grads) = model.loss_and_grads(&x, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            adam.step(&mut model.param_groups_mut(), &grads, lr, hyper)?;
            loss_sum += loss * idx.len() as f64;
        }
        let train_loss = loss_sum / order.len() as f64;

        let logits = val.logits(&model, hyper.batch_size)?;
        let (val_loss, _) = bce_loss(&logits, &val.labels);
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        let scored = ScoredLabels::new(logits, val.flags.clone())?;
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
            val_ap: nan_if_undefined(scored.average_precision())?,
            val_auc: nan_if_undefined(scored.roc_auc())?,
        });
        if best.as_ref().is_none_or(|b| val_loss < b.val_loss) {
            best = Some(TrainedModel {
                variant: variant.clone(),
                model: model.clone(),
                optimizer: adam.clone(),
                selected_epoch: epoch,
                val_loss,
            });
        }
    }
    Ok((best.expect("at least one epoch"), history))
}

/// Logits for `samples`.
pub fn predict_logits(trained: &TrainedModel, samples: &[Sample]) -> Result<Vec<f64>> {
    let range = trained.model.wso.as_ref().map_or_else(DisplayRange::default, |l| l.range());
    let set = PreparedSet::new(&trained.variant, samples, range)?;
    set.logits(&trained.model, 64)
}

/// Predicted probabilities for `samples`.
pub fn predict(trained: &TrainedModel, samples: &[Sample]) -> Result<Vec<f64>> {
    Ok(predict_logits(trained, samples)?.into_iter().map(logistic).collect())
}

/// `(AP, AUC)` on `samples`, ranked by logit so saturated probabilities
/// do not tie.
pub fn evaluate(trained: &TrainedModel, samples: &[Sample]) -> Result<(f64, f64)> {
    let scores = predict_logits(trained, samples)?;
    let scored = ScoredLabels::new(scores, samples.iter().map(|s| s.label).collect())?;
    Ok((scored.average_precision()?, scored.roc_auc()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, split_by_case, PhantomSpec, Task, DEFAULT_FRACTIONS};

    fn small_split(seed: u64) -> DatasetSplit {
        let spec = PhantomSpec { size: 20, lesion_radius: (2, 2), slices_per_case: (2, 3), ..PhantomSpec::default() };
        let samples = generate_dataset(&spec, Task::Hemorrhage, 20, 0.5, seed).unwrap();
        split_by_case(samples, DEFAULT_FRACTIONS, seed).unwrap()
    }

    fn short() -> TrainHyper {
        TrainHyper { epochs: 4, decay_every: 2, batch_size: 16, ..TrainHyper::default() }
    }

    #[test]
    fn deterministic_history_and_weights() {
        let split = small_split(3);
        let v = ExperimentVariant::new(9, Task::Hemorrhage).unwrap();
        let (a, ha) = train_model(&v, &split, &short(), 11).unwrap();
        let (b, hb) = train_model(&v, &split, &short(), 11).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(ha.to_csv(), hb.to_csv());
        assert_eq!(a.model.param_groups(), b.model.param_groups());
        let (c, _) = train_model(&v, &split, &short(), 12).unwrap();
        assert_ne!(a.model.param_groups(), c.model.param_groups());
    }

    #[test]
    fn selects_lowest_validation_loss() {
        let split = small_split(4);
        let v = ExperimentVariant::new(1, Task::Hemorrhage).unwrap();
        let (m, h) = train_model(&v, &split, &short(), 5).unwrap();
        assert_eq!(h.epochs.len(), 4);
        let min = h.epochs.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        let first = h.epochs.iter().position(|r| r.val_loss == min).unwrap();
        assert_eq!(m.selected_epoch, first);
        assert_eq!(m.val_loss, min);
        assert_eq!(h.epochs[2].lr, 1e-4);
    }

    #[test]
    fn selected_model_reproduces_its_validation_loss() {
        let split = small_split(5);
        let v = ExperimentVariant::new(6, Task::Hemorrhage).unwrap();
        let (m, _) = train_model(&v, &split, &short(), 2).unwrap();
        let scores = predict(&m, &split.validation).unwrap();
        assert_eq!(scores.len(), split.validation.len());
        let logits: Vec<f64> = {
            let set = PreparedSet::new(&v, &split.validation, DisplayRange::default()).unwrap();
            set.logits(&m.model, 7).unwrap()
        };
        let (loss, _) =
            bce_loss(&logits, &PreparedSet::new(&v, &split.validation, DisplayRange::default()).unwrap().labels);
        assert_eq!(loss, m.val_loss);
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            epochs: vec![EpochRecord {
                epoch: 0,
                lr: 0.001,
                train_loss: 0.5,
                val_loss: 0.25,
                val_ap: f64::NAN,
                val_auc: 1.0,
            }],
        };
        assert_eq!(h.to_csv(), "epoch,lr,train_loss,val_loss,val_ap,val_auc\n0,0.001,0.5,0.25,nan,1\n");
    }

    #[test]
    fn rejects_empty_partitions() {
        let mut split = small_split(6);
        split.validation.clear();
        let v = ExperimentVariant::new(0, Task::Hemorrhage).unwrap();
        assert!(matches!(train_model(&v, &split, &short(), 0), Err(Error::InvalidDataset(_))));
    }
}
