use super::{bce_loss, DeskNet, ForwardTape, ParamGrad};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::wso::WsoLayer;

/// Optional WSO front end followed by DeskNet.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub wso: Option<WsoLayer>,
    pub net: DeskNet,
}

pub struct ModelTape {
    wso_input: Option<Tensor>,
    net: ForwardTape,
}

impl Model {
    pub fn new(wso: Option<WsoLayer>, net: DeskNet) -> Result<Self> {
        let expected = wso.as_ref().map_or(net.in_channels(), |l| l.num_channels());
        if expected != net.in_channels() {
            return Err(Error::ShapeMismatch { expected: vec![expected], actual: vec![net.in_channels()] });
        }
        Ok(Self { wso, net })
    }

    /// Channels the model consumes: 1 raw-HU plane with a WSO layer,
    /// otherwise DeskNet's input width.
    pub fn input_channels(&self) -> usize {
        if self.wso.is_some() {
            1
        } else {
            self.net.in_channels()
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Vec<f64>, ModelTape)> {
        match &self.wso {
            Some(layer) => {
                let act = layer.forward(input)?;
                let (logits, net) = self.net.forward(&act)?;
                Ok((logits, ModelTape { wso_input: Some(input.clone()), net }))
            }
            None => {
                let (logits, net) = self.net.forward(input)?;
                Ok((logits, ModelTape { wso_input: None, net }))
            }
        }
    }

    pub fn logits(&self, input: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.0)
    }

    /// Gradients for all parameter groups, WSO groups first.
    pub fn backward(&self, tape: &ModelTape, d_logits: &[f64]) -> Result<Vec<ParamGrad>> {
        match (&self.wso, &tape.wso_input) {
            (Some(layer), Some(x)) => {
                let (net_grads, d_act) = self.net.backward(&tape.net, d_logits)?;
                let (g, _) = layer.backward(x, &d_act)?;
                let mut grads =
                    vec![ParamGrad { name: "wso.w", values: g.w }, ParamGrad { name: "wso.b", values: g.b }];
                grads.extend(net_grads);
                Ok(grads)
            }
            (None, None) => self.net.backward_params(&tape.net, d_logits),
            _ => Err(Error::StaleTape),
        }
    }

    /// Mean BCE loss and its gradients on one batch.
    pub fn loss_and_grads(&self, input: &Tensor, labels: &[f64]) -> Result<(f64, Vec<ParamGrad>)> {
        let (logits, tape) = self.forward(input)?;
        let (loss, d_logits) = bce_loss(&logits, labels);
        Ok((loss, self.backward(&tape, &d_logits)?))
    }

    pub fn loss(&self, input: &Tensor, labels: &[f64]) -> Result<f64> {
        let logits = self.logits(input)?;
        Ok(bce_loss(&logits, labels).0)
    }

    pub fn group_names(&self) -> Vec<&'static str> {
        self.param_groups().into_iter().map(|(n, _)| n).collect()
    }

    pub fn param_groups(&self) -> Vec<(&'static str, &[f64])> {
        let mut groups = Vec::with_capacity(8);
        if let Some(l) = &self.wso {
            groups.push(("wso.w", l.weights()));
            groups.push(("wso.b", l.biases()));
        }
        groups.extend(self.net.param_groups());
        groups
    }

    pub fn param_groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut groups = Vec::with_capacity(8);
        if let Some(l) = &mut self.wso {
            let (w, b) = l.params_mut();
            groups.push(("wso.w", w));
            groups.push(("wso.b", b));
        }
        groups.extend(self.net.param_groups_mut());
        groups
    }
}
