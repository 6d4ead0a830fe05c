use std::fmt;

use crate::data::Task;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::windowing::{linear_window, DisplayRange, HuImage, WindowFnKind, WindowSetting};

/// How raw HU reach the CNN.
#[derive(Debug, Clone, PartialEq)]
pub enum InputMode {
    /// `(HU + 1024) / 4095`, clamped to `[0, 1]`.
    FullRange,
    /// Fixed linear windows, one channel per setting.
    FixedWindow(Vec<WindowSetting>),
    /// Raw HU into a trainable window layer initialised from `init`.
    Wso { kind: WindowFnKind, init: Vec<WindowSetting> },
}

/// Which of the task's two presets a row uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetChoice {
    S1,
    S2,
    Both,
}

impl PresetChoice {
    pub fn label(&self) -> &'static str {
        match self {
            PresetChoice::S1 => "S1",
            PresetChoice::S2 => "S2",
            PresetChoice::Both => "S1+S2",
        }
    }

    fn settings(&self, task: Task) -> Vec<WindowSetting> {
        let [s1, s2] = task.presets().map(|p| p.setting());
        match self {
            PresetChoice::S1 => vec![s1],
            PresetChoice::S2 => vec![s2],
            PresetChoice::Both => vec![s1, s2],
        }
    }
}

/// Row layout of the ten-model grid.
const ROWS: [(&str, Option<WindowFnKind>, Option<PresetChoice>); 10] = [
    ("full_range", None, None),
    ("windowed_s1", None, Some(PresetChoice::S1)),
    ("windowed_s2", None, Some(PresetChoice::S2)),
    ("windowed_s1_s2", None, Some(PresetChoice::Both)),
    ("wso_linear_s1", Some(WindowFnKind::Linear), Some(PresetChoice::S1)),
    ("wso_linear_s2", Some(WindowFnKind::Linear), Some(PresetChoice::S2)),
    ("wso_linear_s1_s2", Some(WindowFnKind::Linear), Some(PresetChoice::Both)),
    ("wso_sigmoid_s1", Some(WindowFnKind::Sigmoid), Some(PresetChoice::S1)),
    ("wso_sigmoid_s2", Some(WindowFnKind::Sigmoid), Some(PresetChoice::S2)),
    ("wso_sigmoid_s1_s2", Some(WindowFnKind::Sigmoid), Some(PresetChoice::Both)),
];

pub const VARIANT_COUNT: usize = ROWS.len();

/// One row of the experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentVariant {
    index: usize,
    input: InputMode,
}

impl ExperimentVariant {
    pub fn new(index: usize, task: Task) -> Result<Self> {
        let (_, kind, choice) = *ROWS.get(index).ok_or_else(|| Error::UnknownVariant(index.to_string()))?;
        let input = match (kind, choice) {
            (None, None) => InputMode::FullRange,
            (None, Some(c)) => InputMode::FixedWindow(c.settings(task)),
            (Some(kind), Some(c)) => InputMode::Wso { kind, init: c.settings(task) },
            (Some(_), None) => unreachable!("every WSO row has an initialization"),
        };
        Ok(Self { index, input })
    }

    /// Rebuilds a variant with explicitly stored settings (checkpoint load).
    pub fn with_input(index: usize, input: InputMode) -> Result<Self> {
        let (_, kind, _) = *ROWS.get(index).ok_or_else(|| Error::UnknownVariant(index.to_string()))?;
        let consistent = match (&input, kind) {
            (InputMode::FullRange, None) => index == 0,
            (InputMode::FixedWindow(s), None) => index != 0 && !s.is_empty(),
            (InputMode::Wso { kind: k, init }, Some(kind)) => *k == kind && !init.is_empty(),
            _ => false,
        };
        if !consistent {
            return Err(Error::Malformed { what: "variant descriptor", detail: format!("{input:?} for row {index}") });
        }
        Ok(Self { index, input })
    }

    /// All ten rows in table order.
    pub fn grid(task: Task) -> Vec<ExperimentVariant> {
        (0..VARIANT_COUNT).map(|i| Self::new(i, task).expect("index in range")).collect()
    }

    /// Accepts a row index (`0`–`9`) or a row name such as `wso_sigmoid_s1_s2`.
    pub fn parse(id: &str, task: Task) -> Result<Self> {
        let index = match id.parse::<usize>() {
            Ok(i) => i,
            Err(_) => ROWS
                .iter()
                .position(|(name, _, _)| name.eq_ignore_ascii_case(id))
                .ok_or_else(|| Error::UnknownVariant(id.to_string()))?,
        };
        Self::new(index, task)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn name(&self) -> &'static str {
        ROWS[self.index].0
    }

    pub fn input(&self) -> &InputMode {
        &self.input
    }

    pub fn is_wso(&self) -> bool {
        matches!(self.input, InputMode::Wso { .. })
    }

    /// `linear`/`sigmoid` for WSO rows, `-` otherwise.
    pub fn windowing_function(&self) -> &'static str {
        ROWS[self.index].1.map_or("-", |k| k.as_str())
    }

    /// `S1`, `S2`, `S1+S2` for WSO rows, `-` otherwise.
    pub fn initialization(&self) -> &'static str {
        match ROWS[self.index] {
            (_, Some(_), Some(c)) => c.label(),
            _ => "-",
        }
    }

    /// Channels entering the CNN.
    pub fn cnn_channels(&self) -> usize {
        match &self.input {
            InputMode::FullRange => 1,
            InputMode::FixedWindow(s) => s.len(),
            InputMode::Wso { init, .. } => init.len(),
        }
    }
}

impl fmt::Display for ExperimentVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const FULL_RANGE_MIN: f64 = -1024.0;
pub const FULL_RANGE_SPAN: f64 = 4095.0;

/// Converts one image into the `C×H×W` tensor the variant's model consumes.
pub fn prepare_input(variant: &ExperimentVariant, img: &HuImage, range: DisplayRange) -> Result<Tensor> {
    let (h, w) = (img.height(), img.width());
    let px = img.values();
    match variant.input() {
        InputMode::FullRange => Tensor::new(
            vec![1, h, w],
            px.iter().map(|&x| ((x - FULL_RANGE_MIN) / FULL_RANGE_SPAN).clamp(0.0, 1.0)).collect(),
        ),
        InputMode::FixedWindow(settings) => {
            let mut data = Vec::with_capacity(settings.len() * px.len());
            for &s in settings {
                for &x in px {
                    data.push(linear_window(x, s, range)? / range.u());
                }
            }
            Tensor::new(vec![settings.len(), h, w], data)
        }
        InputMode::Wso { .. } => Tensor::new(vec![1, h, w], px.to_vec()),
    }
}
