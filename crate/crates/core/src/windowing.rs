//! Closed-form CT display windows.
//!
//! A window maps Hounsfield units onto display gray levels `[0, u]`. The
//! linear window is a clamped ramp across `[WL - WW/2, WL + WW/2]`; the
//! sigmoid window is a logistic curve centred on `WL` whose values at the
//! window start and end are exactly `eps` and `u - eps`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Clinical window: level (centre) and width, both in HU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSetting {
    level: f64,
    width: f64,
}

impl WindowSetting {
    pub fn new(level: f64, width: f64) -> Result<Self> {
        if !level.is_finite() || !width.is_finite() || width <= 0.0 {
            return Err(Error::InvalidSetting { level, width });
        }
        Ok(Self { level, width })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// HU value mapped to the bottom of the display range.
    pub fn start(&self) -> f64 {
        self.level - self.width / 2.0
    }

    /// HU value mapped to the top of the display range.
    pub fn end(&self) -> f64 {
        self.level + self.width / 2.0
    }

    /// True when `[start, end]` intersects the closed HU interval `[lo, hi]`.
    pub fn overlaps(&self, lo: f64, hi: f64) -> bool {
        self.start() <= hi && lo <= self.end()
    }
}

/// Output range of a window function: upper limit `u` and, for the sigmoid
/// window, the margin `eps` between the asymptotes and the window edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplayRange {
    u: f64,
    eps: f64,
}

impl DisplayRange {
    pub fn new(u: f64, eps: f64) -> Result<Self> {
        if !(u.is_finite() && eps.is_finite() && u > 0.0 && eps > 0.0 && eps < u / 2.0) {
            return Err(Error::InvalidDisplayRange { u, eps });
        }
        Ok(Self { u, eps })
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `ln(u/eps - 1)`, the logit reached at the window end.
    pub fn edge_logit(&self) -> f64 {
        (self.u / self.eps - 1.0).ln()
    }
}

impl Default for DisplayRange {
    /// `u = 255`, `eps = 1`.
    fn default() -> Self {
        Self { u: 255.0, eps: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowFnKind {
    Linear,
    Sigmoid,
}

impl WindowFnKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            WindowFnKind::Linear => "linear",
            WindowFnKind::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for WindowFnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WindowFnKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "lin" => Ok(WindowFnKind::Linear),
            "sigmoid" | "sig" => Ok(WindowFnKind::Sigmoid),
            other => Err(format!("unknown window function '{other}' (expected linear or sigmoid)")),
        }
    }
}

/// Named clinical presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Brain,
    Subdural,
    Bone,
    Abdomen,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Brain, Preset::Subdural, Preset::Bone, Preset::Abdomen];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Brain => "brain",
            Preset::Subdural => "subdural",
            Preset::Bone => "bone",
            Preset::Abdomen => "abdomen",
        }
    }

    pub fn setting(&self) -> WindowSetting {
        let (level, width) = match self {
            Preset::Brain => (50.0, 100.0),
            Preset::Subdural => (50.0, 130.0),
            Preset::Bone => (300.0, 1500.0),
            Preset::Abdomen => (40.0, 400.0),
        };
        WindowSetting { level, width }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Looks up a preset window by name.
pub fn preset(name: &str) -> Result<WindowSetting> {
    name.parse::<Preset>().map(|p| p.setting())
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(x))
    }
}

/// Logistic function, evaluated without overflow for either sign.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Clamped ramp from the window start (0) to the window end (`u`).
pub fn linear_window(x: f64, s: WindowSetting, d: DisplayRange) -> Result<f64> {
    check_finite(x)?;
    Ok((d.u * ((x - s.level) / s.width + 0.5)).clamp(0.0, d.u))
}

/// Logistic window with `F(WL) = u/2`, `F(WL ± WW/2) = u - eps, eps`.
pub fn sigmoid_window(x: f64, s: WindowSetting, d: DisplayRange) -> Result<f64> {
    check_finite(x)?;
    let z = 2.0 * d.edge_logit() * (x - s.level) / s.width;
    Ok(d.u * logistic(z))
}

pub fn window(kind: WindowFnKind, x: f64, s: WindowSetting, d: DisplayRange) -> Result<f64> {
    match kind {
        WindowFnKind::Linear => linear_window(x, s, d),
        WindowFnKind::Sigmoid => sigmoid_window(x, s, d),
    }
}

/// 2-D raster of HU values with the DICOM-style rescale used to store it.
#[derive(Debug, Clone, PartialEq)]
pub struct HuImage {
    height: usize,
    width: usize,
    values: Vec<f64>,
    pub rescale_slope: f64,
    pub rescale_intercept: f64,
    pub case_id: String,
}

impl HuImage {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!("empty image {height}x{width}")));
        }
        if values.len() != height * width {
            return Err(Error::InvalidImage(format!("{} values for a {height}x{width} image", values.len())));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(*bad));
        }
        Ok(Self { height, width, values, rescale_slope: 1.0, rescale_intercept: -1024.0, case_id: String::new() })
    }

    pub fn filled(height: usize, width: usize, hu: f64) -> Result<Self> {
        Self::new(height, width, vec![hu; height * width])
    }

    pub fn with_rescale(mut self, slope: f64, intercept: f64) -> Self {
        self.rescale_slope = slope;
        self.rescale_intercept = intercept;
        self
    }

    pub fn with_case_id(mut self, case_id: impl Into<String>) -> Self {
        self.case_id = case_id.into();
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Row-major HU values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// 8-bit gray render of a windowed image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisplayImage {
    pub height: usize,
    pub width: usize,
    pub gray: Vec<u8>,
}

impl DisplayImage {
    /// Binary PGM (P5) encoding.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.gray);
        out
    }
}

/// Windows every pixel and quantizes with round-half-away-from-zero.
pub fn render_display(img: &HuImage, kind: WindowFnKind, s: WindowSetting, d: DisplayRange) -> Result<DisplayImage> {
    let gray = img
        .values()
        .iter()
        .map(|&x| window(kind, x, s, d).map(|g| g.round().clamp(0.0, 255.0) as u8))
        .collect::<Result<Vec<u8>>>()?;
    Ok(DisplayImage { height: img.height(), width: img.width(), gray })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brain() -> WindowSetting {
        preset("brain").unwrap()
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn linear_anchors() {
        let d = DisplayRange::default();
        assert_eq!(linear_window(0.0, brain(), d).unwrap(), 0.0);
        assert_eq!(linear_window(50.0, brain(), d).unwrap(), 127.5);
        assert_eq!(linear_window(-1000.0, brain(), d).unwrap(), 0.0);
        assert_eq!(linear_window(100.0, brain(), d).unwrap(), 255.0);
    }

    #[test]
    fn sigmoid_anchors() {
        let d = DisplayRange::default();
        assert_eq!(sigmoid_window(50.0, brain(), d).unwrap(), 127.5);
        assert!(rel_close(sigmoid_window(100.0, brain(), d).unwrap(), 254.0, 1e-12));
        assert!(rel_close(sigmoid_window(0.0, brain(), d).unwrap(), 1.0, 1e-12));
    }

    #[test]
    fn non_finite_input_rejected() {
        let d = DisplayRange::default();
        assert!(matches!(linear_window(f64::NAN, brain(), d), Err(Error::NonFiniteInput(_))));
        assert!(sigmoid_window(f64::INFINITY, brain(), d).is_err());
    }

    #[test]
    fn presets() {
        let cases =
            [("brain", 50.0, 100.0), ("subdural", 50.0, 130.0), ("bone", 300.0, 1500.0), ("abdomen", 40.0, 400.0)];
        for (name, wl, ww) in cases {
            let s = preset(name).unwrap();
            assert_eq!((s.level(), s.width()), (wl, ww), "{name}");
        }
        let err = preset("lung").unwrap_err().to_string();
        for name in ["brain", "subdural", "bone", "abdomen"] {
            assert!(err.contains(name), "{err}");
        }
    }

    #[test]
    fn invalid_settings_and_ranges() {
        assert!(WindowSetting::new(0.0, 0.0).is_err());
        assert!(WindowSetting::new(0.0, -5.0).is_err());
        assert!(WindowSetting::new(f64::NAN, 10.0).is_err());
        assert!(DisplayRange::new(255.0, 127.5).is_err());
        assert!(DisplayRange::new(0.0, 1.0).is_err());
        assert!(DisplayRange::new(255.0, 0.0).is_err());
    }

    #[test]
    fn render_constant_images() {
        let d = DisplayRange::default();
        let at_level = HuImage::filled(3, 4, 50.0).unwrap();
        let r = render_display(&at_level, WindowFnKind::Linear, brain(), d).unwrap();
        assert!(r.gray.iter().all(|&g| g == 128));

        let air = HuImage::filled(2, 2, -1000.0).unwrap();
        let r = render_display(&air, WindowFnKind::Linear, preset("abdomen").unwrap(), d).unwrap();
        assert!(r.gray.iter().all(|&g| g == 0));

        let at_end = HuImage::filled(2, 2, 100.0).unwrap();
        let r = render_display(&at_end, WindowFnKind::Sigmoid, brain(), d).unwrap();
        assert!(r.gray.iter().all(|&g| g == 254));
    }

    #[test]
    fn pgm_header() {
        let img = DisplayImage { height: 2, width: 3, gray: vec![0, 1, 2, 3, 4, 5] };
        let pgm = img.to_pgm();
        assert!(pgm.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&pgm[pgm.len() - 6..], &[0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn image_validation() {
        assert!(HuImage::new(0, 3, vec![]).is_err());
        assert!(HuImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(HuImage::new(1, 2, vec![0.0, f64::NAN]).is_err());
    }

    fn setting_strategy() -> impl Strategy<Value = WindowSetting> {
        (-500.0..1500.0f64, 10.0..2000.0f64).prop_map(|(l, w)| WindowSetting::new(l, w).unwrap())
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(s in setting_strategy(), a in -1024.0..3071.0f64, b in -1024.0..3071.0f64) {
            let d = DisplayRange::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (l1, l2) = (linear_window(lo, s, d).unwrap(), linear_window(hi, s, d).unwrap());
            prop_assert!(l1 <= l2);
            prop_assert!((0.0..=255.0).contains(&l1));
            let (s1, s2) = (sigmoid_window(lo, s, d).unwrap(), sigmoid_window(hi, s, d).unwrap());
            prop_assert!(s1 <= s2);
            prop_assert!(s1 >= 0.0 && s2 <= 255.0);
            // Open range and strictness hold wherever the logistic has not
            // rounded to 0 or 1 in f64.
            let z = |x: f64| 2.0 * d.edge_logit() * (x - s.level()) / s.width();
            if z(lo) > -700.0 {
                prop_assert!(s1 > 0.0);
            }
            if hi - lo > 1e-9 * hi.abs().max(1.0) && z(hi) < 30.0 && z(lo) > -700.0 {
                prop_assert!(s1 < s2);
                prop_assert!(s2 < 255.0);
            }
        }

        #[test]
        fn anchors_hold_for_any_setting(s in setting_strategy()) {
            let d = DisplayRange::default();
            prop_assert_eq!(linear_window(s.level(), s, d).unwrap(), 127.5);
            prop_assert_eq!(sigmoid_window(s.level(), s, d).unwrap(), 127.5);
            prop_assert!(rel_close(linear_window(s.start(), s, d).unwrap(), 0.0, 1e-9));
            prop_assert!(rel_close(linear_window(s.end(), s, d).unwrap(), 255.0, 1e-9));
            prop_assert!(rel_close(sigmoid_window(s.start(), s, d).unwrap(), 1.0, 1e-9));
            prop_assert!(rel_close(sigmoid_window(s.end(), s, d).unwrap(), 254.0, 1e-9));
        }

        #[test]
        fn linear_shift_consistency(s in setting_strategy(), x in -1024.0..3071.0f64, delta in -500.0..500.0f64) {
            let d = DisplayRange::default();
            let shifted = WindowSetting::new(s.level() + delta, s.width()).unwrap();
            let a = linear_window(x, s, d).unwrap();
            let b = linear_window(x + delta, shifted, d).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * 255.0 * (1.0 + (x.abs() + delta.abs()) / s.width()));
        }
    }
}
