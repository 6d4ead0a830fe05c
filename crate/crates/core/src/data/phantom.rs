//! Synthetic CT-like phantoms with lesions confined to narrow HU bands.
//!
//! Each case is an elliptical soft-tissue body in air with sparse bone-like
//! speckle. Positive cases carry one disk lesion per slice: a hemorrhage-like
//! lesion sits a few tens of HU above the local tissue, a stone-like lesion
//! has a fixed HU drawn from a dense band.

use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::windowing::{HuImage, Preset};

/// Representable stored range for 12-bit CT with intercept -1024.
pub const HU_MIN: f64 = -1024.0;
pub const HU_MAX: f64 = 3071.0;

/// Smallest body semi-axis as a fraction of the image size.
const MIN_SEMI_AXIS: f64 = 0.30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Hemorrhage,
    Stone,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Hemorrhage => "hemorrhage",
            Task::Stone => "stone",
        }
    }

    /// The two clinical presets used as `S1` and `S2` for this task.
    pub fn presets(&self) -> [Preset; 2] {
        match self {
            Task::Hemorrhage => [Preset::Brain, Preset::Subdural],
            Task::Stone => [Preset::Bone, Preset::Abdomen],
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hemorrhage" | "hemorrhage-like" | "ich" => Ok(Task::Hemorrhage),
            "stone" | "stone-like" => Ok(Task::Stone),
            other => Err(format!("unknown task '{other}' (expected hemorrhage or stone)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub size: usize,
    pub air_hu: f64,
    pub body_band: (f64, f64),
    pub bone_band: (f64, f64),
    pub bone_density: f64,
    pub lesion_radius: (usize, usize),
    /// HU above local tissue for hemorrhage-like lesions.
    pub hemorrhage_contrast: (f64, f64),
    /// Absolute HU band of stone-like lesions.
    pub stone_band: (f64, f64),
    pub noise_sigma: f64,
    pub slices_per_case: (usize, usize),
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            size: 64,
            air_hu: -1000.0,
            body_band: (0.0, 80.0),
            bone_band: (300.0, 1500.0),
            bone_density: 0.02,
            lesion_radius: (3, 6),
            hemorrhage_contrast: (25.0, 45.0),
            stone_band: (400.0, 900.0),
            noise_sigma: 5.0,
            slices_per_case: (4, 12),
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bands = [
            ("body", self.body_band),
            ("bone", self.bone_band),
            ("hemorrhage contrast", self.hemorrhage_contrast),
            ("stone", self.stone_band),
        ];
        for (name, (lo, hi)) in bands {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::InvalidPhantomSpec(format!("{name} band [{lo}, {hi}] is inverted or non-finite")));
            }
        }
        for (name, (lo, hi)) in [("lesion radius", self.lesion_radius), ("slices per case", self.slices_per_case)] {
            if lo > hi || lo == 0 {
                return Err(Error::InvalidPhantomSpec(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        for (name, band) in [("hemorrhage lesion", self.lesion_band(Task::Hemorrhage)), ("stone", self.stone_band)] {
            if band.0 < HU_MIN || band.1 > HU_MAX {
                return Err(Error::InvalidPhantomSpec(format!("{name} band {band:?} leaves [{HU_MIN}, {HU_MAX}]")));
            }
        }
        // smallest body semi-axis must leave room for the biggest lesion
        if self.size < 16 || MIN_SEMI_AXIS * self.size as f64 - (self.lesion_radius.1 as f64 + 2.0) < 1.0 {
            return Err(Error::InvalidPhantomSpec(format!("image size {} too small", self.size)));
        }
        if !(0.0..1.0).contains(&self.bone_density) || self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidPhantomSpec("bone density must be in [0, 1) and noise sigma >= 0".into()));
        }
        Ok(())
    }

    /// HU interval lesion pixels occupy before noise.
    pub fn lesion_band(&self, task: Task) -> (f64, f64) {
        match task {
            Task::Hemorrhage => {
                (self.body_band.0 + self.hemorrhage_contrast.0, self.body_band.1 + self.hemorrhage_contrast.1)
            }
            Task::Stone => self.stone_band,
        }
    }
}

/// Placement of an injected lesion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lesion {
    pub row: usize,
    pub col: usize,
    pub radius: usize,
}

impl Lesion {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        let (dy, dx) = (row as f64 - self.row as f64, col as f64 - self.col as f64);
        dy * dy + dx * dx <= (self.radius * self.radius) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: HuImage,
    pub label: bool,
    pub case_id: String,
    /// Ground-truth lesion; present exactly when `label` is true.
    pub lesion: Option<Lesion>,
}

pub fn case_id(index: usize) -> String {
    format!("case-{index:04}")
}

/// Smooth soft-tissue background over an elliptical body.
struct Anatomy {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
    base: f64,
    grad_y: f64,
    grad_x: f64,
    wave: f64,
    phase: f64,
}

impl Anatomy {
    fn draw<R: Rng>(rng: &mut R, spec: &PhantomSpec) -> Self {
        let s = spec.size as f64;
        let (lo, hi) = spec.body_band;
        let span = hi - lo;
        Self {
            cy: s / 2.0 + rng.random_range(-0.05..0.05) * s,
            cx: s / 2.0 + rng.random_range(-0.05..0.05) * s,
            ay: rng.random_range(0.34..0.44) * s,
            ax: rng.random_range(MIN_SEMI_AXIS..0.42) * s,
            base: lo + rng.random_range(0.0..0.05) * span,
            grad_y: rng.random_range(-0.03..0.03) * span,
            grad_x: rng.random_range(-0.03..0.03) * span,
            wave: rng.random_range(0.0..0.02) * span,
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }

    fn inside(&self, r: f64, c: f64) -> bool {
        let (dy, dx) = ((r - self.cy) / self.ay, (c - self.cx) / self.ax);
        dy * dy + dx * dx <= 1.0
    }

    fn tissue(&self, r: f64, c: f64, band: (f64, f64)) -> f64 {
        let (ny, nx) = ((r - self.cy) / self.ay, (c - self.cx) / self.ax);
        let v = self.base + self.grad_y * ny + self.grad_x * nx + self.wave * (3.0 * ny + 2.0 * nx + self.phase).sin();
        v.clamp(band.0, band.1)
    }
}

fn render_slice<R: Rng>(
    rng: &mut R,
    spec: &PhantomSpec,
    task: Task,
    anatomy: &Anatomy,
    positive: bool,
    noise: &Normal<f64>,
) -> Result<(Vec<f64>, Option<Lesion>)> {
    let n = spec.size;
    let mut hu = vec![spec.air_hu; n * n];
    let mut body = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            if anatomy.inside(r as f64, c as f64) {
                hu[r * n + c] = anatomy.tissue(r as f64, c as f64, spec.body_band);
                body.push(r * n + c);
            }
        }
    }
    let bone_count = (spec.bone_density * body.len() as f64).round() as usize;
    for &i in body.choose_multiple(rng, bone_count) {
        hu[i] = rng.random_range(spec.bone_band.0..=spec.bone_band.1);
    }
    let lesion = if positive {
        let radius = rng.random_range(spec.lesion_radius.0..=spec.lesion_radius.1);
        // centre far enough inside the body that the whole disk is tissue
        let margin = radius as f64 + 2.0;
        let (mut row, mut col);
        loop {
            row = rng.random_range(0..n);
            col = rng.random_range(0..n);
            let (ry, rx) = (anatomy.ay - margin, anatomy.ax - margin);
            let (dy, dx) = ((row as f64 - anatomy.cy) / ry, (col as f64 - anatomy.cx) / rx);
            if ry > 0.0 && rx > 0.0 && dy * dy + dx * dx <= 1.0 {
                break;
            }
        }
        let lesion = Lesion { row, col, radius };
        let fixed = match task {
            Task::Hemorrhage => None,
            Task::Stone => Some(rng.random_range(spec.stone_band.0..=spec.stone_band.1)),
        };
        let contrast = rng.random_range(spec.hemorrhage_contrast.0..=spec.hemorrhage_contrast.1);
        for r in row.saturating_sub(radius)..(row + radius + 1).min(n) {
            for c in col.saturating_sub(radius)..(col + radius + 1).min(n) {
                if lesion.contains(r, c) {
                    hu[r * n + c] = match fixed {
                        Some(v) => v,
                        None => anatomy.tissue(r as f64, c as f64, spec.body_band) + contrast,
                    };
                }
            }
        }
        Some(lesion)
    } else {
        None
    };
    for v in &mut hu {
        *v = (*v + noise.sample(rng)).round().clamp(HU_MIN, HU_MAX);
    }
    Ok((hu, lesion))
}

/// Generates `n_cases` cases, `round(n_cases·positive_fraction)` of them
/// positive. Every slice of a positive case carries one lesion.
pub fn generate_dataset(
    spec: &PhantomSpec,
    task: Task,
    n_cases: usize,
    positive_fraction: f64,
    seed: u64,
) -> Result<Vec<Sample>> {
    spec.validate()?;
    if n_cases < 6 {
        return Err(Error::InvalidDataset(format!("need at least 6 cases, got {n_cases}")));
    }
    if !(positive_fraction > 0.0 && positive_fraction < 1.0) {
        return Err(Error::InvalidDataset(format!("positive fraction {positive_fraction} not in (0, 1)")));
    }
    let noise =
        Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidPhantomSpec(format!("noise sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pos = ((n_cases as f64 * positive_fraction).round() as usize).clamp(1, n_cases - 1);
    let mut is_pos: Vec<bool> = (0..n_cases).map(|i| i < n_pos).collect();
    is_pos.shuffle(&mut rng);

    let mut samples = Vec::new();
    for (k, &positive) in is_pos.iter().enumerate() {
        let id = case_id(k);
        let anatomy = Anatomy::draw(&mut rng, spec);
        let slices = rng.random_range(spec.slices_per_case.0..=spec.slices_per_case.1);
        for _ in 0..slices {
            let (hu, lesion) = render_slice(&mut rng, spec, task, &anatomy, positive, &noise)?;
            let image = HuImage::new(spec.size, spec.size, hu)?.with_rescale(1.0, -1024.0).with_case_id(id.clone());
            samples.push(Sample { image, label: positive, case_id: id.clone(), lesion });
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn deterministic_for_seed() {
        let spec = PhantomSpec::default();
        let a = generate_dataset(&spec, Task::Hemorrhage, 8, 0.5, 42).unwrap();
        let b = generate_dataset(&spec, Task::Hemorrhage, 8, 0.5, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&spec, Task::Hemorrhage, 8, 0.5, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn label_balance_and_consistency() {
        let spec = PhantomSpec::default();
        let samples = generate_dataset(&spec, Task::Stone, 100, 0.5, 1).unwrap();
        let mut cases: BTreeMap<&str, (bool, usize)> = BTreeMap::new();
        for s in &samples {
            assert_eq!(s.label, s.lesion.is_some());
            assert_eq!(s.image.case_id, s.case_id);
            let e = cases.entry(&s.case_id).or_insert((s.label, 0));
            assert_eq!(e.0, s.label, "labels are per case");
            e.1 += 1;
        }
        assert_eq!(cases.len(), 100);
        let pos = cases.values().filter(|c| c.0).count();
        assert!((49..=51).contains(&pos), "{pos}");
        assert!(cases.values().all(|c| (4..=12).contains(&c.1)));
    }

    #[test]
    fn stone_lesions_sit_in_their_band() {
        let spec = PhantomSpec::default();
        for s in generate_dataset(&spec, Task::Stone, 6, 0.5, 5).unwrap() {
            if let Some(l) = s.lesion {
                let v = s.image.get(l.row, l.col);
                assert!((370.0..=930.0).contains(&v), "{v}");
            }
        }
    }

    #[test]
    fn invalid_requests() {
        let spec = PhantomSpec::default();
        assert!(generate_dataset(&spec, Task::Stone, 5, 0.5, 0).is_err());
        assert!(generate_dataset(&spec, Task::Stone, 10, 1.0, 0).is_err());
        let inverted = PhantomSpec { body_band: (80.0, 0.0), ..PhantomSpec::default() };
        assert!(matches!(generate_dataset(&inverted, Task::Hemorrhage, 10, 0.5, 0), Err(Error::InvalidPhantomSpec(_))));
    }

    #[test]
    fn band_constants() {
        let spec = PhantomSpec::default();
        assert_eq!(spec.lesion_band(Task::Hemorrhage), (25.0, 125.0));
        assert_eq!(spec.lesion_band(Task::Stone), (400.0, 900.0));
    }
}
