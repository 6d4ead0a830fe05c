//! Synthetic datasets, case-level splits, and on-disk storage.

mod huraw;
mod phantom;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use huraw::{decode_hu, encode_hu, read_hu_file, write_hu_file};
pub use phantom::{case_id, generate_dataset, Lesion, PhantomSpec, Sample, Task, HU_MAX, HU_MIN};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.6, 0.2, 0.2];
pub const DEFAULT_POSITIVE_FRACTION: f64 = 0.5;

/// Default phantoms, balanced labels, 60/20/20 case split. `seed` drives
/// both generation and the split.
pub fn synthetic_split(task: Task, n_cases: usize, seed: u64) -> Result<DatasetSplit> {
    let samples = generate_dataset(&PhantomSpec::default(), task, n_cases, DEFAULT_POSITIVE_FRACTION, seed)?;
    split_by_case(samples, DEFAULT_FRACTIONS, seed)
}

/// Partitions samples by case, stratified by case label (a case is positive
/// when any of its slices is). Case ids are sorted before shuffling, so
/// membership depends only on the set of ids and the seed.
pub fn split_by_case(samples: Vec<Sample>, fractions: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| f.is_nan() || *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDataset(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    let all: BTreeSet<&str> = samples.iter().map(|s| s.case_id.as_str()).collect();
    let positive: BTreeSet<&str> = samples.iter().filter(|s| s.label).map(|s| s.case_id.as_str()).collect();
    let n = all.len();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = (fractions[1] * n as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::TooFewCases { cases: n, fractions });
    }
    let mut pos: Vec<String> = positive.iter().map(|s| s.to_string()).collect();
    let mut neg: Vec<String> = all.difference(&positive).map(|s| s.to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    // positives per partition, kept feasible for the negatives left over
    let (n_pos, n_neg) = (pos.len(), neg.len());
    let share = |f: f64| (f * n_pos as f64).round() as usize;
    let p_train = share(fractions[0]).clamp(n_train.saturating_sub(n_neg), n_train.min(n_pos));
    let neg_left = n_neg - (n_train - p_train);
    let p_val = share(fractions[1]).clamp(n_val.saturating_sub(neg_left), n_val.min(n_pos - p_train));
    let (q_train, q_val) = (n_train - p_train, n_val - p_val);

    let train_ids: BTreeSet<String> = pos[..p_train].iter().chain(&neg[..q_train]).cloned().collect();
    let val_ids: BTreeSet<String> =
        pos[p_train..p_train + p_val].iter().chain(&neg[q_train..q_train + q_val]).cloned().collect();

    let mut split = DatasetSplit::default();
    for s in samples {
        if train_ids.contains(&s.case_id) {
            split.train.push(s);
        } else if val_ids.contains(&s.case_id) {
            split.validation.push(s);
        } else {
            split.test.push(s);
        }
    }
    Ok(split)
}

/// One line of a dataset manifest: `<path>\t<label>\t<case_id>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: bool,
    pub case_id: String,
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for e in entries {
        writeln!(out, "{}\t{}\t{}", e.path.display(), u8::from(e.label), e.case_id).expect("write to Vec");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |detail: &str| Error::Malformed { what: "manifest", detail: format!("line {}: {detail}", i + 1) };
            let mut cols = line.split('\t');
            let (Some(p), Some(label), Some(case_id), None) = (cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(bad("expected <path>\\t<label>\\t<case_id>"));
            };
            let label = match label {
                "0" => false,
                "1" => true,
                _ => return Err(bad("label must be 0 or 1")),
            };
            Ok(ManifestEntry { path: PathBuf::from(p), label, case_id: case_id.to_string() })
        })
        .collect()
}

/// Reads every image a manifest lists. Relative paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    read_manifest(path)?
        .into_iter()
        .map(|e| {
            let file = if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) };
            let image = read_hu_file(&file)?.with_case_id(e.case_id.clone());
            Ok(Sample { image, label: e.label, case_id: e.case_id, lesion: None })
        })
        .collect()
}

/// Writes one HURAW1 file per sample into `dir` and returns manifest entries
/// with paths relative to `dir`.
pub fn write_samples(dir: impl AsRef<Path>, samples: &[Sample]) -> Result<Vec<ManifestEntry>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut slice_of_case = std::collections::HashMap::<&str, usize>::new();
    samples
        .iter()
        .map(|s| {
            let k = slice_of_case.entry(&s.case_id).or_insert(0);
            let rel = PathBuf::from(format!("{}_s{:02}.huraw", s.case_id, k));
            *k += 1;
            write_hu_file(&s.image, dir.join(&rel))?;
            Ok(ManifestEntry { path: rel, label: s.label, case_id: s.case_id.clone() })
        })
        .collect()
}
