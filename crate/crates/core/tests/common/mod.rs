#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mann–Whitney AUC by enumerating every (positive, negative) pair.
pub fn oracle_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut twice = 0u64;
    let mut pairs = 0u64;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1;
                twice += if si > sj {
                    2
                } else if si == sj {
                    1
                } else {
                    0
                };
            }
        }
    }
    (pairs > 0).then(|| twice as f64 / (2 * pairs) as f64)
}

/// Step-wise AP over every distinct threshold, counting admitted items
/// directly at each one.
pub fn oracle_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let total = labels.iter().filter(|&&l| l).count();
    if total == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(&s, &l)| s >= t && l).count();
        let admitted = scores.iter().filter(|&&s| s >= t).count();
        let recall = tp as f64 / total as f64;
        ap += (recall - prev_recall) * (tp as f64 / admitted as f64);
        prev_recall = recall;
    }
    Some(ap)
}

/// Score grid {0.1, ..., 0.9}.
pub fn score_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

/// Calls `f` once per multiset of `n` (score, label) items over `grid`,
/// presented in a seeded shuffled order.
pub fn for_each_input(n: usize, grid: &[f64], mut f: impl FnMut(&[f64], &[bool])) {
    let kinds: Vec<(f64, bool)> = grid.iter().flat_map(|&s| [(s, false), (s, true)]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let mut picks = vec![0usize; n];
    let mut items: Vec<(f64, bool)> = Vec::with_capacity(n);
    let (mut scores, mut labels) = (Vec::with_capacity(n), Vec::with_capacity(n));
    loop {
        items.clear();
        items.extend(picks.iter().map(|&k| kinds[k]));
        items.shuffle(&mut rng);
        scores.clear();
        labels.clear();
        scores.extend(items.iter().map(|p| p.0));
        labels.extend(items.iter().map(|p| p.1));
        f(&scores, &labels);
        // next non-decreasing index sequence
        let Some(pos) = picks.iter().rposition(|&k| k + 1 < kinds.len()) else {
            return;
        };
        let next = picks[pos] + 1;
        picks[pos..].fill(next);
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}
