use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::trainer::{evaluate, train_model, TrainHistory, TrainedModel};
use super::variant::ExperimentVariant;
use crate::data::{DatasetSplit, Task};
use crate::error::Result;
use crate::format::fmt6;
use crate::optim::TrainHyper;
use crate::windowing::WindowSetting;

/// Test-set outcome of one trained variant.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub ap: f64,
    pub auc: f64,
    pub selected_epoch: usize,
    pub learned_windows: Option<Vec<WindowSetting>>,
    pub trained: TrainedModel,
    pub history: TrainHistory,
}

#[derive(Debug, Clone)]
pub struct GridRow {
    pub variant: ExperimentVariant,
    pub seed: u64,
    /// `Err` holds the failure message; the rest of the grid still runs.
    pub outcome: std::result::Result<GridOutcome, String>,
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub rows: Vec<GridRow>,
}

impl GridReport {
    pub const CSV_HEADER: &'static str =
        "variant,windowing_function,initialization,ap,auc,selected_epoch,learned_windows";

    pub fn row(&self, name: &str) -> Option<&GridRow> {
        self.rows.iter().find(|r| r.variant.name() == name)
    }

    /// One line per variant. Failed rows carry `nan` metrics and an empty
    /// epoch; learned windows are `WL:WW` pairs joined by `;`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let v = &r.variant;
            let tail = match &r.outcome {
                Ok(o) => format!(
                    "{},{},{},{}",
                    fmt6(o.ap),
                    fmt6(o.auc),
                    o.selected_epoch,
                    o.learned_windows.as_deref().map(format_windows).unwrap_or_default()
                ),
                Err(_) => "nan,nan,,".to_string(),
            };
            out.push_str(&format!("{},{},{},{tail}\n", v.name(), v.windowing_function(), v.initialization()));
        }
        out
    }
}

pub fn format_windows(ws: &[WindowSetting]) -> String {
    ws.iter().map(|s| format!("{}:{}", fmt6(s.level()), fmt6(s.width()))).collect::<Vec<_>>().join(";")
}

/// Trains and tests one variant.
pub fn run_variant(
    variant: &ExperimentVariant,
    split: &DatasetSplit,
    hyper: &TrainHyper,
    seed: u64,
) -> Result<GridOutcome> {
    let (trained, history) = train_model(variant, split, hyper, seed)?;
    let (ap, auc) = evaluate(&trained, &split.test)?;
    Ok(GridOutcome {
        ap,
        auc,
        selected_epoch: trained.selected_epoch,
        learned_windows: trained.learned_windows()?,
        trained,
        history,
    })
}

/// Runs all ten variants on one split. Variant `i` trains with seed
/// `seed + i`, so results do not depend on `threads`.
pub fn run_grid(task: Task, split: &DatasetSplit, hyper: &TrainHyper, seed: u64, threads: usize) -> GridReport {
    let variants = ExperimentVariant::grid(task);
    let slots: Vec<Mutex<Option<GridRow>>> = variants.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(variant) = variants.get(i) else {
            break;
        };
        let seed = seed.wrapping_add(i as u64);
        let outcome = run_variant(variant, split, hyper, seed).map_err(|e| e.to_string());
        *slots[i].lock().expect("slot lock") = Some(GridRow { variant: variant.clone(), seed, outcome });
    };
    let threads = threads.clamp(1, variants.len());
    if threads == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(work);
            }
        });
    }
    let rows = slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every variant ran")).collect();
    GridReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, split_by_case, PhantomSpec, DEFAULT_FRACTIONS};

    #[test]
    fn windows_column() {
        let ws = [WindowSetting::new(50.0, 100.0).unwrap(), WindowSetting::new(47.25, 131.5).unwrap()];
        assert_eq!(format_windows(&ws), "50:100;47.25:131.5");
    }

    #[test]
    fn grid_is_thread_count_independent() {
        let spec = PhantomSpec { size: 20, lesion_radius: (2, 2), slices_per_case: (2, 2), ..PhantomSpec::default() };
        let samples = generate_dataset(&spec, Task::Hemorrhage, 20, 0.5, 1).unwrap();
        let split = split_by_case(samples, DEFAULT_FRACTIONS, 1).unwrap();
        let hyper = TrainHyper { epochs: 2, decay_every: 1, batch_size: 8, ..TrainHyper::default() };
        let a = run_grid(Task::Hemorrhage, &split, &hyper, 3, 1);
        let b = run_grid(Task::Hemorrhage, &split, &hyper, 3, 3);
        assert_eq!(a.to_csv(), b.to_csv());
        let csv = a.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], GridReport::CSV_HEADER);
        assert!(lines[1].starts_with("full_range,-,-,"));
        assert!(lines[1].ends_with(','));
        assert!(lines[10].starts_with("wso_sigmoid_s1_s2,sigmoid,S1+S2,"));
        assert!(a.rows.iter().all(|r| r.outcome.is_ok()), "{csv}");
        assert_eq!(lines[10].rsplit(',').next().unwrap().split(';').count(), 2);
        assert_eq!(a.rows[4].seed, 7);
    }
}
