//! Command-line front end. [`run`] parses arguments, writes results to `out`
//! and diagnostics to `err`, and returns the process exit code.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage, 3 I/O.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    generate_dataset, load_manifest, read_hu_file, split_by_case, synthetic_split, write_manifest, write_samples,
    DatasetSplit, PhantomSpec, Sample, Task, DEFAULT_FRACTIONS,
};
use crate::error::Error;
use crate::format::fmt6;
use crate::nn::{finite_diff_check, random_case, StepSchedule};
use crate::optim::TrainHyper;
use crate::train::{
    evaluate, load_checkpoint, run_grid, save_checkpoint, train_model, ExperimentVariant, GridReport, VARIANT_COUNT,
};
use crate::windowing::{preset, render_display, window, DisplayRange, WindowFnKind, WindowSetting};
use crate::wso::WsoChannel;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Maximum relative gradient error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;

/// Environment variable capping grid parallelism.
pub const THREADS_ENV: &str = "WSO_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "wso-lab", version, about = "Trainable CT window settings: display, data, training and inspection")]
pub struct Cli {
    #[command(flatten)]
    pub config: CliConfig,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct CliConfig {
    /// Seed for data generation, initialization and shuffling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Base directory for outputs; relative output paths resolve against it.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Suppress progress messages on standard error.
    #[arg(long, global = true)]
    pub quiet: bool,
}

impl CliConfig {
    fn resolve(&self, path: &Path) -> Result<PathBuf, Failure> {
        let Some(dir) = &self.out_dir else {
            return Ok(path.to_path_buf());
        };
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        Ok(if path.is_absolute() { path.to_path_buf() } else { dir.join(path) })
    }
}

#[derive(Debug, Clone, Args)]
pub struct WindowArgs {
    /// Window function.
    #[arg(long = "fn", default_value = "linear")]
    pub kind: WindowFnKind,
    /// Named preset: brain, subdural, bone or abdomen.
    #[arg(long, conflicts_with_all = ["wl", "ww"], required_unless_present_all = ["wl", "ww"])]
    pub preset: Option<String>,
    /// Window level in HU.
    #[arg(long, requires = "ww", allow_negative_numbers = true)]
    pub wl: Option<f64>,
    /// Window width in HU.
    #[arg(long, requires = "wl")]
    pub ww: Option<f64>,
    /// Display maximum.
    #[arg(long, default_value_t = 255.0)]
    pub u: f64,
    /// Sigmoid edge margin.
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
}

#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

impl HyperArgs {
    /// Defaults with the overrides applied; the decay period shrinks to
    /// fit short runs.
    fn hyper(&self) -> TrainHyper {
        let mut h = TrainHyper::default();
        if let Some(e) = self.epochs {
            h.epochs = e;
            h.decay_every = h.decay_every.min(e.max(1));
        }
        if let Some(b) = self.batch_size {
            h.batch_size = b;
        }
        h
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a HURAW1 image through a display window to an 8-bit PGM.
    Window {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print `x,f(x)` samples of a window function.
    Curve {
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long)]
        step: f64,
    },
    /// Generate synthetic phantoms as HURAW1 files plus `manifest.tsv`.
    GenData {
        #[arg(long, default_value = "hemorrhage")]
        task: Task,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 0.5)]
        pos_frac: f64,
    },
    /// Train one variant and write a checkpoint plus a history CSV.
    Train {
        /// Variant index (0-9) or name.
        #[arg(long)]
        variant: String,
        #[arg(long, default_value = "hemorrhage")]
        task: Task,
        /// Dataset manifest.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// History CSV path; defaults to `<out>.history.csv`.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Seed of the case-level split.
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Print `ap,auc` of a checkpoint on one partition of a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Partition,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
    },
    /// Train and test all ten variants and write the grid report.
    Grid {
        #[arg(long, default_value = "hemorrhage")]
        task: Task,
        /// Dataset manifest; without it phantoms are generated from `--seed`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 100, conflicts_with = "data")]
        cases: usize,
        /// Report CSV; printed to standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra seeded runs, written next to `--out` as `<stem>.repeatK.csv`.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Print the learned window of every WSO channel.
    InspectWso {
        #[arg(long)]
        model: PathBuf,
    },
    /// Compare analytic and finite-difference gradients on a random model.
    Gradcheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Partition {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug)]
enum Failure {
    Check(String),
    Usage(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Check(_) => EXIT_CHECK,
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Check(m) | Failure::Usage(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            _ if e.is_io() => Failure::Io(msg),
            Error::NonFiniteLoss { .. } | Error::NonFiniteGradient(_) | Error::DegenerateWindow { .. } => {
                Failure::Check(msg)
            }
            _ => Failure::Usage(msg),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

/// Parses `args` (program name first) and executes the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let cfg = &cli.config;
    let mut note = |msg: String| {
        if !cfg.quiet {
            let _ = writeln!(err, "{msg}");
        }
    };
    let mut emit = |text: &str| out.write_all(text.as_bytes()).map_err(|e| Failure::Io(format!("stdout: {e}")));

    match &cli.command {
        Command::Window { input, window: w, output } => {
            let (kind, setting, range) = w.resolve()?;
            let img = read_hu_file(input)?;
            let pgm = render_display(&img, kind, setting, range)?.to_pgm();
            let path = cfg.resolve(output)?;
            std::fs::write(&path, pgm).map_err(|e| io_failure(&path, e))?;
            note(format!("wrote {}", path.display()));
        }
        Command::Curve { window: w, from, to, step } => {
            let (kind, setting, range) = w.resolve()?;
            let bad = !(from.is_finite() && to.is_finite() && step.is_finite()) || from >= to || *step <= 0.0;
            if bad {
                return Err(Failure::Usage(format!("need from < to and step > 0 (from {from}, to {to}, step {step})")));
            }
            let n = ((to - from) / step + 1e-9).floor() as usize;
            let mut csv = String::from("x,f(x)\n");
            for i in 0..=n {
                let x = from + i as f64 * step;
                csv.push_str(&format!("{},{}\n", fmt6(x), fmt6(window(kind, x, setting, range)?)));
            }
            emit(&csv)?;
        }
        Command::GenData { task, cases, pos_frac } => {
            let dir = cfg.out_dir.clone().ok_or_else(|| Failure::Usage("gen-data needs --out-dir".into()))?;
            let samples = generate_dataset(&PhantomSpec::default(), *task, *cases, *pos_frac, cfg.seed)?;
            let entries = write_samples(&dir, &samples)?;
            let manifest = dir.join("manifest.tsv");
            write_manifest(&manifest, &entries)?;
            note(format!("wrote {} slices from {cases} cases to {}", entries.len(), manifest.display()));
        }
        Command::Train { variant, task, data, out: ckpt, history, split_seed, hyper } => {
            let variant = ExperimentVariant::parse(variant, *task)?;
            let split = split_by_case(load_manifest(data)?, DEFAULT_FRACTIONS, *split_seed)?;
            let (trained, hist) = train_model(&variant, &split, &hyper.hyper(), cfg.seed)?;
            let ckpt = cfg.resolve(ckpt)?;
            save_checkpoint(&ckpt, &trained)?;
            let hist_path = match history {
                Some(p) => cfg.resolve(p)?,
                None => append_suffix(&ckpt, ".history.csv"),
            };
            std::fs::write(&hist_path, hist.to_csv()).map_err(|e| io_failure(&hist_path, e))?;
            note(format!(
                "{}: selected epoch {} (val loss {}); wrote {} and {}",
                variant.name(),
                trained.selected_epoch,
                fmt6(trained.val_loss),
                ckpt.display(),
                hist_path.display()
            ));
        }
        Command::Eval { model, data, split, split_seed } => {
            let trained = load_checkpoint(model)?;
            let samples = load_manifest(data)?;
            let samples = partition(samples, *split, *split_seed)?;
            let (ap, auc) = evaluate(&trained, &samples)?;
            emit(&format!("{},{}\n", fmt6(ap), fmt6(auc)))?;
        }
        Command::Grid { task, data, cases, out: report, repeats, hyper } => {
            if *repeats == 0 {
                return Err(Failure::Usage("--repeats must be at least 1".into()));
            }
            let split = match data {
                Some(m) => split_by_case(load_manifest(m)?, DEFAULT_FRACTIONS, cfg.seed)?,
                None => synthetic_split(*task, *cases, cfg.seed)?,
            };
            let threads = grid_threads()?;
            let mut failed = Vec::new();
            for k in 0..*repeats {
                let seed = cfg.seed.wrapping_add((k * VARIANT_COUNT) as u64);
                let grid = run_grid(*task, &split, &hyper.hyper(), seed, threads);
                failed.extend(
                    grid.rows.iter().filter_map(|r| r.outcome.as_ref().err().map(|e| (r.variant.name(), e.clone()))),
                );
                write_report(cfg, &grid, report.as_deref(), k, &mut emit, &mut note)?;
            }
            if !failed.is_empty() {
                let list: Vec<String> = failed.iter().map(|(n, e)| format!("{n}: {e}")).collect();
                return Err(Failure::Check(format!("{} variant run(s) failed: {}", failed.len(), list.join("; "))));
            }
        }
        Command::InspectWso { model } => {
            let trained = load_checkpoint(model)?;
            let layer = trained.model.wso.as_ref().ok_or(Failure::Usage(Error::NoWsoLayer.to_string()))?;
            let mut csv = String::from("kind,w,b,WL,WW\n");
            for (WsoChannel { w, b }, s) in layer.channels().into_iter().zip(layer.settings()?) {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    layer.kind(),
                    fmt6(w),
                    fmt6(b),
                    fmt6(s.level()),
                    fmt6(s.width())
                ));
            }
            emit(&csv)?;
        }
        Command::Gradcheck => {
            let mut case = random_case(cfg.seed)?;
            let r = finite_diff_check(&mut case.model, &case.input, &case.labels, &StepSchedule::default())?;
            emit(&format!("max_rel_error,{}\n", fmt6(r.max_rel_error)))?;
            note(format!("worst parameter {}[{}] of {} checked", r.worst.0, r.worst.1, r.checked));
            if r.max_rel_error.is_nan() || r.max_rel_error > GRADCHECK_TOLERANCE {
                return Err(Failure::Check(format!(
                    "max relative error {} exceeds {}",
                    fmt6(r.max_rel_error),
                    fmt6(GRADCHECK_TOLERANCE)
                )));
            }
        }
    }
    Ok(())
}

fn write_report(
    cfg: &CliConfig,
    grid: &GridReport,
    report: Option<&Path>,
    repeat: usize,
    emit: &mut dyn FnMut(&str) -> Result<(), Failure>,
    note: &mut dyn FnMut(String),
) -> Result<(), Failure> {
    let csv = grid.to_csv();
    let Some(base) = report else {
        return emit(&csv);
    };
    let path = cfg.resolve(&repeat_path(base, repeat))?;
    std::fs::write(&path, csv).map_err(|e| io_failure(&path, e))?;
    note(format!("wrote {}", path.display()));
    Ok(())
}

/// `report.csv` for the first run, `report.repeatK.csv` for run `K`.
pub fn repeat_path(base: &Path, repeat: usize) -> PathBuf {
    if repeat == 0 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = base.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    base.with_file_name(format!("{stem}.repeat{repeat}{ext}"))
}

fn append_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn partition(samples: Vec<Sample>, which: Partition, seed: u64) -> Result<Vec<Sample>, Failure> {
    if which == Partition::All {
        return Ok(samples);
    }
    let DatasetSplit { train, validation, test } = split_by_case(samples, DEFAULT_FRACTIONS, seed)?;
    Ok(match which {
        Partition::Train => train,
        Partition::Validation => validation,
        _ => test,
    })
}

fn grid_threads() -> Result<usize, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
    }
}

impl WindowArgs {
    fn resolve(&self) -> Result<(WindowFnKind, WindowSetting, DisplayRange), Failure> {
        let setting = match (&self.preset, self.wl, self.ww) {
            (Some(name), _, _) => preset(name)?,
            (None, Some(wl), Some(ww)) => WindowSetting::new(wl, ww)?,
            _ => return Err(Failure::Usage("give --preset or both --wl and --ww".into())),
        };
        Ok((self.kind, setting, DisplayRange::new(self.u, self.eps)?))
    }
}
