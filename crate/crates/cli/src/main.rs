use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use segloss::distance::{dilate, edt, level_set};
use segloss::gradcheck::{gradcheck_suite, DEFAULT_STEP};
use segloss::io::{
    evaluate_losses, parse_loss_list, read_mask, read_probs, read_tensor, write_tensor, EvalConfig, EvalReport,
    InputDigest, Tensor,
};
use segloss::optimize::{logits_from_labels, optimize, Init, OptimizeConfig};
use segloss::relations::run_all;
use segloss::sample::RNG_NAME;
use segloss::{BinaryMask, Error, Exec, LabelMap, LossConfig, LossSpec, Shape};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;

/// Segmentation losses, gradient checks and distance transforms.
#[derive(Parser)]
#[command(name = "segloss", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate losses on a ground truth and a prediction.
    Eval {
        /// Ground-truth labels (NTF1 u8) or binary mask (PGM).
        #[arg(long)]
        gt: PathBuf,
        /// Probabilities (NTF1 f32/f64, class axis last).
        #[arg(long)]
        pred: PathBuf,
        /// Comma-separated loss names, or "all".
        #[arg(long, default_value = "all")]
        loss: String,
        /// JSON config with loss_config, spacing and per-loss parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Compare analytic gradients with central differences on random instances.
    Gradcheck {
        #[arg(long, default_value = "all")]
        loss: String,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
    },
    /// Run the identity, mismatch-form and distance-transform suites.
    Relations {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Gradient descent on logits against a fixed ground truth.
    Optimize {
        #[arg(long)]
        loss: String,
        /// Ground-truth labels (NTF1 u8) or binary mask (PGM).
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trajectory CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Warm start from the ground truth foreground dilated by this radius.
        #[arg(long)]
        dilate: Option<f64>,
        /// Logit margin of the warm start.
        #[arg(long, default_value_t = 3.0, requires = "dilate")]
        margin: f64,
        /// JSON config (loss_config, spacing, per-loss parameters).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Euclidean distance transform of a mask.
    Dt {
        /// Mask (NTF1 u8 or PGM).
        #[arg(long)]
        mask: PathBuf,
        /// Output NTF1 f64 tensor.
        #[arg(long)]
        out: PathBuf,
        /// Signed level set (negative inside) instead of distance to the mask.
        #[arg(long)]
        signed: bool,
        /// Comma-separated pixel spacing per axis.
        #[arg(long, value_delimiter = ',')]
        spacing: Option<Vec<f64>>,
    },
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(flag: &str, e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_INPUT,
            message: format!("{flag}: {e}"),
        }
    }
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::Format { source, .. } => source.code(),
        Error::Io { .. } => "io",
        Error::LabelOutOfRange { .. } => "label-range",
        Error::ProbabilityOutOfRange { .. } => "prob-range",
        Error::SimplexViolation { .. } => "simplex",
        Error::NonFinite { .. } => "non-finite",
        Error::ShapeMismatch { .. } | Error::InvalidShape(_) => "shape",
        Error::UnknownLoss { .. } => "unknown-loss",
        Error::Degenerate(_) => "degenerate",
        Error::Diverged { .. } => "diverged",
        Error::InvalidParameter(_) => "invalid-parameter",
    }
}

fn input<T>(flag: &str, r: segloss::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::input(flag, format_args!("[{}] {e}", error_code(&e))))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::input("--out", format_args!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<EvalConfig, Failure> {
    match path {
        Some(p) => input("--config", EvalConfig::read(p)),
        None => Ok(EvalConfig::default()),
    }
}

/// Labels from an NTF1 u8 tensor or a PGM mask. Without `classes`, the
/// count is one more than the largest label (at least two).
fn load_labels(path: &Path, classes: Option<usize>) -> segloss::Result<LabelMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let (dims, labels): (Vec<usize>, Vec<usize>) = if bytes.starts_with(b"P5") {
        let m = read_mask(path)?;
        (m.dims().to_vec(), m.values().iter().map(|&b| usize::from(b)).collect())
    } else {
        let t = read_tensor(path)?;
        if t.dtype() != segloss::io::Dtype::U8 {
            return Err(Error::Format {
                path: path.display().to_string(),
                source: segloss::FormatError::DtypeMismatch {
                    expected: "u8",
                    found: t.dtype().name(),
                },
            });
        }
        let dims = t.dims.clone();
        (dims, t.to_f64().into_iter().map(|v| v as usize).collect())
    };
    let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(2, |m| (m + 1).max(2)));
    LabelMap::new(Shape::new(&dims, classes)?, labels)
}

fn cmd_eval(
    gt: &Path,
    pred: &Path,
    loss: &str,
    config: Option<&Path>,
    out: Option<&Path>,
    format: Format,
) -> Result<u8, Failure> {
    let names = input("--loss", parse_loss_list(loss))?;
    let cfg = load_config(config)?;
    let s = input("--pred", read_probs(pred))?;
    let g = input("--gt", load_labels(gt, Some(s.shape().classes())))?;
    if g.shape() != s.shape() {
        return Err(Failure::input(
            "--gt",
            format_args!(
                "[shape] spatial dims {:?} do not match prediction dims {:?}",
                g.shape().dims(),
                s.shape().dims()
            ),
        ));
    }
    if let Some(sp) = &cfg.spacing {
        if sp.len() != g.shape().dims().len() {
            return Err(Failure::input(
                "--config",
                format_args!("[shape] spacing has {} entries for {} axes", sp.len(), g.shape().dims().len()),
            ));
        }
    }
    let inputs = vec![
        input("--gt", InputDigest::of_file("gt", gt))?,
        input("--pred", InputDigest::of_file("pred", pred))?,
    ];
    let (spacing, entries) = input("--loss", evaluate_losses(&names, &g.one_hot(), &s, &cfg, Exec::default()))?;
    let report = EvalReport {
        inputs,
        config: cfg,
        spacing,
        entries,
    };
    let text = match format {
        Format::Json => report.to_json() + "\n",
        Format::Csv => report.to_csv(),
    };
    emit(out, &text)?;
    for e in report.entries.iter().filter(|e| e.error.is_some()) {
        eprintln!("{}: {}", e.loss, e.error.as_deref().unwrap_or_default());
    }
    Ok(if !report.failed() {
        0
    } else if report.only_degenerate_failures() {
        EXIT_DEGENERATE
    } else {
        EXIT_INPUT
    })
}

fn cmd_gradcheck(loss: &str, trials: usize, tol: f64, seed: u64, step: f64) -> Result<u8, Failure> {
    let names = input("--loss", parse_loss_list(loss))?;
    if trials == 0 {
        return Err(Failure::input("--trials", "must be at least 1"));
    }
    let cfg = LossConfig::default();
    let mut reports = Vec::new();
    for name in &names {
        let spec = input("--loss", LossSpec::by_name(name))?;
        let r = input("--step", gradcheck_suite(&spec, trials, seed, &cfg, step, tol, Exec::default()))?;
        reports.push(r);
    }
    let pass = reports.iter().all(|r| r.pass);
    let summary = serde_json::json!({
        "rng": RNG_NAME,
        "seed": seed,
        "step": step,
        "tolerance": tol,
        "pass": pass,
        "losses": reports,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(if pass { 0 } else { EXIT_CHECK_FAILED })
}

fn cmd_relations(trials: usize, seed: u64) -> Result<u8, Failure> {
    if trials == 0 {
        return Err(Failure::input("--trials", "must be at least 1"));
    }
    let checks = input("--trials", run_all(trials, seed, Exec::default()))?;
    let pass = checks.iter().all(|c| c.pass);
    let summary = serde_json::json!({
        "rng": RNG_NAME,
        "seed": seed,
        "trials": trials,
        "pass": pass,
        "checks": checks,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(if pass { 0 } else { EXIT_CHECK_FAILED })
}

#[allow(clippy::too_many_arguments)]
fn cmd_optimize(
    loss: &str,
    gt: &Path,
    steps: usize,
    lr: f64,
    seed: u64,
    out: Option<&Path>,
    dilate_radius: Option<f64>,
    margin: f64,
    config: Option<&Path>,
) -> Result<u8, Failure> {
    let cfg = load_config(config)?;
    let spec = input("--loss", cfg.spec(loss.trim()))?;
    let labels = input("--gt", load_labels(gt, None))?;
    let dims = labels.shape().dims().to_vec();
    let mut opts = OptimizeConfig::new(steps, lr, seed, &dims);
    opts.loss_config = cfg.loss_config;
    if let Some(sp) = cfg.spacing {
        opts.spacing = sp;
    }
    if let Some(radius) = dilate_radius {
        let classes = labels.shape().classes();
        if classes != 2 {
            return Err(Failure::input("--dilate", "warm start needs a binary ground truth"));
        }
        let fg = input(
            "--gt",
            BinaryMask::new(&dims, labels.values().iter().map(|&l| l != 0).collect()),
        )?;
        let grown = input("--dilate", dilate(&fg, radius, &opts.spacing))?;
        let start: Vec<usize> = grown.values().iter().map(|&b| usize::from(b)).collect();
        opts.init = Init::Logits(logits_from_labels(&start, classes, margin));
    }
    let trajectory = input("--loss", optimize(&spec, &labels, &opts))?;
    emit(out, &trajectory.to_csv())?;
    let last = trajectory.last();
    eprintln!(
        "{}: step {} loss {:?} dice {:?} hausdorff {:?} ({RNG_NAME}, seed {seed})",
        trajectory.loss_name, last.step, last.loss, last.dice_coefficient, last.hausdorff
    );
    Ok(0)
}

fn cmd_dt(mask: &Path, out: &Path, signed: bool, spacing: Option<Vec<f64>>) -> Result<u8, Failure> {
    let m = input("--mask", read_mask(mask))?;
    let spacing = spacing.unwrap_or_else(|| vec![1.0; m.dims().len()]);
    let values = if signed {
        input("--spacing", level_set(&m, &spacing))?.values().to_vec()
    } else {
        input("--spacing", edt(&m, &spacing))?.values().to_vec()
    };
    let t = input("--out", Tensor::from_f64(m.dims(), values))?;
    input("--out", write_tensor(out, &t))?;
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Eval {
            gt,
            pred,
            loss,
            config,
            out,
            format,
        } => cmd_eval(&gt, &pred, &loss, config.as_deref(), out.as_deref(), format),
        Command::Gradcheck {
            loss,
            trials,
            tol,
            seed,
            step,
        } => cmd_gradcheck(&loss, trials, tol, seed, step),
        Command::Relations { trials, seed } => cmd_relations(trials, seed),
        Command::Optimize {
            loss,
            gt,
            steps,
            lr,
            seed,
            out,
            dilate,
            margin,
            config,
        } => cmd_optimize(
            &loss,
            &gt,
            steps,
            lr,
            seed,
            out.as_deref(),
            dilate,
            margin,
            config.as_deref(),
        ),
        Command::Dt {
            mask,
            out,
            signed,
            spacing,
        } => cmd_dt(&mask, &out, signed, spacing),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 and usage text on argument errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
