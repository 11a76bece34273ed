//! `wein`: synthesize data, train, predict, evaluate and compare against
//! classical detectors.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
//! failure (I/O, malformed files, divergence).

mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use settings::{read_kv, Settings, SynthSettings, TrainSettings};
use wein::baselines::{
    calibrate_canny, calibrate_sobel, canny_threshold_grid, evaluate_baseline, sobel_threshold_grid, BaselineOp,
    CannyConfig,
};
use wein::data::{load_split, pgm, write_dataset, Dataset, Split};
use wein::gradcheck::{run_all, GradcheckOptions};
use wein::losses::predict_average;
use wein::metrics::{MetricsReport, DEFAULT_THRESHOLD};
use wein::model::{receptive_field_table, Checkpoint, Wein};
use wein::trainer::{evaluate, train_with, write_loss_log, TrainEvent};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(wein::Error),
}

impl From<wein::Error> for CliError {
    fn from(e: wein::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use wein::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(E::Config(_) | E::InvalidArgument(_) | E::Shape { .. } | E::UnknownLayer(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(
    name = "wein",
    version,
    about = "Weak-edge identification network for ocean-front style edges"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the seeded synthetic corpus and write train/test splits.
    Synth(SynthArgs),
    /// Train a model on the train split of a dataset directory.
    Train(TrainArgs),
    /// Run a checkpoint on one PGM image.
    Predict(PredictArgs),
    /// Score a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Score Sobel or Canny on a dataset split.
    Baseline(BaselineArgs),
    /// Print receptive field and stride of every backbone layer.
    RfTable,
    /// Run the finite-difference gradient suites; exit 0 iff all pass.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// key=value settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus seed [default: 7].
    #[arg(long)]
    seed: Option<u64>,
    /// Number of images [default: 365].
    #[arg(long)]
    count: Option<usize>,
    /// Image size as HxW, multiples of 8 [default: 128x128].
    #[arg(long)]
    size: Option<String>,
    /// Train share [default: 305/365].
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Probability of a land region per image [default: 0.3].
    #[arg(long)]
    land_fraction: Option<f64>,
    /// Value-noise amplitude [default: 0.08].
    #[arg(long)]
    noise_amplitude: Option<f64>,
    /// Ridge Gaussian sigma in pixels [default: 2.5].
    #[arg(long)]
    ridge_width: Option<f64>,
    /// Flat ocean value [default: 0.3].
    #[arg(long)]
    ocean_level: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory produced by `synth`.
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// key=value settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Loss log CSV [default: OUT with extension .loss.csv].
    #[arg(long)]
    loss_log: Option<PathBuf>,
    /// Learning rate [default: 1e-5].
    #[arg(long)]
    lr: Option<f64>,
    /// Epochs [default: 8].
    #[arg(long)]
    epochs: Option<usize>,
    /// Init and shuffle seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// SGD momentum [default: 0.9].
    #[arg(long)]
    momentum: Option<f64>,
    /// Weight decay on weights [default: 2e-4].
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Learning-rate decay factor [default: 0.1].
    #[arg(long)]
    lr_gamma: Option<f64>,
    /// Comma-separated epochs after which the rate decays [default: 6].
    #[arg(long)]
    lr_step_epochs: Option<String>,
    /// Samples per SGD step [default: 1].
    #[arg(long)]
    batch: Option<usize>,
    /// Non-edge weight ratio [default: 1.9].
    #[arg(long)]
    r: Option<f64>,
    /// Extra loss term: none or smooth_l1 [default: none].
    #[arg(long)]
    star: Option<String>,
    /// Drop the IoU loss term.
    #[arg(long)]
    no_iou: bool,
    /// Save an intermediate checkpoint every N epochs [default: 0, off].
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Comma-separated widths of the four stages [default: 8,16,32,64].
    #[arg(long)]
    stage_widths: Option<String>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Input PGM; sides must be multiples of 8.
    #[arg(long)]
    image: PathBuf,
    /// Output PGM of the averaged probability map.
    #[arg(long)]
    out: PathBuf,
    /// Also write the four side maps and the fused map next to OUT.
    #[arg(long)]
    all_maps: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Probability above which a pixel is an edge.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Metrics JSON output.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Sobel,
    Canny,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    op: BaselineKind,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Sobel magnitude threshold.
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    /// Canny Gaussian sigma.
    #[arg(long, default_value_t = 1.4)]
    sigma: f64,
    /// Canny low threshold.
    #[arg(long, default_value_t = 0.3)]
    t_low: f64,
    /// Canny high threshold.
    #[arg(long, default_value_t = 0.6)]
    t_high: f64,
    /// Choose thresholds by best mean F1 on the train split first.
    #[arg(long)]
    calibrate: bool,
    /// Metrics JSON output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for the predicted masks as PGM.
    #[arg(long)]
    masks: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupt one analytic gradient (negative control).
    #[arg(long, hide = true)]
    fault: bool,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn print_resolved(settings: &impl Settings) {
    println!("# resolved config");
    print!("{}", settings.render());
}

fn print_resolved_pairs(pairs: &[(&str, String)]) {
    println!("# resolved config");
    for (k, v) in pairs {
        println!("{k}={v}");
    }
}

fn write_report(path: Option<&Path>, report: &MetricsReport) -> CliResult {
    let a = &report.aggregate;
    println!(
        "images={} precision={:.4} recall={:.4} f1={:.4} iou={:.4} ssim={:.4}",
        a.images, a.precision, a.recall, a.f1, a.iou, a.ssim
    );
    if let Some(p) = path {
        std::fs::write(p, report.to_json() + "\n").map_err(|e| wein::Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?;
    }
    Ok(())
}

fn synth(args: SynthArgs) -> CliResult {
    let mut s = SynthSettings::default();
    if let Some(path) = &args.config {
        s.apply(&read_kv(path).map_err(usage)?).map_err(usage)?;
    }
    let mut flags: Vec<(&str, String)> = Vec::new();
    let opt = |v: Option<String>, k: &'static str, flags: &mut Vec<(&str, String)>| {
        if let Some(v) = v {
            flags.push((k, v));
        }
    };
    opt(args.seed.map(|v| v.to_string()), "seed", &mut flags);
    opt(args.count.map(|v| v.to_string()), "count", &mut flags);
    opt(args.size.clone(), "size", &mut flags);
    opt(args.train_fraction.map(|v| v.to_string()), "train_fraction", &mut flags);
    opt(args.land_fraction.map(|v| v.to_string()), "land_fraction", &mut flags);
    opt(
        args.noise_amplitude.map(|v| v.to_string()),
        "noise_amplitude",
        &mut flags,
    );
    opt(args.ridge_width.map(|v| v.to_string()), "ridge_width", &mut flags);
    opt(args.ocean_level.map(|v| v.to_string()), "ocean_level", &mut flags);
    for (k, v) in flags {
        s.set(k, &v).map_err(usage)?;
    }
    print_resolved(&s);
    if s.synth.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    s.synth.validate()?;
    let dataset = Dataset::synthesize(&s.synth, s.train_fraction)?;
    write_dataset(&args.out, &dataset, args.force)?;
    println!(
        "wrote {} train + {} test images to {}",
        dataset.train.len(),
        dataset.test.len(),
        args.out.display()
    );
    println!("corpus_sha256={}", dataset.manifest.corpus_sha256);
    Ok(())
}

fn train(args: TrainArgs) -> CliResult {
    let mut s = TrainSettings::default();
    if let Some(path) = &args.config {
        s.apply(&read_kv(path).map_err(usage)?).map_err(usage)?;
    }
    let mut flags: Vec<(&str, String)> = Vec::new();
    let mut opt = |k: &'static str, v: Option<String>| {
        if let Some(v) = v {
            flags.push((k, v));
        }
    };
    opt("lr", args.lr.map(|v| v.to_string()));
    opt("epochs", args.epochs.map(|v| v.to_string()));
    opt("seed", args.seed.map(|v| v.to_string()));
    opt("momentum", args.momentum.map(|v| v.to_string()));
    opt("weight_decay", args.weight_decay.map(|v| v.to_string()));
    opt("lr_gamma", args.lr_gamma.map(|v| v.to_string()));
    opt("lr_step_epochs", args.lr_step_epochs.clone());
    opt("batch", args.batch.map(|v| v.to_string()));
    opt("r", args.r.map(|v| v.to_string()));
    opt("star", args.star.clone());
    opt("checkpoint_every", args.checkpoint_every.map(|v| v.to_string()));
    opt("stage_widths", args.stage_widths.clone());
    if args.no_iou {
        opt("use_iou", Some("false".into()));
    }
    for (k, v) in flags {
        s.set(k, &v).map_err(usage)?;
    }
    print_resolved(&s);
    s.train.validate()?;
    s.net.validate()?;

    let samples = load_split(&args.data, Split::Train)?;
    let log_path = args
        .loss_log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("loss.csv"));
    let out = args.out.clone();
    let outcome = train_with(&samples, &s.net, &s.train, |event| {
        match event {
            TrainEvent::EpochEnd { epoch, lr, mean_total } => {
                println!("epoch {epoch}: lr={lr} mean_loss={mean_total:.4}");
            }
            TrainEvent::Checkpoint(c) => {
                let path = out.with_extension(format!("epoch{}.ckpt", c.epochs_completed));
                c.save(&path)?;
                println!("saved {}", path.display());
            }
        }
        Ok(())
    })?;
    outcome.checkpoint.save(&args.out)?;
    write_loss_log(&log_path, &outcome.log)?;
    println!("saved {} and {}", args.out.display(), log_path.display());
    Ok(())
}

fn predict(args: PredictArgs) -> CliResult {
    print_resolved_pairs(&[
        ("ckpt", args.ckpt.display().to_string()),
        ("image", args.image.display().to_string()),
        ("out", args.out.display().to_string()),
        ("all_maps", args.all_maps.to_string()),
    ]);
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let image = pgm::load_image(&args.image)?;
    let mut model = Wein::new(ckpt.config, ckpt.params)?;
    let outputs = model.forward(&image)?;
    pgm::save_image(&args.out, &predict_average(&outputs))?;
    println!("wrote {}", args.out.display());
    if args.all_maps {
        let stem = args
            .out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let names = ["side1", "side2", "side3", "side4", "fused"];
        for (name, map) in names.iter().zip(outputs.prob_maps()) {
            let path = args.out.with_file_name(format!("{stem}_{name}.pgm"));
            pgm::save_image(&path, map)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn eval(args: EvalArgs) -> CliResult {
    let split: Split = args.split.into();
    print_resolved_pairs(&[
        ("ckpt", args.ckpt.display().to_string()),
        ("data", args.data.display().to_string()),
        ("split", split.to_string()),
        ("threshold", args.threshold.to_string()),
    ]);
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let samples = load_split(&args.data, split)?;
    let report = evaluate(&ckpt, &samples, args.threshold)?;
    write_report(args.report.as_deref(), &report)
}

fn baseline(args: BaselineArgs) -> CliResult {
    let split: Split = args.split.into();
    let mut op = match args.op {
        BaselineKind::Sobel => BaselineOp::Sobel {
            threshold: args.threshold,
        },
        BaselineKind::Canny => BaselineOp::Canny(CannyConfig {
            gaussian_sigma: args.sigma,
            t_low: args.t_low,
            t_high: args.t_high,
        }),
    };
    if let BaselineOp::Canny(c) = &op {
        c.validate()?;
    }
    if let BaselineOp::Sobel { threshold } = op {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(usage(format!("--threshold must be >= 0, got {threshold}")));
        }
    }
    if args.calibrate {
        let train = load_split(&args.data, Split::Train)?;
        op = match op {
            BaselineOp::Sobel { .. } => {
                let (t, f) = calibrate_sobel(&train, &sobel_threshold_grid())?;
                println!("calibrated sobel threshold={t} (train f1={f:.4})");
                BaselineOp::Sobel { threshold: t }
            }
            BaselineOp::Canny(c) => {
                let (cfg, f) = calibrate_canny(&train, c.gaussian_sigma, &canny_threshold_grid())?;
                println!(
                    "calibrated canny t_low={} t_high={} (train f1={f:.4})",
                    cfg.t_low, cfg.t_high
                );
                BaselineOp::Canny(cfg)
            }
        };
    }
    let mut pairs = vec![("data", args.data.display().to_string()), ("split", split.to_string())];
    match &op {
        BaselineOp::Sobel { threshold } => {
            pairs.push(("op", "sobel".into()));
            pairs.push(("threshold", threshold.to_string()));
        }
        BaselineOp::Canny(c) => {
            pairs.push(("op", "canny".into()));
            pairs.push(("sigma", c.gaussian_sigma.to_string()));
            pairs.push(("t_low", c.t_low.to_string()));
            pairs.push(("t_high", c.t_high.to_string()));
        }
    }
    print_resolved_pairs(&pairs);
    let samples = load_split(&args.data, split)?;
    if let Some(dir) = &args.masks {
        std::fs::create_dir_all(dir).map_err(|e| wein::Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        for s in &samples {
            pgm::save_mask(&dir.join(format!("{}.pgm", s.id)), &op.apply(&s.image)?)?;
        }
    }
    let report = evaluate_baseline(&samples, &op)?;
    write_report(args.report.as_deref(), &report)
}

fn rf_table() -> CliResult {
    print_resolved_pairs(&[]);
    println!("{:<8} {:>4} {:>6}", "layer", "rf", "stride");
    for row in receptive_field_table() {
        println!("{:<8} {:>4} {:>6}", row.layer, row.rf_size, row.stride);
    }
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> Result<bool, CliError> {
    let opts = GradcheckOptions {
        seed: args.seed,
        fault: args.fault,
        ..GradcheckOptions::default()
    };
    print_resolved_pairs(&[
        ("seed", opts.seed.to_string()),
        ("step", opts.step.to_string()),
        ("tolerance", opts.tolerance.to_string()),
    ]);
    let results = run_all(&opts)?;
    for r in &results {
        println!(
            "{} {:<16} checked={:<4} skipped={:<3} max_rel_error={:.3e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.checked,
            r.skipped,
            r.max_rel_error
        );
    }
    Ok(results.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Baseline(a) => baseline(a),
        Command::RfTable => rf_table(),
        Command::Gradcheck(a) => match gradcheck(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: gradient check failed");
                return ExitCode::from(1);
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
