//! Command-line entry point: train, evaluate, upscale and compare
//! workflows over the srcaps library.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use srcaps::config::RunConfig;
use srcaps::data::{self, Dataset, DatasetSpec};
use srcaps::error::{Error, Result};
use srcaps::losses::BarronLatents;
use srcaps::metrics::{evaluate_pair, EvalReport};
use srcaps::model::{Checkpoint, SrCaps};
use srcaps::train::{CheckpointKind, TrainSession, HISTORY_HEADER};
use srcaps::Tensor4;

#[derive(Parser)]
#[command(
    name = "srcaps",
    version,
    about = "Capsule-based single-image super-resolution: training, evaluation and upscaling"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write checkpoints, history and the resolved config
    Train(TrainArgs),
    /// Evaluate a checkpoint (or the bicubic baseline) on a dataset
    Eval(EvalArgs),
    /// Upscale PNG images with a checkpoint or the bicubic baseline
    Upscale(UpscaleArgs),
    /// Compare two directories of same-named PNGs with the full metric set
    Compare(CompareArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Configuration file with `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for all randomness in the run
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of training epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the upscaling factor (2, 3 or 4)
    #[arg(long)]
    scale: Option<usize>,
    /// Override the training loss (l1, mse, ssim, msssim, mix, barron,
    /// adaptive, sobel, psnr3, ssim3)
    #[arg(long)]
    loss: Option<String>,
    /// Force the deterministic execution mode
    #[arg(long)]
    deterministic: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let mut over = BTreeMap::new();
        if let Some(seed) = self.seed {
            over.insert("seed".to_string(), seed.to_string());
        }
        if let Some(epochs) = self.epochs {
            over.insert("train.epochs".to_string(), epochs.to_string());
        }
        if let Some(scale) = self.scale {
            over.insert("model.scale".to_string(), scale.to_string());
        }
        if let Some(loss) = &self.loss {
            over.insert("loss.name".to_string(), loss.clone());
        }
        if self.deterministic {
            over.insert("train.deterministic".to_string(), "true".to_string());
        }
        cfg.apply_kv(over)?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Dataset root containing the train/validation splits
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Run directory for checkpoints, history and the config snapshot
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Checkpoint to evaluate
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Evaluate a model-free baseline instead: `bicubic`
    #[arg(long)]
    baseline: Option<String>,
    /// Dataset directory containing `HR/` (and optionally `LRx<r>/`)
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for report.csv and summary.txt
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct UpscaleArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Checkpoint to run
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Use a model-free baseline instead: `bicubic`
    #[arg(long)]
    baseline: Option<String>,
    /// Output directory for the upscaled PNGs
    #[arg(long)]
    out: PathBuf,
    /// Input PNG files
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Directory of distorted/reconstructed images
    sr_dir: PathBuf,
    /// Directory of reference images
    hr_dir: PathBuf,
    /// Output directory for report.csv and summary.txt
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Upscale(args) => cmd_upscale(args),
        Cmd::Compare(args) => cmd_compare(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn echo_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("config.resolved"), &cfg.to_text())
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    let mut cfg = args.common.resolve()?;
    if let Some(ds) = &args.dataset {
        cfg.data.root = Some(ds.clone());
    }
    let root = cfg.data.root.clone().ok_or_else(|| {
        Error::config("no dataset given: set data.root in the config or pass --dataset")
    })?;
    let train_dir = root.join(&cfg.data.train_split);
    if !train_dir.is_dir() {
        return Err(Error::config(format!(
            "training split not found at {}",
            train_dir.display()
        )));
    }
    let data: Dataset<f32> = Dataset::load(&DatasetSpec::new(&train_dir, cfg.model.scale))?;
    let val: Option<Dataset<f32>> = match &cfg.data.val_split {
        Some(split) => {
            let dir = root.join(split);
            if dir.is_dir() {
                Some(Dataset::load(&DatasetSpec::new(&dir, cfg.model.scale))?)
            } else {
                eprintln!(
                    "warning: validation split {} not found, validation disabled",
                    dir.display()
                );
                None
            }
        }
        None => None,
    };

    echo_config(&args.out, &cfg)?;
    let mut model = SrCaps::<f32>::build(cfg.model.clone(), cfg.train.seed)?;
    let summary = model.summary();
    println!(
        "model: {} parameters, receptive field ~{} px",
        summary.total, summary.receptive_field
    );
    let mut latents = if cfg.loss.needs_latents() {
        Some(BarronLatents::<f32>::new(
            cfg.loss.barron.alpha,
            cfg.loss.barron.c,
        )?)
    } else {
        None
    };

    let history_path = args.out.join("history.csv");
    let mut history_file = fs::File::create(&history_path).map_err(|e| Error::io(&history_path, e))?;
    writeln!(history_file, "{HISTORY_HEADER}").map_err(|e| Error::io(&history_path, e))?;

    let out_dir = args.out.clone();
    let config_echo = cfg.to_text();
    let session = TrainSession {
        model: &mut model,
        latents: latents.as_mut(),
        loss: &cfg.loss,
        data: &data,
        val: val.as_ref(),
        cfg: &cfg.train,
        config_echo,
    };
    let result = session.run(
        0,
        None,
        &mut |record| {
            writeln!(history_file, "{}", record.to_csv_line())
                .map_err(|e| Error::io(&history_path, e))
        },
        &mut |ck, kind| {
            let name = match kind {
                CheckpointKind::Final | CheckpointKind::Periodic => "last.ckpt",
                CheckpointKind::Best => "best.ckpt",
                CheckpointKind::Emergency => "emergency.ckpt",
            };
            ck.save(&out_dir.join(name))
        },
    )?;

    println!(
        "trained {} epochs ({} steps); final loss {}",
        cfg.train.epochs,
        result.last.step,
        result
            .history
            .last()
            .map(|r| r.train_loss.to_string())
            .unwrap_or_else(|| "n/a".to_string())
    );
    println!("checkpoint: {}", args.out.join("last.ckpt").display());
    Ok(0)
}

/// What produces SR images in eval/upscale.
enum SrSource {
    Model(Box<SrCaps<f32>>),
    Bicubic { scale: usize },
}

impl SrSource {
    fn from_flags(
        checkpoint: &Option<PathBuf>,
        baseline: &Option<String>,
        cfg: &RunConfig,
    ) -> Result<(Self, usize)> {
        match (checkpoint, baseline) {
            (Some(_), Some(_)) => Err(Error::usage(
                "--checkpoint and --baseline are mutually exclusive",
            )),
            (None, Some(name)) => match name.as_str() {
                "bicubic" => Ok((
                    SrSource::Bicubic {
                        scale: cfg.model.scale,
                    },
                    cfg.model.scale,
                )),
                other => Err(Error::config(format!(
                    "unknown baseline '{other}' (supported: bicubic)"
                ))),
            },
            (Some(path), None) => {
                let ck = Checkpoint::<f32>::load(path)?;
                let ck_cfg = RunConfig::from_text(&ck.config_text)?;
                let mut model = SrCaps::<f32>::build(ck_cfg.model.clone(), ck.seed)?;
                // drop latent entries; they are training state, not model weights
                let weights: Vec<_> = ck
                    .params
                    .iter()
                    .filter(|(n, _)| !n.starts_with("loss."))
                    .cloned()
                    .collect();
                model.load_params(&weights)?;
                let scale = model.cfg.scale;
                Ok((SrSource::Model(Box::new(model)), scale))
            }
            (None, None) => Err(Error::usage(
                "either --checkpoint or --baseline bicubic is required",
            )),
        }
    }

    fn upscale(&self, lr: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        match self {
            SrSource::Model(m) => m.infer(lr),
            SrSource::Bicubic { scale } => data::bicubic_upscale(lr, *scale),
        }
    }
}

fn finish_report(report: &EvalReport, out: Option<&PathBuf>, cfg: &RunConfig) -> Result<()> {
    if let Some(dir) = out {
        echo_config(dir, cfg)?;
        write_text(&dir.join("report.csv"), &report.to_csv())?;
        write_text(&dir.join("summary.txt"), &report.summary_text())?;
    }
    print!("{}", report.summary_text());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<i32> {
    let cfg = args.common.resolve()?;
    let (source, scale) = SrSource::from_flags(&args.checkpoint, &args.baseline, &cfg)?;
    let dataset: Dataset<f32> = Dataset::load(&DatasetSpec::new(&args.dataset, scale))?;

    let mut report = EvalReport::new(dataset.name.clone(), scale);
    for pair in &dataset.pairs {
        let sr = source.upscale(&pair.lr)?;
        let hr = if pair.hr.shape() == sr.shape() {
            pair.hr.clone()
        } else {
            data::crop(&pair.hr, 0, 0, sr.shape().h, sr.shape().w)?
        };
        let row = evaluate_pair(&pair.name, &sr.cast::<f64>(), &hr.cast::<f64>(), &cfg.eval)?;
        report.rows.push(row);
    }
    finish_report(&report, args.out.as_ref(), &cfg)?;
    Ok(0)
}

fn cmd_upscale(args: UpscaleArgs) -> Result<i32> {
    let cfg = args.common.resolve()?;
    let (source, scale) = SrSource::from_flags(&args.checkpoint, &args.baseline, &cfg)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    echo_config(&args.out, &cfg)?;

    let mut failures = 0usize;
    for input in &args.inputs {
        let result = (|| -> Result<PathBuf> {
            let lr: Tensor4<f32> = data::load_image(input)?;
            let sr = source.upscale(&lr)?;
            let name = input
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::usage(format!("bad input path {}", input.display())))?;
            let out_path = args.out.join(format!("{name}_x{scale}.png"));
            data::save_image(&sr, &out_path)?;
            Ok(out_path)
        })();
        match result {
            Ok(path) => println!("{} -> {}", input.display(), path.display()),
            Err(e) => {
                eprintln!("failed on {}: {e}", input.display());
                failures += 1;
            }
        }
    }
    Ok(if failures > 0 { 1 } else { 0 })
}

fn png_names_sorted(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.extension().map(|e| e.eq_ignore_ascii_case("png")) == Some(true) {
            if let Some(name) = p.file_name().and_then(|n| n.to_str()) {
                names.push(name.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

fn cmd_compare(args: CompareArgs) -> Result<i32> {
    let cfg = args.common.resolve()?;
    let sr_names = png_names_sorted(&args.sr_dir)?;
    let hr_names = png_names_sorted(&args.hr_dir)?;
    if sr_names != hr_names {
        let only_sr: Vec<_> = sr_names.iter().filter(|n| !hr_names.contains(n)).collect();
        let only_hr: Vec<_> = hr_names.iter().filter(|n| !sr_names.contains(n)).collect();
        return Err(Error::usage(format!(
            "filename sets differ (only in {}: {:?}; only in {}: {:?})",
            args.sr_dir.display(),
            only_sr,
            args.hr_dir.display(),
            only_hr
        )));
    }
    if sr_names.is_empty() {
        return Err(Error::usage("no PNG images to compare"));
    }

    let mut report = EvalReport::new("compare", cfg.model.scale);
    for name in &sr_names {
        let sr: Tensor4<f64> = data::load_image(&args.sr_dir.join(name))?;
        let hr: Tensor4<f64> = data::load_image(&args.hr_dir.join(name))?;
        report.rows.push(evaluate_pair(name, &sr, &hr, &cfg.eval)?);
    }
    finish_report(&report, args.out.as_ref(), &cfg)?;
    Ok(0)
}
