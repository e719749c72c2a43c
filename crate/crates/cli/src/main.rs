use std::path::PathBuf;
use std::process::ExitCode;

use annoseg_cli::commands;
use annoseg_cli::config::RunConfig;
use annoseg_cli::CliError;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "annoseg", version, about = "Segment handwritten annotations on printed pages")]
struct Cli {
    /// TOML run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides both the run seed and the synthetic-data seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rasterize PAGE-XML annotation polygons into label PNGs.
    GtRasterize {
        #[arg(long)]
        xml_dir: PathBuf,
        #[arg(long)]
        image_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset with a train/test manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
    },
    /// Train a network on a dataset's training split.
    Train {
        /// Dataset directory (overrides data.dir).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Label one PNG or a directory of PNGs.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted label PNGs against ground-truth label PNGs.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Where the report and diff images go (default: the pred dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.synth.seed = s;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--threads: {e}")))?;
    }
    match cli.cmd {
        Cmd::GtRasterize { xml_dir, image_dir, out } => {
            let s = commands::gt_rasterize(&xml_dir, &image_dir, &out, cfg.binarization)?;
            println!(
                "{} pages: background {} annotation {} ambiguous {}",
                s.pages.len(),
                s.total.background,
                s.total.annotation,
                s.total.ambiguous
            );
        }
        Cmd::Synth { out, train, test } => {
            let m = commands::synth(
                &cfg,
                train.unwrap_or(cfg.data.train_pages),
                test.unwrap_or(cfg.data.test_pages),
                &out,
            )?;
            println!("wrote {} train and {} test pages to {}", m.train.len(), m.test.len(), out.display());
        }
        Cmd::Train { data, out, steps } => {
            if data.is_some() {
                cfg.data.dir = data;
            }
            if let Some(s) = steps {
                cfg.optimizer.steps = s;
            }
            let losses = commands::train(&cfg, &out)?;
            if let Some(l) = losses.last() {
                println!("trained {} steps, final loss {l:.5}", losses.len());
            }
        }
        Cmd::Infer { model, input, out } => {
            let done = commands::infer(&cfg, &model, &input, &out)?;
            println!("labelled {} images into {}", done.len(), out.display());
        }
        Cmd::Eval { pred, gt, out } => {
            let out = out.unwrap_or_else(|| pred.clone());
            let r = commands::eval(&cfg, &pred, &gt, &out)?;
            for (c, iou) in r.per_class_iou.iter().enumerate() {
                println!("class {c} IoU {iou:.4}");
            }
            println!("mean IoU {:.4} ({:?})", r.mean_iou, r.aggregation);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
