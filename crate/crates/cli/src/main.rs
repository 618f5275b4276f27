use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(
    name = "alprs",
    version,
    about = "License plate recognition from digit templates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract SIFT features from 0.pgm..9.pgm and write a template database
    BuildTemplates {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the transition-vector classifier from <label>/<sample>.pgm images
    TrainOcr {
        #[arg(long)]
        dir: PathBuf,
        /// Sampling grid, WxH
        #[arg(long)]
        grid: Option<String>,
        /// Pixels per transition pattern (2 or 3)
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        noise_fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recognize the plate in one or more images
    Recognize {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Positional classes, L = letter, N = digit, * = any (e.g. LLLNNNN)
        #[arg(long)]
        pattern: Option<String>,
        /// Print `-` instead of stage timings
        #[arg(long)]
        omit_timings: bool,
        /// Print full JSON reports, character boxes included
        #[arg(long)]
        json: bool,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Recognize every image of a manifest and print the hit rates
    Evaluate {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Rows of `path<TAB>plate`; relative paths are resolved against the manifest's directory
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        pattern: Option<String>,
        /// Worker threads (default: all cores)
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        omit_timings: bool,
    },
    /// Render a synthetic corpus: digit templates, OCR samples, plates and a manifest
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        samples_per_class: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::load_config().and_then(|cfg| match cli.command {
        Command::BuildTemplates { dir, out } => commands::build_templates(&dir, &out, &cfg),
        Command::TrainOcr {
            dir,
            grid,
            order,
            noise_fraction,
            out,
        } => commands::train_ocr(&dir, grid.as_deref(), order, noise_fraction, &out, cfg),
        Command::Recognize {
            db,
            model,
            pattern,
            omit_timings,
            json,
            images,
        } => {
            let opts = commands::RecognizeOpts {
                pattern,
                omit_timings,
                json,
            };
            commands::recognize(&db, &model, &images, &opts, cfg)
        }
        Command::Evaluate {
            db,
            model,
            manifest,
            pattern,
            jobs,
            omit_timings,
        } => commands::evaluate(&db, &model, &manifest, pattern, jobs, omit_timings, cfg),
        Command::GenCorpus {
            out,
            count,
            samples_per_class,
            seed,
        } => commands::gen_corpus(&out, count, samples_per_class, seed),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
