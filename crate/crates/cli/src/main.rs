//! Command-line front end wiring the pipeline: synthesize fixtures,
//! preprocess, decompose, render features, split, train, evaluate and audit
//! model complexity.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use resp_scalogram::config::{RunConfig, ScalogramMode};
use resp_scalogram::dataset::LabelScheme;
use resp_scalogram::nn::{analyze, build_proposed_for_input, count_madd, count_params, Model};
use resp_scalogram::{pipeline, Error};

#[derive(Parser)]
#[command(name = "resp-scalogram", version, about = "Hybrid EMD-CWT scalogram pipeline for lung sounds")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Scalogram mode: hybrid or conventional.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<ScalogramMode>,

    /// Classification scheme: pathological6 or chronic3.
    #[arg(long, global = true, value_parser = parse_scheme)]
    scheme: Option<LabelScheme>,

    /// Worker threads for per-segment stages.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Corpus directory (recordings + diagnosis.csv).
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fixture corpus mimicking the corpus formats.
    Synth,
    /// Filter, resample, normalize and segment the corpus.
    Preprocess,
    /// Export per-segment IMF matrices with selection sidecars.
    Emd,
    /// Render scalogram images (hybrid or conventional) with augmentation.
    Features,
    /// Patient-disjoint train/validation split of the rendered images.
    Split,
    /// Train the lightweight model on the stored split.
    Train,
    /// Evaluate the stored checkpoint on the validation side.
    Eval,
    /// Per-layer shape/parameter/MAdd summary of the proposed model.
    Analyze,
}

fn parse_mode(s: &str) -> Result<ScalogramMode, String> {
    s.parse()
}

fn parse_scheme(s: &str) -> Result<LabelScheme, String> {
    s.parse()
}

fn load_config(common: &Common) -> Result<RunConfig, Error> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(mode) = common.mode {
        config.mode = mode;
    }
    if let Some(scheme) = common.scheme {
        config.scheme = scheme;
    }
    if let Some(threads) = common.threads {
        config.threads = threads;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    if let Some(corpus) = &common.corpus {
        config.corpus_dir = corpus.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = load_config(&cli.common)?;
    match cli.command {
        Command::Synth => {
            let summary = pipeline::run_synth(&config)?;
            println!(
                "synth: {} recordings, {} cycles, {} patients under {}",
                summary.recordings,
                summary.cycles,
                summary.patients,
                config.corpus_dir.display()
            );
        }
        Command::Preprocess => {
            let manifest = pipeline::run_preprocess(&config)?;
            println!("{:<16} {:>10} {:>9} {:>9}", "class", "recordings", "segments", "patients");
            for (class, (recs, segs, patients)) in manifest.per_class_counts() {
                println!("{class:<16} {recs:>10} {segs:>9} {patients:>9}");
            }
            println!(
                "total {} segments; dropped {} short cycles, {} excluded-class cycles; skipped {} recordings without diagnosis",
                manifest.segments.len(),
                manifest.dropped_short,
                manifest.dropped_excluded,
                manifest.skipped_recordings
            );
        }
        Command::Emd => {
            let written = pipeline::run_emd(&config)?;
            println!("emd: wrote {written} IMF matrices under {}", config.out_dir.join("imfs").display());
        }
        Command::Features => {
            let manifest = pipeline::run_features(&config)?;
            println!(
                "features ({:?}): {} images under {}",
                manifest.mode,
                manifest.images.len(),
                config.out_dir.join("images").display()
            );
        }
        Command::Split => {
            let outcome = pipeline::run_split(&config)?;
            for warning in &outcome.warnings {
                eprintln!("warning: {warning}");
            }
            println!(
                "split: {} train / {} val images ({} scheme, ratio {})",
                outcome.manifest.train.len(),
                outcome.manifest.val.len(),
                outcome.manifest.scheme,
                outcome.manifest.ratio
            );
        }
        Command::Train => {
            let logs = pipeline::run_train(&config)?;
            for log in &logs {
                println!(
                    "epoch {:>3}: train_loss {:.4} val_loss {:.4} val_acc {:.4}",
                    log.epoch, log.train_loss, log.val_loss, log.val_accuracy
                );
            }
            println!("checkpoint: {}", config.out_dir.join("model.ckpt").display());
        }
        Command::Eval => {
            let (cm, rep) = pipeline::run_eval(&config)?;
            print!("{}", resp_scalogram::metrics::format_report(&cm, &rep));
        }
        Command::Analyze => {
            let classes = config.scheme.n_classes();
            let spec = build_proposed_for_input(
                classes,
                config.model.input_size,
                &config.model.fc_widths,
                config.model.dropout,
            )?;
            let rows = analyze(&spec)?;
            println!("{:<14} {:>12} {:>12} {:>14}", "layer", "output", "params", "madds");
            for row in &rows {
                println!("{:<14} {:>12} {:>12} {:>14}", row.name, row.output_shape, row.params, row.madds);
            }
            let total_params = count_params(&spec)?;
            let total_madds = count_madd(&spec)?;
            // brute-force recount from the instantiated tensors must agree
            let model: Model<f64> = Model::new(spec, config.seed)?;
            let live = model.param_element_count();
            assert_eq!(live, total_params, "live tensor count disagrees with the formula");
            println!("\ntotal trainable parameters: {total_params} ({:.4}M)", total_params as f64 / 1e6);
            println!("total MAdds at {0}x{0}x3: {1} ({2:.2}M)", config.model.input_size, total_madds, total_madds as f64 / 1e6);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            if err.is_data_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
