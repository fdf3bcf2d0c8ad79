use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mbda_pipeline::{
    compare, eval_pipeline, synth_dataset, train_pipeline, Dataset, Method, ModelBundle,
    PipelineConfig, SynthSpec,
};

pub const BUNDLE_FILE: &str = "model.bundle";

#[derive(Parser)]
#[command(name = "mbda", version, about = "Multilinear biased discriminant analysis for action unit sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset root (manifest.json plus one directory per sequence).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// mbda, twodbda_bda, mda or geometric_only.
    #[arg(long, global = true, default_value = "mbda")]
    method: String,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset into --dataset.
    Synth,
    /// Train detectors; writes <out>/model.bundle.
    Train,
    /// Score a bundle on the test split; writes metrics.json and table.txt.
    Eval {
        /// Bundle file or a directory holding model.bundle.
        #[arg(long)]
        model: PathBuf,
    },
    /// Train and score all four arms; writes compare.csv and compare.txt.
    Compare,
    /// Print bundle metadata.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::from_file(p)
            .with_context(|| format!("reading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn dataset_dir(cli: &Cli) -> Result<&Path> {
    cli.dataset.as_deref().context("--dataset is required")
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().context("--out is required")
}

fn bundle_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(BUNDLE_FILE)
    } else {
        p.to_path_buf()
    }
}

fn load_dataset(cli: &Cli) -> Result<Dataset> {
    let dir = dataset_dir(cli)?;
    Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth => {
            let config = load_config(&cli)?;
            let dir = dataset_dir(&cli)?;
            let manifest = synth_dataset(&SynthSpec::from_config(&config), dir)?;
            println!(
                "wrote {} sequences to {}",
                manifest.sequences.len(),
                dir.display()
            );
        }
        Command::Train => {
            let config = load_config(&cli)?;
            let method: Method = cli.method.parse()?;
            let dataset = load_dataset(&cli)?;
            let bundle = train_pipeline(&dataset, method, &config)?;
            let out = out_dir(&cli)?;
            std::fs::create_dir_all(out)?;
            let path = out.join(BUNDLE_FILE);
            bundle.save(&path)?;
            println!(
                "trained {} detectors ({} skipped), wrote {}",
                bundle.detectors.len(),
                bundle.skipped.len(),
                path.display()
            );
        }
        Command::Eval { model } => {
            let bundle = ModelBundle::load(&bundle_path(model))
                .with_context(|| format!("loading bundle {}", model.display()))?;
            let dataset = load_dataset(&cli)?;
            let report = eval_pipeline(&bundle, &dataset)?;
            if let Some(out) = &cli.out {
                report.write(out)?;
            }
            print!("{}", report.render()?);
        }
        Command::Compare => {
            let config = load_config(&cli)?;
            let dataset = load_dataset(&cli)?;
            let comparison = compare(&dataset, &config)?;
            if let Some(out) = &cli.out {
                comparison.write(out)?;
            }
            print!("{}", comparison.to_text());
        }
        Command::Inspect { model } => {
            let bundle = ModelBundle::load(&bundle_path(model))
                .with_context(|| format!("loading bundle {}", model.display()))?;
            print!("{}", bundle.describe());
        }
    }
    Ok(())
}
