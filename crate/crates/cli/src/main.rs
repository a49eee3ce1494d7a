mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "thermosynth", version, about = "Thermal-heatmap conditioned RGB synthesis pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// JSON config merged over the defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Start from the small desk-scale preset instead of the full-size defaults.
    #[arg(long, global = true)]
    pub toy: bool,
    /// Dotted-key override, e.g. `train.gan.max_steps=200`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Master seed (data generation, preprocessing noise, init, training).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a procedurally generated paired dataset.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        count: usize,
    },
    /// Export preprocessed heatmaps, images and masks of a dataset.
    Preprocess {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the generator and discriminator.
    TrainGan {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint bundle.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        checkpoint_every: Option<usize>,
        /// Stop after this many completed steps (the schedule is unchanged).
        #[arg(long)]
        stop_at: Option<usize>,
    },
    /// Train the inversion encoder against the frozen generator.
    TrainInversion {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint_every: Option<usize>,
        #[arg(long)]
        stop_at: Option<usize>,
    },
    /// Invert every dataset image into the latent code set.
    BuildLatents {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// FID between a dataset and another dataset or generated images.
    EvalFid {
        #[arg(long)]
        real: PathBuf,
        /// Dataset whose images are compared against `--real`.
        #[arg(long, conflicts_with = "bundle", required_unless_present = "bundle")]
        fake: Option<PathBuf>,
        /// Generate one image per real heatmap with random codes.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a codes × heatmaps grid.
    Grid {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        latents: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        codes: usize,
        #[arg(long, default_value_t = 4)]
        heatmaps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shift-the-person disentanglement probe.
    Probe {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        latents: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Person detection accuracy across thermal resolutions.
    Privacy {
        /// `blob` (built in) or `external`.
        #[arg(long, default_value = "blob")]
        detector: String,
        /// Program run per frame by the external detector.
        #[arg(long)]
        detector_cmd: Option<PathBuf>,
        #[arg(long)]
        detector_arg: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generator throughput at several batch sizes.
    Bench {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,8,32")]
        batch: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value_t = 2)]
        warmup: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a replayed session over HTTP and WebSocket.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        latents: PathBuf,
        /// Dataset directory or manifest to replay.
        #[arg(long)]
        replay: PathBuf,
        #[arg(long = "loop")]
        looping: bool,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = thermosynth::data::NATIVE_FPS)]
        fps: f64,
        #[arg(long, default_value = "png")]
        encode: String,
        /// Exit after this many seconds instead of waiting for Ctrl-C.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the resolved configuration.
    PrintConfig,
}

fn report(e: &CliError) {
    eprintln!("{}", serde_json::json!({ "error": e.to_string(), "kind": e.kind() }));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report(&CliError::Usage(e.render().to_string().trim().to_string()));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::FAILURE
        }
    }
}
