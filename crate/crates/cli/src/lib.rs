//! Command-line front end for the onconet pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use commands::{Context, ModelTag, TrainArgs};
use config::PipelineConfig;
use error::{CliError, EXIT_OK};

#[derive(Parser, Debug)]
#[command(name = "onconet", version, about = "Sparse pathway networks and gene-graph models for patient classification")]
pub struct Cli {
    /// Pipeline configuration (TOML); relative data paths resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed the command would otherwise take from the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving the command's outputs.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for data-parallel work (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic cohort, hierarchy and interaction table.
    Synth,
    /// Build the connectivity masks of the pathway network.
    BuildMasks {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        layers: Option<usize>,
    },
    /// Shuffle each mask's connections while keeping its shape and density.
    PermuteMasks {
        #[arg(long)]
        masks: PathBuf,
    },
    /// Build the thresholded gene interaction graph.
    BuildGraph {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Train one architecture over several seeds.
    Train {
        /// pnet, gcn, gat or meta.
        #[arg(long)]
        model: String,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        permute_masks: bool,
        #[arg(long)]
        layers: Option<usize>,
        /// Precomputed mask directory (pnet only).
        #[arg(long)]
        masks: Option<PathBuf>,
        /// Search result whose selected configuration to train (graph models only).
        #[arg(long)]
        gnn_config: Option<PathBuf>,
        /// Label under which predictions are stored.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Random hyperparameter search for one graph architecture.
    Search {
        #[arg(long)]
        arch: String,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Compare prediction stores: correlations and divergent patients.
    Agree {
        /// Prediction files or run directories, optionally as label=path.
        #[arg(long, num_args = 2.., required = true)]
        stores: Vec<String>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Summarize every training run under a directory.
    Report { run_dir: PathBuf },
}

fn load_config(path: Option<&Path>) -> Result<(PipelineConfig, PathBuf), CliError> {
    let Some(path) = path else {
        return Ok((PipelineConfig::default(), PathBuf::from(".")));
    };
    let text = onconet::io::read_text(path)?;
    let config = PipelineConfig::parse(&text, path)?;
    let base = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    Ok((config, base))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (mut config, base) = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.synth.seed = seed;
        config.train.seed = seed;
        config.search.seed = seed;
    }
    if let Command::BuildGraph { threshold: Some(t), .. } = &cli.command {
        config.graph.threshold = *t;
    }
    config.validate()?;
    if cli.jobs > 0 {
        // A second call within one process is harmless; the pool is already set.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| onconet::Error::Io {
        path: cli.out.clone(),
        source: e,
    })?;
    let ctx = Context {
        config,
        base,
        out: cli.out.clone(),
    };
    match cli.command {
        Command::Synth => commands::synth(&ctx),
        Command::BuildMasks { data, layers } => commands::build_masks_cmd(&ctx, data.as_deref(), layers),
        Command::PermuteMasks { masks } => commands::permute_masks_cmd(&ctx, &masks, ctx.config.train.seed),
        Command::BuildGraph { data, .. } => commands::build_graph_cmd(&ctx, data.as_deref()),
        Command::Train {
            model,
            seeds,
            permute_masks,
            layers,
            masks,
            gnn_config,
            name,
            data,
        } => commands::train_cmd(
            &ctx,
            TrainArgs {
                model: ModelTag::parse(&model)?,
                seeds,
                seed: None,
                permute_masks,
                layers,
                masks: masks.as_deref(),
                gnn_config: gnn_config.as_deref(),
                name,
                data: data.as_deref(),
            },
        ),
        Command::Search { arch, draws, data } => commands::search_cmd(&ctx, &arch, draws, None, data.as_deref()),
        Command::Agree { stores, delta, alpha } => commands::agree_cmd(&ctx, &stores, delta, alpha),
        Command::Report { run_dir } => commands::report_cmd(&ctx, &run_dir),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
