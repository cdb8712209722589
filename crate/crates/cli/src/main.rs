use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use mstates_cli::cache::Cache;
use mstates_cli::commands::{self, ClassifyRequest, SynthRequest};
use mstates_cli::config::{parse_epsilon_grid, pick, pick_path, ConfigFile, PipelineArgs, RunConfig};
use mstates_cli::{CliError, CliResult};
use mstates_core::synth::{Regime, RegimeSpec};

#[derive(Parser)]
#[command(name = "mstates", version, about = "Market states from sliding-epoch correlation matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build correlation frames and write the MSF1 file plus a manifest
    Frames(PipelineArgs),
    /// Pairwise frame distances (MSD1)
    Distances(PipelineArgs),
    /// SMACOF embedding of the frame distances
    Embed(PipelineArgs),
    /// σ landscape over (k, ε) and the selected optimum
    Scan(PipelineArgs),
    /// States, transitions and trajectory at a fixed (k, ε)
    States(PipelineArgs),
    /// Assign the newest epoch to a state of a saved model
    Classify(ClassifyArgs),
    /// Generate planted-regime prices
    Synth(SynthArgs),
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: PipelineArgs,
    /// Directory holding a model bundle written by `states`
    #[arg(long)]
    model: Option<PathBuf>,
    /// Price file whose last epoch_len + 1 dates form the new epoch
    #[arg(long)]
    new_prices: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_stocks: Option<usize>,
    /// Comma-separated correlation per regime
    #[arg(long)]
    correlations: Option<String>,
    /// Days per regime: one value or one per regime
    #[arg(long)]
    days: Option<String>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                e.exit();
            }
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return fail(CliError::Usage(first));
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json_line());
    ExitCode::from(e.exit_code() as u8)
}

fn prepare(args: &PipelineArgs) -> CliResult<(RunConfig, Cache)> {
    let cfg = RunConfig::resolve(args)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot start {n} threads: {e}")))?;
    }
    let cache = Cache::from_env(&cfg.out);
    Ok((cfg, cache))
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Frames(args) => {
            let (cfg, cache) = prepare(&args)?;
            let m = commands::cmd_frames(cfg, cache)?;
            println!("{}", serde_json::to_string(&m).map_err(mstates_core::Error::from)?);
        }
        Command::Distances(args) => {
            let (cfg, cache) = prepare(&args)?;
            commands::cmd_distances(cfg, cache)?;
        }
        Command::Embed(args) => {
            let (cfg, cache) = prepare(&args)?;
            commands::cmd_embed(cfg, cache)?;
        }
        Command::Scan(args) => {
            let (cfg, cache) = prepare(&args)?;
            let (_, optimum) = commands::cmd_scan(cfg, cache)?;
            println!("{}", serde_json::to_string(&optimum).map_err(mstates_core::Error::from)?);
        }
        Command::States(args) => {
            let (cfg, cache) = prepare(&args)?;
            let out = commands::cmd_states(cfg, cache)?;
            println!("{}", serde_json::to_string(&out.dynamics).map_err(mstates_core::Error::from)?);
        }
        Command::Classify(args) => {
            let (cfg, _) = prepare(&args.common)?;
            let model_dir = args.model.ok_or_else(|| CliError::usage("--model is required"))?;
            let new_prices = args
                .new_prices
                .or_else(|| cfg.prices.clone())
                .ok_or_else(|| CliError::usage("--new-prices is required"))?;
            let req = ClassifyRequest {
                model_dir,
                new_prices,
                epoch_len: args.common.epoch_len,
                epsilon: args.common.epsilon,
                write_output: args.common.out.is_some(),
            };
            let result = commands::cmd_classify(cfg, &req)?;
            println!("{}", serde_json::to_string(&result).map_err(mstates_core::Error::from)?);
        }
        Command::Synth(args) => {
            let req = synth_request(args)?;
            commands::cmd_synth(&req)?;
        }
    }
    Ok(())
}

fn synth_request(args: SynthArgs) -> CliResult<SynthRequest> {
    let mut file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let n_stocks = pick(args.n_stocks, &mut file, "n_stocks")?.unwrap_or(50);
    let correlations = match pick::<String>(args.correlations, &mut file, "correlations")? {
        Some(s) => parse_epsilon_grid(&s).map_err(|_| CliError::usage(format!("bad correlations {s:?}")))?,
        None => vec![0.15, 0.35, 0.55, 0.75],
    };
    let days: Vec<usize> = match pick::<String>(args.days, &mut file, "days")? {
        Some(s) => s
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| CliError::usage(format!("bad days {s:?}"))))
            .collect::<CliResult<_>>()?,
        None => vec![400],
    };
    let days = match days.len() {
        1 => vec![days[0]; correlations.len()],
        n if n == correlations.len() => days,
        _ => return Err(CliError::usage("days needs one value or one per regime")),
    };
    let spec = RegimeSpec {
        n_stocks,
        regimes: correlations
            .iter()
            .zip(&days)
            .map(|(&c, &d)| Regime {
                duration_days: d,
                base_correlation: c,
            })
            .collect(),
        noise_sigma: pick(args.noise_sigma, &mut file, "noise_sigma")?.unwrap_or(0.01),
        seed: pick(args.seed, &mut file, "seed")?.unwrap_or(0),
    };
    let out = pick_path(args.out, &mut file, "out").unwrap_or_else(|| PathBuf::from("."));
    file.finish()?;
    Ok(SynthRequest { spec, out })
}
