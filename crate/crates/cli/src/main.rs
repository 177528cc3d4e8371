use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nomacsk::config::SimConfig;
use nomacsk::harness;
use nomacsk::policy::parse_policy_list;
use nomacsk::sac::{load_agent, SacAgent};
use nomacsk::Error;

#[derive(Parser)]
#[command(name = "nomacsk", version, about = "Two-user NOMA-CSK visible-light link experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with dotted-key overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed; overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Agent checkpoint, needed when the policy list contains `sac`.
    #[arg(long)]
    agent: Option<PathBuf>,
    /// Comma-separated subset of sac,grpa,ngdpa,tdma.
    #[arg(long)]
    policy: Option<String>,
    /// Publication resolution: r step 0.001 and 500 seeds.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train the allocation agent.
    Train {
        #[command(flatten)]
        common: Common,
        /// Checkpoint path (default: the output path with a `.ckpt` extension).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Suppress per-episode progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Sweep the channel ratio with gains drawn from the training bounds.
    SweepR(SweepArgs),
    /// BER against SNR at a fixed stronger-user gain.
    SnrBer(SweepArgs),
    /// The ratio sweep on widened channel bounds, without retraining.
    Generalize(SweepArgs),
    /// Illumination metrics with and without communication.
    Illum {
        #[command(flatten)]
        common: Common,
        /// Take the NOMA allocation from this agent at r = 0.5.
        #[arg(long)]
        agent: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<SimConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => SimConfig::load(path)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

fn sweep_config(args: &SweepArgs) -> Result<(SimConfig, Option<SacAgent>), Error> {
    let mut cfg = load_config(&args.common)?;
    if args.paper_scale {
        cfg.experiment = cfg.experiment.paper_scale();
    }
    if let Some(list) = &args.policy {
        cfg.experiment.policies = parse_policy_list(list)?;
    }
    let agent = args.agent.as_deref().map(load_agent).transpose()?;
    Ok((cfg, agent))
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, Error> {
    match workers {
        None => Ok(job()),
        Some(0) => Err(Error::Config("--workers must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

fn report(out: &Path) {
    eprintln!("wrote {}", out.display());
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train {
            common,
            checkpoint,
            quiet,
        } => {
            let cfg = load_config(&common)?;
            let ckpt = checkpoint.unwrap_or_else(|| common.out.with_extension("ckpt"));
            let (trainer, reason) = with_workers(common.workers, || {
                harness::run_train(&cfg, &common.out, &ckpt, |r| {
                    if !quiet && (r.episode % 10 == 0 || r.episode == 1) {
                        eprintln!(
                            "episode {:>4}  return {:>9.3}  steps {:>3}  rolling {:>8.3}",
                            r.episode, r.episode_return, r.steps, r.rolling_avg_return
                        );
                    }
                })
            })??;
            eprintln!(
                "stopped ({reason:?}) after {} episodes, rolling average {:.3}",
                trainer.episodes_done,
                trainer.rolling_average()
            );
            report(&common.out);
            eprintln!("wrote {}", ckpt.display());
        }
        Command::SweepR(args) => {
            let (cfg, agent) = sweep_config(&args)?;
            with_workers(args.common.workers, || harness::run_sweep_r(&cfg, agent.as_ref(), &args.common.out))??;
            report(&args.common.out);
        }
        Command::SnrBer(args) => {
            let (cfg, agent) = sweep_config(&args)?;
            with_workers(args.common.workers, || harness::run_snr_ber(&cfg, agent.as_ref(), &args.common.out))??;
            report(&args.common.out);
        }
        Command::Generalize(args) => {
            let (cfg, agent) = sweep_config(&args)?;
            let out = with_workers(args.common.workers, || {
                harness::run_generalization(&cfg, agent.as_ref(), &args.common.out)
            })??;
            eprintln!(
                "bounds [{:e}, {:e}], training calls during evaluation: {}",
                out.bounds.h_min, out.bounds.h_max, out.training_calls
            );
            report(&args.common.out);
        }
        Command::Illum { common, agent } => {
            let cfg = load_config(&common)?;
            let agent = agent.as_deref().map(load_agent).transpose()?;
            with_workers(common.workers, || harness::run_illumination(&cfg, agent.as_ref(), &common.out))??;
            report(&common.out);
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Format(_) => 2,
        Error::Io { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
