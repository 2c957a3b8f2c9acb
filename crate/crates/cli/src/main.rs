use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tending_cli::commands::{self, TransportKind};
use tending_cli::{CliError, RunConfig};
use tending_core::bridge::ChannelKind;

#[derive(Parser)]
#[command(
    name = "tending",
    version,
    about = "Multi-robot machine tending: training, evaluation and bridge runs"
)]
struct Cli {
    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Channel {
    Central,
    Gossip,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Inprocess,
    Udp,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write metrics and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint and write one CSV row per episode.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Act with the action means instead of sampling.
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mirror the simulation onto virtual robots.
    Bridge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Robot time in seconds.
        #[arg(long)]
        duration: f64,
        #[arg(long, value_enum)]
        channel: Option<Channel>,
        #[arg(long, value_enum, default_value = "inprocess")]
        transport: TransportArg,
        /// Station UDP port (0 picks a free one).
        #[arg(long, default_value_t = 0)]
        port: u16,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot every run below a directory as a three-panel SVG.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        draws: usize,
    },
    /// Train both variants over several seeds and plot them together.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        /// Overrides the configured step budget.
        #[arg(long)]
        steps: Option<u64>,
    },
}

fn load(path: &std::path::Path, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Train { config } => {
            let cfg = load(&config, cli.seed)?;
            let outcome = commands::train(&cfg)?;
            if let Some(last) = outcome.records.last() {
                println!(
                    "updates={} env_steps={} return={:.4} deliveries={:.4} collisions={:.4}",
                    last.update, last.env_steps, last.mean_return, last.deliveries, last.collisions
                );
            }
            if let Some(e) = &outcome.final_eval {
                println!(
                    "eval episodes={} return={:.4}±{:.4} deliveries={:.4} collisions={:.4}",
                    e.episodes(),
                    e.mean_return,
                    e.std_return,
                    e.mean_deliveries,
                    e.mean_collisions
                );
            }
            if let Some(p) = outcome.last_checkpoint() {
                println!("checkpoint: {}", p.display());
            }
        }
        Command::Eval {
            config,
            checkpoint,
            episodes,
            deterministic,
            out,
        } => {
            let cfg = load(&config, cli.seed)?;
            let (r, path) = commands::eval(&cfg, &checkpoint, episodes, deterministic, out.as_deref())?;
            println!(
                "episodes={} return={:.4}±{:.4} deliveries={:.4} collisions={:.4}",
                r.episodes(),
                r.mean_return,
                r.std_return,
                r.mean_deliveries,
                r.mean_collisions
            );
            println!("episodes csv: {}", path.display());
        }
        Command::Bridge {
            config,
            checkpoint,
            duration,
            channel,
            transport,
            port,
            out,
        } => {
            let cfg = load(&config, cli.seed)?;
            let channel = channel.map(|c| match c {
                Channel::Central => ChannelKind::Central,
                Channel::Gossip => ChannelKind::Gossip,
            });
            let transport = match transport {
                TransportArg::Inprocess => TransportKind::InProcess,
                TransportArg::Udp => TransportKind::Udp { port },
            };
            let (r, path) = commands::bridge(&cfg, &checkpoint, duration, channel, transport, out.as_deref())?;
            let m = &r.metrics;
            for (i, robot) in m.robots.iter().enumerate() {
                println!(
                    "robot {i}: mean_track_err_m={:.4} max_track_err_m={:.4} mirrored_deliveries={}",
                    robot.mean_track_err_m, robot.max_track_err_m, robot.mirrored_deliveries
                );
            }
            let age = |a: Option<f64>| a.map_or("n/a".to_owned(), |a| format!("{a:.3}"));
            println!(
                "sim_steps={} sim_deliveries={} fixes={} station_age={} neighbor_age={}",
                m.sim_steps,
                m.sim_deliveries,
                m.fixes,
                age(m.mean_station_age),
                age(m.mean_neighbor_age)
            );
            println!("bridge csv: {}", path.display());
        }
        Command::Plot { metrics, out } => {
            let n = commands::plot(&metrics, &out)?;
            println!("{n} series -> {}", out.display());
        }
        Command::Gradcheck { draws } => {
            let report = commands::gradcheck(draws, cli.seed.unwrap_or(0))?;
            for a in &report.architectures {
                println!(
                    "{:<10} draws={} scalars={} max_rel_err={:.3e}",
                    a.name, a.draws, a.scalars_checked, a.max_rel_error
                );
            }
            println!("max relative error: {:.3e}", report.max_rel_error());
            return Ok(report.passed());
        }
        Command::Compare {
            config,
            out,
            seeds,
            steps,
        } => {
            let mut cfg = load(&config, cli.seed)?;
            if let Some(s) = steps {
                cfg.ppo.total_env_steps = s;
            }
            let cmp = commands::compare(&cfg, &out, seeds)?;
            print!("{}", cmp.report());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
