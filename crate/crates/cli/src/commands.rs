//! Subcommand implementations. Each takes an already loaded [`RunConfig`] and writes its
//! outputs below `output_dir` unless given an explicit path.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use tending_core::bridge::{run_bridge, BridgeReport, ChannelKind, InProcessTransport};
use tending_core::marl::{BundlePolicy, EvalReport, Trainer, UpdateRecord, Variant};
use tending_core::nn::gradcheck::{self, GradcheckReport};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::metrics::{
    read_csv, write_csv, BridgeCsvRow, CsvSink, EpisodeCsvRow, EvalRow, MetricsRow, BRIDGE_COLUMNS, EPISODE_COLUMNS,
    EVAL_COLUMNS, METRICS_COLUMNS,
};
use crate::udp::UdpTransport;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub output_dir: PathBuf,
    pub records: Vec<UpdateRecord>,
    pub checkpoints: Vec<PathBuf>,
    pub final_eval: Option<EvalReport>,
}

impl TrainOutcome {
    pub fn last_checkpoint(&self) -> Option<&Path> {
        self.checkpoints.last().map(PathBuf::as_path)
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn csv_sink(path: &Path, header: &[&str]) -> Result<CsvSink<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    CsvSink::new(BufWriter::new(file), header).map_err(|source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn push<R: serde::Serialize>(sink: &mut CsvSink<BufWriter<File>>, path: &Path, row: &R) -> Result<(), CliError> {
    sink.push(row).map_err(|source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn checkpoint_name(update: u64) -> String {
    format!("update_{update:06}.abmt")
}

/// Trains to the configured budget. Writes `config.json`, `metrics.csv`, `eval.csv` and
/// `checkpoints/update_NNNNNN.abmt` every `checkpoint_interval` updates and after the last one.
/// An evaluation row is written every `eval_interval` updates and after the last update.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    let out = cfg.output_dir.clone();
    let ckpt_dir = out.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let cfg_path = out.join("config.json");
    std::fs::write(&cfg_path, cfg.to_json()).map_err(CliError::io(&cfg_path))?;
    let metrics_path = out.join("metrics.csv");
    let eval_path = out.join("eval.csv");
    let mut metrics = csv_sink(&metrics_path, &METRICS_COLUMNS)?;
    let mut evals = csv_sink(&eval_path, &EVAL_COLUMNS)?;

    let mut trainer = Trainer::new(cfg.build_scenario()?, cfg.ppo.clone(), cfg.variant, cfg.net, cfg.seed)?;
    let mut outcome = TrainOutcome {
        output_dir: out,
        records: Vec::new(),
        checkpoints: Vec::new(),
        final_eval: None,
    };
    let every = |interval: u64, update: u64| interval > 0 && update.is_multiple_of(interval);
    while !trainer.is_done() {
        let rec = trainer.update()?;
        push(&mut metrics, &metrics_path, &MetricsRow::from(&rec))?;
        let last = trainer.is_done();
        if cfg.ppo.eval_episodes > 0 && (every(cfg.ppo.eval_interval, rec.update) || last) {
            let report = trainer.evaluate(cfg.ppo.eval_episodes, cfg.seed, true)?;
            push(
                &mut evals,
                &eval_path,
                &EvalRow::new(rec.env_steps, rec.update, &report),
            )?;
            if last {
                outcome.final_eval = Some(report);
            }
        }
        if every(cfg.ppo.checkpoint_interval, rec.update) || last {
            let path = outcome.output_dir.join("checkpoints").join(checkpoint_name(rec.update));
            checkpoint::save(&path, trainer.policy(), &cfg.scenario)?;
            outcome.checkpoints.push(path);
        }
        outcome.records.push(rec);
    }
    Ok(outcome)
}

/// Evaluates a checkpoint and writes one CSV row per episode to `out`
/// (default `output_dir/eval_episodes.csv`).
pub fn eval(
    cfg: &RunConfig,
    checkpoint_path: &Path,
    episodes: usize,
    deterministic: bool,
    out: Option<&Path>,
) -> Result<(EvalReport, PathBuf), CliError> {
    let scenario = cfg.build_scenario()?;
    let bundle = checkpoint::load(checkpoint_path, &scenario)?;
    let report =
        tending_core::marl::evaluate(&mut BundlePolicy(&bundle), &scenario, episodes, cfg.seed, deterministic)?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => cfg.output_dir.join("eval_episodes.csv"),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let rows: Vec<EpisodeCsvRow> = report
        .rows
        .iter()
        .enumerate()
        .map(|(episode, r)| EpisodeCsvRow {
            episode,
            seed: r.seed,
            total_return: r.total_return,
            deliveries: r.deliveries,
            collisions: r.collisions,
        })
        .collect();
    write_csv(&path, &EPISODE_COLUMNS, &rows)?;
    Ok((report, path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    InProcess,
    Udp { port: u16 },
}

/// Number of robot ticks covering `seconds` of robot time.
pub fn duration_ticks(cfg: &RunConfig, seconds: f64) -> Result<u64, CliError> {
    if !(seconds > 0.0 && seconds.is_finite()) {
        return Err(CliError::Usage(format!(
            "--duration: expected a positive number of seconds, got {seconds}"
        )));
    }
    Ok((seconds / cfg.bridge.drive.dt).round().max(1.0) as u64)
}

/// Runs the bridge for `seconds` of robot time and writes `out` (default `output_dir/bridge.csv`).
pub fn bridge(
    cfg: &RunConfig,
    checkpoint_path: &Path,
    seconds: f64,
    channel: Option<ChannelKind>,
    transport: TransportKind,
    out: Option<&Path>,
) -> Result<(BridgeReport, PathBuf), CliError> {
    let scenario = cfg.build_scenario()?;
    let bundle = checkpoint::load(checkpoint_path, &scenario)?;
    let ticks = duration_ticks(cfg, seconds)?;
    let mut bcfg = cfg.bridge;
    if let Some(kind) = channel {
        bcfg.channel.kind = kind;
    }
    let mut policy = BundlePolicy(&bundle);
    let report = match transport {
        TransportKind::InProcess => run_bridge(
            &scenario,
            &mut policy,
            &bcfg,
            &mut InProcessTransport::new(),
            ticks,
            cfg.seed,
        )?,
        TransportKind::Udp { port } => {
            let mut udp = UdpTransport::bind(port, scenario.n_agents())
                .map_err(|e| CliError::Failed(format!("udp bind: {e}")))?;
            run_bridge(&scenario, &mut policy, &bcfg, &mut udp, ticks, cfg.seed)?
        }
    };
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => cfg.output_dir.join("bridge.csv"),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let rows: Vec<BridgeCsvRow> = report.trace.iter().map(BridgeCsvRow::from).collect();
    write_csv(&path, &BRIDGE_COLUMNS, &rows)?;
    Ok((report, path))
}

pub fn plot(metrics_dir: &Path, out: &Path) -> Result<usize, CliError> {
    let (series, svg) = crate::plot::plot_dir(metrics_dir)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    std::fs::write(out, svg).map_err(CliError::io(out))?;
    Ok(series.len())
}

pub fn gradcheck(draws: usize, seed: u64) -> Result<GradcheckReport, CliError> {
    Ok(gradcheck::run(draws, seed)?)
}

/// Final evaluation of one variant, averaged over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantSummary {
    pub variant: Variant,
    pub seeds: usize,
    pub mean_return: f64,
    pub mean_deliveries: f64,
    pub mean_collisions: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub summaries: Vec<VariantSummary>,
    pub plot: PathBuf,
}

impl Comparison {
    fn get(&self, v: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == v)
    }

    /// Whether the attention variant has higher return, more deliveries and fewer collisions.
    pub fn ordering(&self) -> Option<[bool; 3]> {
        let (ab, flat) = (self.get(Variant::Attention)?, self.get(Variant::FlatMlp)?);
        Some([
            ab.mean_return > flat.mean_return,
            ab.mean_deliveries > flat.mean_deliveries,
            ab.mean_collisions < flat.mean_collisions,
        ])
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        for v in &self.summaries {
            let _ = writeln!(
                s,
                "{:<9} seeds={} return={:.4} deliveries={:.4} collisions={:.4}",
                v.variant.as_str(),
                v.seeds,
                v.mean_return,
                v.mean_deliveries,
                v.mean_collisions
            );
        }
        if let Some(ord) = self.ordering() {
            let word = |b: bool| if b { "yes" } else { "no" };
            let _ = writeln!(
                s,
                "ab-mappo higher return: {}; more deliveries: {}; fewer collisions: {}",
                word(ord[0]),
                word(ord[1]),
                word(ord[2])
            );
        }
        let _ = writeln!(s, "plot: {}", self.plot.display());
        s
    }
}

/// Trains both variants for `seeds` seeds each under `dir/<variant>/seed_<k>` and plots them to
/// `dir/comparison.svg`. Seed `k` uses `cfg.seed + k`.
pub fn compare(cfg: &RunConfig, dir: &Path, seeds: usize) -> Result<Comparison, CliError> {
    if seeds == 0 {
        return Err(CliError::Usage("--seeds: must be at least 1".into()));
    }
    let mut summaries = Vec::new();
    for variant in [Variant::Attention, Variant::FlatMlp] {
        let mut acc = [0.0; 3];
        for k in 0..seeds {
            let mut run = cfg.clone();
            run.variant = variant;
            run.seed = cfg.seed.wrapping_add(k as u64);
            run.output_dir = dir.join(variant.as_str()).join(format!("seed_{k}"));
            let outcome = train(&run)?;
            let (r, d, c) = match &outcome.final_eval {
                Some(e) => (e.mean_return, e.mean_deliveries, e.mean_collisions),
                None => {
                    let rows: Vec<MetricsRow> = read_csv(&outcome.output_dir.join("metrics.csv"))?;
                    let last = rows.last().ok_or_else(|| CliError::Failed("empty metrics".into()))?;
                    (last.mean_return, last.deliveries, last.collisions)
                }
            };
            acc[0] += r;
            acc[1] += d;
            acc[2] += c;
        }
        let k = seeds as f64;
        summaries.push(VariantSummary {
            variant,
            seeds,
            mean_return: acc[0] / k,
            mean_deliveries: acc[1] / k,
            mean_collisions: acc[2] / k,
        });
    }
    let plot_path = dir.join("comparison.svg");
    plot(dir, &plot_path)?;
    Ok(Comparison {
        summaries,
        plot: plot_path,
    })
}
