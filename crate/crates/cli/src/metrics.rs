//! CSV outputs. Every file has a header row, UTF-8 text and LF line endings.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use tending_core::bridge::TraceRow;
use tending_core::marl::{EvalReport, UpdateRecord};

use crate::CliError;

pub const METRICS_COLUMNS: [&str; 10] = [
    "step",
    "update",
    "mean_return",
    "deliveries",
    "collisions",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_frac",
    "approx_kl",
];

/// One line of `metrics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub update: u64,
    pub mean_return: f64,
    pub deliveries: f64,
    pub collisions: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
}

impl From<&UpdateRecord> for MetricsRow {
    fn from(r: &UpdateRecord) -> Self {
        Self {
            step: r.env_steps,
            update: r.update,
            mean_return: r.mean_return,
            deliveries: r.deliveries,
            collisions: r.collisions,
            policy_loss: r.stats.policy_loss,
            value_loss: r.stats.value_loss,
            entropy: r.stats.entropy,
            clip_frac: r.stats.clip_frac,
            approx_kl: r.stats.approx_kl,
        }
    }
}

/// One line of `eval.csv`: a periodic evaluation during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub step: u64,
    pub update: u64,
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_deliveries: f64,
    pub mean_collisions: f64,
}

impl EvalRow {
    pub fn new(step: u64, update: u64, report: &EvalReport) -> Self {
        Self {
            step,
            update,
            episodes: report.episodes(),
            mean_return: report.mean_return,
            std_return: report.std_return,
            mean_deliveries: report.mean_deliveries,
            mean_collisions: report.mean_collisions,
        }
    }
}

/// One line of an episode listing written by `eval`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCsvRow {
    pub episode: usize,
    pub seed: u64,
    pub total_return: f64,
    pub deliveries: u64,
    pub collisions: u64,
}

/// One line of `bridge.csv`. An unknown pose age is an empty field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeCsvRow {
    pub tick: u64,
    pub robot_id: u8,
    pub track_err_m: f64,
    pub pose_age_ticks: Option<f64>,
    pub mirrored_deliveries: u32,
}

impl From<&TraceRow> for BridgeCsvRow {
    fn from(r: &TraceRow) -> Self {
        Self {
            tick: r.tick,
            robot_id: r.robot_id,
            track_err_m: r.track_err_m,
            pose_age_ticks: r.pose_age_ticks,
            mirrored_deliveries: r.mirrored_deliveries,
        }
    }
}

/// Incremental CSV writer that always emits the header, even with no rows.
pub struct CsvSink<W: std::io::Write> {
    inner: csv::Writer<W>,
}

impl<W: std::io::Write> CsvSink<W> {
    pub fn new(out: W, header: &[&str]) -> csv::Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .has_headers(false)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        inner.write_record(header)?;
        Ok(Self { inner })
    }

    pub fn push<R: Serialize>(&mut self, row: &R) -> csv::Result<()> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W, CliError> {
        self.inner.into_inner().map_err(|e| CliError::Failed(e.to_string()))
    }
}

pub fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> Result<(), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(CliError::io(path))?;
    let mut sink = CsvSink::new(std::io::BufWriter::new(file), header).map_err(csv_err)?;
    for r in rows {
        sink.push(r).map_err(csv_err)?;
    }
    Ok(())
}

pub fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>, CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    rd.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

pub const EVAL_COLUMNS: [&str; 7] = [
    "step",
    "update",
    "episodes",
    "mean_return",
    "std_return",
    "mean_deliveries",
    "mean_collisions",
];

pub const EPISODE_COLUMNS: [&str; 5] = ["episode", "seed", "total_return", "deliveries", "collisions"];

pub const BRIDGE_COLUMNS: [&str; 5] = [
    "tick",
    "robot_id",
    "track_err_m",
    "pose_age_ticks",
    "mirrored_deliveries",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: u64) -> MetricsRow {
        MetricsRow {
            step: 2048 * i,
            update: i,
            mean_return: -1.0 / 3.0 * i as f64,
            deliveries: 0.1 + i as f64,
            collisions: 1e-300,
            policy_loss: -0.0,
            value_loss: 123456.789,
            entropy: 2.837877,
            clip_frac: 0.0,
            approx_kl: 5e-7,
        }
    }

    #[test]
    fn header_only_when_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_csv::<MetricsRow>(&p, &METRICS_COLUMNS, &[]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "step,update,mean_return,deliveries,collisions,policy_loss,value_loss,entropy,clip_frac,approx_kl\n"
        );
    }

    #[test]
    fn parse_back_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows: Vec<MetricsRow> = (0..5).map(row).collect();
        write_csv(&p, &METRICS_COLUMNS, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(!text.contains('\r'));
        let back: Vec<MetricsRow> = read_csv(&p).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            assert_eq!(a, b);
            assert_eq!(a.policy_loss.to_bits(), b.policy_loss.to_bits());
        }
    }

    #[test]
    fn bridge_rows_leave_unknown_age_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        let rows = [BridgeCsvRow {
            tick: 0,
            robot_id: 2,
            track_err_m: 0.5,
            pose_age_ticks: None,
            mirrored_deliveries: 0,
        }];
        write_csv(&p, &BRIDGE_COLUMNS, &rows).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "tick,robot_id,track_err_m,pose_age_ticks,mirrored_deliveries\n0,2,0.5,,0\n"
        );
        assert_eq!(read_csv::<BridgeCsvRow>(&p).unwrap(), rows);
    }
}
