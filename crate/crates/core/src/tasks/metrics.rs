//! Metrics streams.
//!
//! Every record is written twice, as a CSV row and as a JSON line, with the
//! columns `example,segment,loss_nats,accuracy` (`accuracy` empty / `null`
//! when not applicable). These files hold only deterministic quantities so that
//! a rerun with the same seed reproduces them byte for byte; wall-clock time
//! goes to a separate `<stem>.timing.csv` (`example,wall_seconds`).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Number of examples processed when the record was taken.
    pub example: u64,
    pub segment: String,
    pub loss_nats: f64,
    pub accuracy: Option<f64>,
}

pub struct MetricsWriter {
    paths: [PathBuf; 3],
    csv: BufWriter<File>,
    jsonl: BufWriter<File>,
    timing: BufWriter<File>,
    started: Instant,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

impl MetricsWriter {
    /// Creates `<dir>/<stem>.csv`, `<dir>/<stem>.jsonl` and `<dir>/<stem>.timing.csv`.
    pub fn create(dir: &Path, stem: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = [
            dir.join(format!("{stem}.csv")),
            dir.join(format!("{stem}.jsonl")),
            dir.join(format!("{stem}.timing.csv")),
        ];
        let mut csv = create(&paths[0])?;
        let jsonl = create(&paths[1])?;
        let mut timing = create(&paths[2])?;
        writeln!(csv, "example,segment,loss_nats,accuracy").map_err(|e| Error::io(&paths[0], e))?;
        writeln!(timing, "example,wall_seconds").map_err(|e| Error::io(&paths[2], e))?;
        Ok(MetricsWriter {
            paths,
            csv,
            jsonl,
            timing,
            started: Instant::now(),
        })
    }

    /// Deterministic output files (CSV, JSON lines).
    pub fn paths(&self) -> [&Path; 2] {
        [&self.paths[0], &self.paths[1]]
    }

    pub fn write(&mut self, r: &MetricRecord) -> Result<()> {
        let acc = r.accuracy.map_or(String::new(), |a| a.to_string());
        writeln!(
            self.csv,
            "{},{},{},{}",
            r.example, r.segment, r.loss_nats, acc
        )
        .map_err(|e| Error::io(&self.paths[0], e))?;
        serde_json::to_writer(&mut self.jsonl, r)?;
        writeln!(self.jsonl).map_err(|e| Error::io(&self.paths[1], e))?;
        writeln!(
            self.timing,
            "{},{:.3}",
            r.example,
            self.started.elapsed().as_secs_f64()
        )
        .map_err(|e| Error::io(&self.paths[2], e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.csv.flush().map_err(|e| Error::io(&self.paths[0], e))?;
        self.jsonl
            .flush()
            .map_err(|e| Error::io(&self.paths[1], e))?;
        self.timing
            .flush()
            .map_err(|e| Error::io(&self.paths[2], e))
    }
}

impl Drop for MetricsWriter {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

/// Accumulates loss and accuracy over a block of examples.
#[derive(Debug, Clone, Default)]
pub struct BlockStats {
    loss: f64,
    correct: u64,
    count: u64,
}

impl BlockStats {
    pub fn add(&mut self, loss: f64, correct: Option<bool>) {
        self.loss += loss;
        self.correct += u64::from(correct == Some(true));
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean_loss(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.loss / self.count as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.correct as f64 / self.count as f64
        }
    }

    /// Record for this block, then resets it.
    pub fn take(&mut self, example: u64, segment: &str, with_accuracy: bool) -> MetricRecord {
        let r = MetricRecord {
            example,
            segment: segment.to_owned(),
            loss_nats: self.mean_loss(),
            accuracy: with_accuracy.then(|| self.accuracy()),
        };
        *self = BlockStats::default();
        r
    }
}

/// Optional sink: records go nowhere when no writer is attached.
pub(crate) fn emit(sink: &mut Option<&mut MetricsWriter>, r: MetricRecord) -> Result<()> {
    match sink {
        Some(w) => w.write(&r),
        None => Ok(()),
    }
}
