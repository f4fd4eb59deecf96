//! Executes one configured experiment and writes its run directory.
//!
//! Every run directory holds `config.txt` (re-runnable with `--config`),
//! `metadata.json`, the task report `report.json`, and, for training tasks, the
//! metrics stream `metrics.{csv,jsonl}` (plus `metrics.timing.csv`) and
//! `checkpoint.json`. Plot data files are written last.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use gln::context::ImageGeometry;
use gln::data::{load_mnist, MnistSplit};
use gln::tasks::verify::{oracle_suite, CheckOutcome};
use gln::tasks::{
    load_density_data, run_density, run_gaussian, run_mnist_classify, run_spiral, run_xor,
    MetricsWriter,
};

use crate::config::{ExperimentConfig, Task};
use crate::error::CliError;
use crate::plotdata;

pub const CONFIG_FILE: &str = "config.txt";
pub const METADATA_FILE: &str = "metadata.json";
pub const REPORT_FILE: &str = "report.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const FIT_FILE: &str = "fit.json";
pub const METRICS_STEM: &str = "metrics";

/// Provenance record stored next to every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub experiment: String,
    pub library_version: String,
    pub seed: u64,
    /// The configuration, verbatim, in the flat text form.
    pub config: String,
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::output(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::output(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, value).map_err(|e| CliError::output(path, e.into()))?;
    w.flush().map_err(|e| CliError::output(path, e))
}

fn write_checkpoint(
    cfg: &ExperimentConfig,
    json: impl FnOnce() -> gln::Result<String>,
) -> Result<(), CliError> {
    if !cfg.checkpoint {
        return Ok(());
    }
    let text = json().map_err(CliError::from_run)?;
    write_text(&cfg.output_dir.join(CHECKPOINT_FILE), &text)
}

/// Runs the experiment and returns the lines of its summary.
pub fn execute(cfg: &ExperimentConfig) -> Result<Vec<String>, CliError> {
    // Datasets are read before anything is written, so a bad path leaves no partial run.
    let mut images = None;
    let mut binary = None;
    match &cfg.task {
        Task::MnistClassify(c) => {
            let train = load_mnist(&c.data_dir, MnistSplit::Train).map_err(CliError::Dataset)?;
            let test = load_mnist(&c.data_dir, MnistSplit::Test).map_err(CliError::Dataset)?;
            images = Some((train, test));
        }
        Task::MnistDensity(c) => binary = Some(load_density_data(c).map_err(CliError::Dataset)?),
        _ => {}
    }

    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    let text = cfg.to_text();
    write_text(&dir.join(CONFIG_FILE), &text)?;
    write_json(
        &dir.join(METADATA_FILE),
        &Metadata {
            experiment: cfg.task.name().into(),
            library_version: gln::VERSION.into(),
            seed: cfg.task.seed(),
            config: text,
        },
    )?;

    let metrics = || MetricsWriter::create(dir, METRICS_STEM).map_err(CliError::from_run);
    let mut summary = Vec::new();
    match &cfg.task {
        Task::Gaussian(c) => {
            let mut sink = metrics()?;
            let run = run_gaussian(c, Some(&mut sink)).map_err(CliError::from_run)?;
            sink.flush().map_err(CliError::from_run)?;
            write_json(&dir.join(REPORT_FILE), &run.report)?;
            write_json(&dir.join(FIT_FILE), &run.fit)?;
            write_checkpoint(cfg, || run.network.to_json())?;
            summary.push(format!("top-neuron MAE {:.6}", run.report.top_mae));
            summary.push(format!(
                "max first-layer cell deviation {:.6}",
                run.report.max_cell_deviation()
            ));
            if let Some(s) = &run.report.switching {
                summary.push(format!(
                    "switching loss {:.3} nats, best neuron {:.3}, leading layer {}",
                    s.loss_nats,
                    s.best_neuron_loss(),
                    s.leader_layer
                ));
            }
        }
        Task::Xor(c) => {
            let mut sink = metrics()?;
            let run = run_xor(c, Some(&mut sink)).map_err(CliError::from_run)?;
            sink.flush().map_err(CliError::from_run)?;
            write_json(&dir.join(REPORT_FILE), &run.report)?;
            write_checkpoint(cfg, || run.network.to_json())?;
            for (l, d) in run.report.layer_max_deviation.iter().enumerate() {
                summary.push(format!("layer {} max |p - 1/2| {:.6}", l + 1, d));
            }
        }
        Task::Spiral(c) => {
            let mut sink = metrics()?;
            let mut run = run_spiral(c, Some(&mut sink)).map_err(CliError::from_run)?;
            sink.flush().map_err(CliError::from_run)?;
            write_json(&dir.join(REPORT_FILE), &run.report)?;
            write_checkpoint(cfg, || run.classifier.to_json())?;
            let r = &run.report;
            summary.push(format!(
                "train accuracy {:.4}, fresh-sample accuracy {:.4}",
                r.train_accuracy, r.eval_accuracy
            ));
            let layers: Vec<String> = r.layer_accuracy.iter().map(|a| format!("{a:.4}")).collect();
            summary.push(format!("per-layer accuracy {}", layers.join(" ")));
            plotdata::spiral(dir, c, &mut run.classifier)?;
        }
        Task::MnistClassify(c) => {
            let (train, test) = images.take().expect("loaded above");
            let mut sink = metrics()?;
            let run = run_mnist_classify(c, &train, &test, Some(&mut sink))
                .map_err(CliError::from_run)?;
            sink.flush().map_err(CliError::from_run)?;
            write_json(&dir.join(REPORT_FILE), &run.report)?;
            write_checkpoint(cfg, || run.classifier.to_json())?;
            let r = &run.report;
            summary.push(format!(
                "online train accuracy {:.4}",
                r.train_online_accuracy
            ));
            summary.push(format!(
                "test accuracy {:.4}, test loss {:.4} nats",
                r.test_accuracy, r.test_loss_nats
            ));
        }
        Task::MnistDensity(c) => {
            let (train, test) = binary.take().expect("loaded above");
            let mut sink = metrics()?;
            let run = run_density(c, ImageGeometry::MNIST, &train, &test, Some(&mut sink))
                .map_err(CliError::from_run)?;
            sink.flush().map_err(CliError::from_run)?;
            write_json(&dir.join(REPORT_FILE), &run.report)?;
            if cfg.checkpoint {
                write_json(&dir.join(CHECKPOINT_FILE), &run.model)?;
            }
            let r = &run.report;
            summary.push(format!(
                "train loss {:.3} nats/image (ZR baseline {:.3})",
                r.train_loss_nats, r.baseline_train_loss_nats
            ));
            summary.push(format!(
                "test loss {:.3} nats/image (ZR baseline {:.3})",
                r.test_loss_nats, r.baseline_test_loss_nats
            ));
        }
        Task::Verify(c) => {
            let outcomes = oracle_suite(c.seed).map_err(CliError::from_run)?;
            write_json(&dir.join(REPORT_FILE), &outcomes)?;
            summary.extend(outcomes.iter().map(check_line));
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            if failed > 0 {
                for line in &summary {
                    println!("{line}");
                }
                return Err(CliError::ChecksFailed {
                    failed,
                    total: outcomes.len(),
                });
            }
        }
    }
    if !matches!(cfg.task, Task::Spiral(_)) {
        plotdata::emit(dir)?;
    }
    Ok(summary)
}

pub fn check_line(o: &CheckOutcome) -> String {
    format!(
        "{} {}: {:.3e} (threshold {:.3e})",
        if o.passed { "PASS" } else { "FAIL" },
        o.name,
        o.measured,
        o.threshold
    )
}

/// Reads a run's metadata and configuration back.
pub fn load_run(dir: &Path) -> Result<ExperimentConfig, CliError> {
    let path = dir.join(METADATA_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Artifact {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let meta: Metadata = serde_json::from_str(&text).map_err(|e| CliError::Artifact {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let mut cfg = ExperimentConfig::from_text(&meta.config)?;
    cfg.output_dir = dir.to_path_buf();
    Ok(cfg)
}

pub fn read_artifact<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let artifact = |reason: String| CliError::Artifact {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|e| artifact(e.to_string()))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| artifact(e.to_string()))
}
