//! Plain-text columnar files for external plotting, derived from a finished
//! run directory. Every file is comma-separated with a header row.
//!
//! | experiment | file | columns |
//! |---|---|---|
//! | gaussian | `fit.csv`, `snapshot_<t>.csv` | `z, f, p_<layer>_<k>...` |
//! | gaussian (switching) | `switching.csv` | `t, u_<layer>_<k>...` |
//! | gaussian (switching) | `leader.csv` | `t, layer` |
//! | xor | `xor_grid.csv` | `x, y, p` |
//! | spiral | `spiral_grid.csv` | `x, y, true, pred, vote_<layer>...` |
//! | mnist-density | `density_curve.csv` | `example, mean_loss_nats` |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gln::tasks::classify::decision_grid;
use gln::tasks::density::DensityReport;
use gln::tasks::synthetic::{GaussianReport, GridFit, XorReport};
use gln::tasks::{OneVsAllClassifier, SpiralConfig};

use crate::config::Task;
use crate::error::CliError;
use crate::run::{load_run, read_artifact, write_text, CHECKPOINT_FILE, FIT_FILE, REPORT_FILE};

/// Decision-grid half-width, relative to the outer radius of the spiral.
const SPIRAL_MARGIN: f64 = 1.25;

fn neuron_names(prefix: &str, widths: &[usize]) -> Vec<String> {
    widths
        .iter()
        .enumerate()
        .flat_map(|(l, &w)| (0..w).map(move |k| format!("{prefix}_{}_{}", l + 1, k + 1)))
        .collect()
}

fn fit_table(fit: &GridFit) -> String {
    let widths: Vec<usize> = fit.neurons.iter().map(Vec::len).collect();
    let mut out = format!("z,f,{}\n", neuron_names("p", &widths).join(","));
    for (j, (z, f)) in fit.z.iter().zip(&fit.target).enumerate() {
        let _ = write!(out, "{z},{f}");
        for p in fit.neurons.iter().flatten() {
            let _ = write!(out, ",{}", p[j]);
        }
        out.push('\n');
    }
    out
}

fn gaussian(dir: &Path, widths: &[usize]) -> Result<Vec<PathBuf>, CliError> {
    let report: GaussianReport = read_artifact(&dir.join(REPORT_FILE))?;
    let fit: GridFit = read_artifact(&dir.join(FIT_FILE))?;
    let mut written = vec![dir.join("fit.csv")];
    write_text(&written[0], &fit_table(&fit))?;
    for snap in &report.snapshots {
        let path = dir.join(format!("snapshot_{}.csv", snap.round));
        write_text(&path, &fit_table(&snap.fit))?;
        written.push(path);
    }
    if let Some(s) = &report.switching {
        let mut out = format!("t,{}\n", neuron_names("u", widths).join(","));
        for (t, u) in &s.trajectory {
            let row: Vec<String> = u.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{t},{}", row.join(","));
        }
        let path = dir.join("switching.csv");
        write_text(&path, &out)?;
        written.push(path);

        let mut out = String::from("t,layer\n");
        for (t, layer) in &s.leader_layers {
            let _ = writeln!(out, "{t},{layer}");
        }
        let path = dir.join("leader.csv");
        write_text(&path, &out)?;
        written.push(path);
    }
    Ok(written)
}

fn xor(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let report: XorReport = read_artifact(&dir.join(REPORT_FILE))?;
    let mut out = String::from("x,y,p\n");
    for (x, y, p) in &report.grid {
        let _ = writeln!(out, "{x},{y},{p}");
    }
    let path = dir.join("xor_grid.csv");
    write_text(&path, &out)?;
    Ok(vec![path])
}

/// Decision-boundary grid of a trained spiral classifier.
pub fn spiral(
    dir: &Path,
    cfg: &SpiralConfig,
    clf: &mut OneVsAllClassifier,
) -> Result<Vec<PathBuf>, CliError> {
    let grid =
        decision_grid(clf, cfg, SPIRAL_MARGIN * cfg.spiral.r_max).map_err(CliError::from_run)?;
    let votes: Vec<String> = (1..=cfg.layer_widths.len())
        .map(|l| format!("vote_{l}"))
        .collect();
    let mut out = format!("x,y,true,pred,{}\n", votes.join(","));
    for (x, y, truth, pred, layer_votes) in grid {
        let v: Vec<String> = layer_votes.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{x},{y},{truth},{pred},{}", v.join(","));
    }
    let path = dir.join("spiral_grid.csv");
    write_text(&path, &out)?;
    Ok(vec![path])
}

fn density(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let report: DensityReport = read_artifact(&dir.join(REPORT_FILE))?;
    let mut out = String::from("example,mean_loss_nats\n");
    for (n, loss) in &report.train_curve {
        let _ = writeln!(out, "{n},{loss}");
    }
    let path = dir.join("density_curve.csv");
    write_text(&path, &out)?;
    Ok(vec![path])
}

/// Writes the plot data files of the run in `dir` and returns their paths.
pub fn emit(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let cfg = load_run(dir)?;
    match &cfg.task {
        Task::Gaussian(c) => gaussian(dir, &c.layer_widths),
        Task::Xor(_) => xor(dir),
        Task::Spiral(c) => {
            let path = dir.join(CHECKPOINT_FILE);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Artifact {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            let mut clf = OneVsAllClassifier::from_json(&text).map_err(|e| CliError::Artifact {
                path,
                reason: e.to_string(),
            })?;
            spiral(dir, c, &mut clf)
        }
        Task::MnistDensity(_) => density(dir),
        // The metrics stream is already the plottable record of these runs.
        Task::MnistClassify(_) | Task::Verify(_) => Ok(Vec::new()),
    }
}
