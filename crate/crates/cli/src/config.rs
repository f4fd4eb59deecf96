//! Experiment configurations as flat text.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use gln::tasks::{
    GaussianConfig, MnistClassifyConfig, MnistDensityConfig, SpiralConfig, XorConfig,
};

use crate::error::CliError;
use crate::flat::{self, FlatMap};

/// Oracle-suite settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Gaussian(GaussianConfig),
    Xor(XorConfig),
    Spiral(SpiralConfig),
    MnistClassify(MnistClassifyConfig),
    MnistDensity(MnistDensityConfig),
    Verify(VerifyConfig),
}

pub const EXPERIMENTS: [&str; 6] = [
    "gaussian",
    "xor",
    "spiral",
    "mnist-classify",
    "mnist-density",
    "verify",
];

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Gaussian(_) => "gaussian",
            Task::Xor(_) => "xor",
            Task::Spiral(_) => "spiral",
            Task::MnistClassify(_) => "mnist-classify",
            Task::MnistDensity(_) => "mnist-density",
            Task::Verify(_) => "verify",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Task::Gaussian(c) => c.seed,
            Task::Xor(c) => c.seed,
            Task::Spiral(c) => c.seed,
            Task::MnistClassify(c) => c.seed,
            Task::MnistDensity(c) => c.seed,
            Task::Verify(c) => c.seed,
        }
    }

    /// Named preset of an experiment; `None` picks the default preset.
    pub fn preset(experiment: &str, preset: Option<&str>) -> Result<Task, CliError> {
        let unknown = || {
            CliError::Config(format!(
                "unknown preset {:?} for {experiment}",
                preset.unwrap_or_default()
            ))
        };
        let task = match (experiment, preset) {
            ("gaussian", None | Some("six-layer")) => Task::Gaussian(GaussianConfig::six_layer()),
            ("gaussian", Some("two-layer")) => Task::Gaussian(GaussianConfig::two_layer_wide()),
            ("gaussian", Some("switching")) => Task::Gaussian(GaussianConfig::switching()),
            ("xor", None | Some("default")) => Task::Xor(XorConfig::default()),
            ("spiral", None | Some("default")) => Task::Spiral(SpiralConfig::default()),
            ("mnist-classify", None | Some("small")) => {
                Task::MnistClassify(MnistClassifyConfig::small())
            }
            ("mnist-classify", Some("full")) => Task::MnistClassify(MnistClassifyConfig::full()),
            ("mnist-density", None | Some("small")) => {
                Task::MnistDensity(MnistDensityConfig::small())
            }
            ("mnist-density", Some("full")) => Task::MnistDensity(MnistDensityConfig::full()),
            ("verify", None | Some("default")) => Task::Verify(VerifyConfig::default()),
            (e, _) if EXPERIMENTS.contains(&e) => return Err(unknown()),
            (e, _) => return Err(CliError::Config(format!("unknown experiment {e:?}"))),
        };
        Ok(task)
    }

    fn to_value(&self) -> Value {
        let v = match self {
            Task::Gaussian(c) => serde_json::to_value(c),
            Task::Xor(c) => serde_json::to_value(c),
            Task::Spiral(c) => serde_json::to_value(c),
            Task::MnistClassify(c) => serde_json::to_value(c),
            Task::MnistDensity(c) => serde_json::to_value(c),
            Task::Verify(c) => serde_json::to_value(c),
        };
        v.expect("configs serialize to JSON")
    }

    fn from_value(experiment: &str, v: Value) -> Result<Task, CliError> {
        fn de<T: DeserializeOwned>(v: Value) -> Result<T, CliError> {
            serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))
        }
        Ok(match experiment {
            "gaussian" => Task::Gaussian(de(v)?),
            "xor" => Task::Xor(de(v)?),
            "spiral" => Task::Spiral(de(v)?),
            "mnist-classify" => Task::MnistClassify(de(v)?),
            "mnist-density" => Task::MnistDensity(de(v)?),
            "verify" => Task::Verify(de(v)?),
            other => return Err(CliError::Config(format!("unknown experiment {other:?}"))),
        })
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub output_dir: PathBuf,
    /// Write the trained model to the run directory.
    pub checkpoint: bool,
}

const EXPERIMENT: &str = "experiment";
const OUTPUT_DIR: &str = "output_dir";
const CHECKPOINT: &str = "checkpoint";

impl ExperimentConfig {
    pub fn new(task: Task) -> Self {
        ExperimentConfig {
            output_dir: Path::new("runs").join(task.name()),
            task,
            checkpoint: true,
        }
    }

    pub fn to_flat(&self) -> FlatMap {
        let mut map = flat::flatten(&self.task.to_value());
        map.insert(EXPERIMENT.into(), Value::String(self.task.name().into()));
        map.insert(
            OUTPUT_DIR.into(),
            Value::String(self.output_dir.to_string_lossy().into_owned()),
        );
        map.insert(CHECKPOINT.into(), Value::Bool(self.checkpoint));
        map
    }

    pub fn from_flat(map: &FlatMap) -> Result<Self, CliError> {
        let mut map = map.clone();
        let experiment = match map.remove(EXPERIMENT) {
            Some(Value::String(s)) => s,
            Some(v) => {
                return Err(CliError::Config(format!(
                    "experiment must be a name, got {v}"
                )))
            }
            None => return Err(CliError::Config("missing key `experiment`".into())),
        };
        let output_dir = match map.remove(OUTPUT_DIR) {
            Some(Value::String(s)) => PathBuf::from(s),
            Some(v) => {
                return Err(CliError::Config(format!(
                    "output_dir must be a path, got {v}"
                )))
            }
            None => Path::new("runs").join(&experiment),
        };
        let checkpoint = match map.remove(CHECKPOINT) {
            Some(Value::Bool(b)) => b,
            Some(v) => {
                return Err(CliError::Config(format!(
                    "checkpoint must be true or false, got {v}"
                )))
            }
            None => true,
        };
        let task = Task::from_value(&experiment, flat::unflatten(&map)?)?;
        Ok(ExperimentConfig {
            task,
            output_dir,
            checkpoint,
        })
    }

    /// The flat text form, with a leading comment.
    pub fn to_text(&self) -> String {
        format!(
            "# gln {} configuration\n{}",
            self.task.name(),
            flat::render(&self.to_flat())
        )
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        Self::from_flat(&flat::parse(text)?)
    }

    /// Applies `key=value` overrides; the result is re-validated as a whole.
    pub fn with_overrides(&self, overrides: &[(String, Value)]) -> Result<Self, CliError> {
        let mut map = self.to_flat();
        for (k, v) in overrides {
            // Replacing a whole subtree (e.g. a learning-rate object) drops its old leaves.
            let prefix = format!("{k}.");
            map.retain(|key, _| !key.starts_with(&prefix));
            if let Value::Object(_) = v {
                let nested = flat::flatten(v);
                for (sub, leaf) in nested {
                    map.insert(format!("{k}.{sub}"), leaf);
                }
            } else {
                map.insert(k.clone(), v.clone());
            }
        }
        let out = Self::from_flat(&map)?;
        if out.task.name() != self.task.name() {
            return Err(CliError::Config(
                "the experiment cannot be overridden".into(),
            ));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn all_presets() -> Vec<ExperimentConfig> {
        [
            ("gaussian", None),
            ("gaussian", Some("two-layer")),
            ("gaussian", Some("switching")),
            ("xor", None),
            ("spiral", None),
            ("mnist-classify", None),
            ("mnist-classify", Some("full")),
            ("mnist-density", None),
            ("mnist-density", Some("full")),
            ("verify", None),
        ]
        .into_iter()
        .map(|(e, p)| ExperimentConfig::new(Task::preset(e, p).unwrap()))
        .collect()
    }

    #[test]
    fn presets_round_trip_through_text() {
        for cfg in all_presets() {
            let text = cfg.to_text();
            assert_eq!(ExperimentConfig::from_text(&text).unwrap(), cfg, "{text}");
        }
    }

    #[test]
    fn flat_text_is_readable() {
        let text = ExperimentConfig::new(Task::preset("gaussian", None).unwrap()).to_text();
        assert!(text.contains("experiment = gaussian\n"));
        assert!(text.contains("layer_widths = [3,2,2,2,2,1]\n"));
        assert!(text.contains("network.learning_rate.kind = inverse_capped\n"));
        assert!(text.contains("output_dir = runs/gaussian\n"));
    }

    #[test]
    fn overrides_apply_and_validate() {
        let cfg = ExperimentConfig::new(Task::preset("gaussian", None).unwrap());
        let o = cfg
            .with_overrides(&[("rounds".into(), json!(100)), ("seed".into(), json!(9))])
            .unwrap();
        match &o.task {
            Task::Gaussian(g) => assert_eq!((g.rounds, g.seed), (100, 9)),
            _ => unreachable!(),
        }
        let bad = |k: &str, v: Value| cfg.with_overrides(&[(k.into(), v)]).unwrap_err();
        assert!(matches!(bad("no_such_key", json!(1)), CliError::Config(_)));
        assert!(matches!(bad("rounds", json!("many")), CliError::Config(_)));
        assert!(matches!(
            bad("experiment", json!("xor")),
            CliError::Config(_)
        ));
    }

    #[test]
    fn replacing_an_enum_subtree_drops_stale_fields() {
        let cfg = ExperimentConfig::new(Task::preset("spiral", None).unwrap());
        let o = cfg
            .with_overrides(&[(
                "network.learning_rate".into(),
                json!({"kind": "inverse", "scale": 2.0}),
            )])
            .unwrap();
        let text = o.to_text();
        assert!(text.contains("network.learning_rate.kind = inverse\n"));
        assert!(!text.contains("network.learning_rate.rate"));
    }

    #[test]
    fn unknown_experiment_and_preset() {
        assert!(matches!(
            Task::preset("cifar", None),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            Task::preset("xor", Some("huge")),
            Err(CliError::Config(_))
        ));
        assert!(ExperimentConfig::from_text("seed = 1").is_err());
    }
}
