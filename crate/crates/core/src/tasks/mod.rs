//! End-to-end experiments built from the library's components.

pub mod classify;
pub mod config;
pub mod density;
pub mod metrics;
pub mod synthetic;
pub mod verify;

pub use classify::{
    argmax, ova_step, run_mnist_classify, run_spiral, FeaturePipeline, OneVsAllClassifier,
    OvaOutcome,
};
pub use config::{
    Binarization, GaussianConfig, MnistClassifyConfig, MnistDensityConfig, NetParams, OffsetScheme,
    SpiralConfig, XorConfig,
};
pub use density::{
    density_step, load_density_data, run_density, AutoregressiveDensityModel, ZrBaseline,
};
pub use metrics::{BlockStats, MetricRecord, MetricsWriter};
pub use synthetic::{run_gaussian, run_xor};
