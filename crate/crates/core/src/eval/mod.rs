//! Synthetic data, metrics and the experiment protocols.

pub mod loaders;
pub mod metrics;
pub mod protocols;
pub mod report;
pub mod toy;

pub use loaders::{
    load_letter, load_thyroid, read_letter, read_thyroid, split_novelty, split_rows, ThyroidSplit, LETTER_TRAIN_ROWS,
};
pub use metrics::{f_measure, roc_auc, Confusion, RocCurve};
pub use protocols::{
    k_for_fraction, run_binary_novelty, run_oletter, run_toy, surrogate_classes, CurvePoint, MethodCurve,
    MethodOutcome, NoveltyConfig, NoveltyResult, OletterConfig, OpennessStep, TailSweepPoint, ToyParams, ToyResult,
    XiRecord,
};
pub use toy::{generate_toy, GaussianSpec, TestPoint, ToyConfig};
