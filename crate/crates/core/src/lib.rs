//! Open-set classification with extreme value statistics.
//!
//! Three classifiers decide whether a query belongs to the classes seen in
//! training: [`GpdcModel`] (tail shape and quantile of nearest distances),
//! [`GevcModel`] (Weibull fit of nearest-neighbor distances) and the
//! [`EvmModel`] baseline. Supporting modules hold the statistics, exact
//! neighbor search, model files and an evaluation harness.

pub mod classifier;
pub mod data;
pub mod error;
pub mod eval;
pub mod evm;
pub mod evt;
pub mod gevc;
pub mod gpdc;
pub mod model_io;
pub mod neighbors;
pub mod rng;

pub use classifier::{OpenSetClassifier, PerClass};
pub use data::{
    distance, negate_distances, order_statistics, read_csv, read_csv_path, CsvOptions, CsvTable, DistanceMetric,
    Evidence, Label, LabelColumn, LabeledDataset, Standardizer, Verdict,
};
pub use error::{Error, FitDiagnostics, Result};
pub use evm::{EvmConfig, EvmModel, MarginModel};
pub use evt::{
    default_k, gpd_quantile, gpd_tail_survival, hill_plot, hill_shape, hill_shape_from_nearest,
    reversed_weibull_cdf, reversed_weibull_fit, reversed_weibull_fit_free_endpoint, weibull_mle, GpdTail,
    ReversedWeibull, ShapeEstimate, WeibullFit,
};
pub use gevc::{EndpointMode, GevcConfig, GevcModel};
pub use gpdc::{CalibrationProfile, GpdcConfig, GpdcEvidence, GpdcModel, JackknifeStat, Stage};
pub use model_io::{AnyModel, ModelFile, ModelKind};
pub use neighbors::{Neighbor, NeighborIndex};
