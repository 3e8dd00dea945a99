//! Cluster-count selection for functional data.
//!
//! Curves are compared with a blend of two test statistics — a windowed
//! one-way ANOVA statistic for lack of parallelism and a t statistic for
//! mean-height difference — and the blend drives K-means style clustering,
//! within/between cluster sums, and eight classical criteria for choosing
//! the number of clusters, each optimized jointly over the cluster count and
//! the blend weight. A plain L2 mode runs the same pipeline on the Euclidean
//! distance for contrast, and a seeded Monte-Carlo harness reproduces
//! frequency tables over simulated scenarios.

pub mod cli;
pub mod cluster;
pub mod data;
pub mod measure;
pub mod select;
pub mod sim;
mod util;

pub use cluster::{cluster, l2_distance, recenter, ClusterError, ClusterOptions, Clustering};
pub use data::{
    load_dataset, residuals, write_dataset, CsvFormat, Curve, DataError, FunctionalDataset,
    ResidualVector, TimeGrid,
};
pub use measure::{
    anova_mst_mse, build_windows, calibrate_m, t_parallelism, tau_hat_sq, tw_measure, w_mean_diff,
    CalibrationOutcome, Distance, MeasureConfig, MeasureError, ParallelismResult, TwMeasure,
    WindowSet,
};
pub use select::{
    bcs, default_alpha_grid, empirical_distortion, gap_statistic, jump_selection, select_k,
    silhouette, slope_heuristics, wcs, CriterionTrace, Method, SelectError, SelectionGrid,
    SelectionOptions, SlopeMode, SumTable,
};
pub use sim::{generate_scenario, monte_carlo, FrequencyTable, ScenarioSpec, SimError};
