//! Cluster-count selection: within/between sums, eight selection criteria,
//! and the joint optimization over the cluster count `k` and the measure
//! weight `alpha`.
//!
//! All criteria consume a precomputed grid of clusterings, one per `(k, α)`
//! pair, so that every method reads the same partitions. The index-style
//! criteria are pure functions of the summed tables, which keeps them
//! checkable against plain arithmetic.

mod criteria;
mod gap;
mod jump;
mod slope;

pub use criteria::{ch_index, hartigan_index, kl_index, silhouette_trace};
pub use gap::gap_statistic;
pub use jump::{jump_differences_direct, jump_differences_log, jump_selection, SignedLog};
pub use slope::{clustering_distortion, empirical_distortion, slope_heuristics, SlopeMode};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{cluster, Clustering, ClusterError, ClusterOptions};
use crate::data::FunctionalDataset;
use crate::measure::{sample_stats, Distance, MeasureConfig, MeasureError, Metric, TwMeasure};
use crate::util::derive_seed;

/// Hartigan's stopping threshold.
pub const HARTIGAN_THRESHOLD: f64 = 10.0;

/// Floor replacing `log(0)` in the gap statistic.
pub const GAP_LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("k range [{k_min}, {k_max}] is invalid for a dataset of {n} curves")]
    BadKRange { k_min: usize, k_max: usize, n: usize },
    #[error("{method} needs clusterings at k = {needed}, but the dataset has only {n} curves")]
    NeighborOutOfRange { method: Method, needed: usize, n: usize },
    #[error("{method} has no evaluable k in [{k_min}, {k_max}]")]
    NoEvaluableK { method: Method, k_min: usize, k_max: usize },
    #[error("{method} was not requested when the selection grid was computed")]
    NotRequested { method: Method },
    #[error("alpha grid is empty")]
    EmptyAlphaGrid,
    #[error("alpha = {alpha} is outside [0, 1]")]
    BadAlpha { alpha: f64 },
    #[error("gap statistic needs at least 2 reference datasets, got {b}")]
    BadReferenceCount { b: usize },
    #[error("table has no value at k = {k}")]
    MissingK { k: usize },
    #[error("tables disagree on their alpha slots")]
    SlotMismatch,
    #[error(
        "slope calibration failed: estimated slope {slope} is not negative over k = {window_lo}..={window_hi}"
    )]
    CalibrationFailed {
        slope: f64,
        window_lo: usize,
        window_hi: usize,
    },
    #[error("ddse needs at least 4 k values, found {found}")]
    RangeTooShortForDdse { found: usize },
    #[error("every criterion value on the grid is undefined")]
    SelectionFailed,
    #[error("clustering measure and dataset disagree: {0}")]
    Shape(String),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// The selection criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CH")]
    Ch,
    #[serde(rename = "KL")]
    Kl,
    #[serde(rename = "Hartigan")]
    Hartigan,
    #[serde(rename = "Silhouette")]
    Silhouette,
    #[serde(rename = "GAP")]
    Gap,
    #[serde(rename = "JUMP")]
    Jump,
    #[serde(rename = "DDSE")]
    Ddse,
    #[serde(rename = "Djump")]
    Djump,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Ch,
        Method::Kl,
        Method::Hartigan,
        Method::Silhouette,
        Method::Gap,
        Method::Jump,
        Method::Ddse,
        Method::Djump,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ch => "CH",
            Method::Kl => "KL",
            Method::Hartigan => "Hartigan",
            Method::Silhouette => "Silhouette",
            Method::Gap => "GAP",
            Method::Jump => "JUMP",
            Method::Ddse => "DDSE",
            Method::Djump => "Djump",
        }
    }

    /// Methods that compare `WCS(k)` against `WCS(k+1)`.
    pub fn needs_upper_neighbor(&self) -> bool {
        matches!(self, Method::Kl | Method::Hartigan)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ch" => Ok(Method::Ch),
            "kl" => Ok(Method::Kl),
            "hartigan" => Ok(Method::Hartigan),
            "silhouette" => Ok(Method::Silhouette),
            "gap" => Ok(Method::Gap),
            "jump" => Ok(Method::Jump),
            "ddse" => Ok(Method::Ddse),
            "djump" => Ok(Method::Djump),
            other => Err(format!(
                "unknown method {other:?}; expected one of ch, kl, hartigan, silhouette, gap, jump, ddse, djump"
            )),
        }
    }
}

/// Rectangular table of per-`(α, k)` sums over a contiguous k span.
///
/// `alphas[slot] == None` marks the single slot of the `l2` mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumTable {
    alphas: Vec<Option<f64>>,
    k_lo: usize,
    values: Vec<Vec<f64>>,
}

impl SumTable {
    pub fn new(
        alphas: Vec<Option<f64>>,
        k_lo: usize,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, SelectError> {
        if alphas.is_empty() || values.len() != alphas.len() {
            return Err(SelectError::SlotMismatch);
        }
        let width = values[0].len();
        if width == 0 || values.iter().any(|row| row.len() != width) {
            return Err(SelectError::MissingK { k: k_lo });
        }
        Ok(Self { alphas, k_lo, values })
    }

    pub fn alphas(&self) -> &[Option<f64>] {
        &self.alphas
    }

    pub fn k_lo(&self) -> usize {
        self.k_lo
    }

    pub fn k_hi(&self) -> usize {
        self.k_lo + self.values[0].len() - 1
    }

    pub fn get(&self, slot: usize, k: usize) -> Option<f64> {
        if k < self.k_lo || k > self.k_hi() {
            return None;
        }
        self.values.get(slot).map(|row| row[k - self.k_lo])
    }

    fn require(&self, slot: usize, k: usize) -> Result<f64, SelectError> {
        self.get(slot, k).ok_or(SelectError::MissingK { k })
    }
}

/// One criterion value at a `(k, α)` grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub k: usize,
    pub alpha: Option<f64>,
    pub value: f64,
}

/// Per-slot outcome of a first-hit selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotSelection {
    pub alpha: Option<f64>,
    pub k: usize,
    /// The rule never fired inside the range and fell back to its top.
    pub never_fired: bool,
}

/// Gap bookkeeping for one slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSlotAux {
    pub alpha: Option<f64>,
    pub selected_k: usize,
    pub never_fired: bool,
    /// Simulation-adjusted spread of the reference log sums, by k.
    pub s_k: Vec<f64>,
    pub log_floor_used: bool,
}

/// Jump bookkeeping for one slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpSlotAux {
    pub alpha: Option<f64>,
    pub selected_k: usize,
    pub distortions: Vec<f64>,
    pub jumps: Vec<SignedLog>,
}

/// Slope-heuristic bookkeeping for one slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeSlotAux {
    pub alpha: Option<f64>,
    pub selected_k: Option<usize>,
    pub lambda: Option<f64>,
    /// DDSE regression slope, when applicable.
    pub slope: Option<f64>,
    /// Djump jump location, when applicable.
    pub lambda_star: Option<f64>,
    pub failed: Option<String>,
}

/// Method-specific extras attached to a [`CriterionTrace`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Auxiliary {
    None,
    Threshold { selections: Vec<SlotSelection> },
    Gap { slots: Vec<GapSlotAux> },
    Jump { slots: Vec<JumpSlotAux> },
    Slope { slots: Vec<SlopeSlotAux> },
}

/// Full record of one criterion over the `(k, α)` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionTrace {
    pub method: Method,
    pub values: Vec<TraceEntry>,
    pub k_opt: usize,
    pub alpha_opt: Option<f64>,
    pub auxiliary: Auxiliary,
}

/// Search space and pipeline knobs for selection.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionOptions {
    pub k_min: usize,
    pub k_max: usize,
    /// Weights searched in `tw` mode; ignored under `l2`.
    pub alpha_grid: Vec<f64>,
    pub cluster: ClusterOptions,
    /// Reference datasets for the gap statistic.
    pub gap_references: usize,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            k_min: 1,
            k_max: 8,
            alpha_grid: default_alpha_grid(),
            cluster: ClusterOptions::default(),
            gap_references: 20,
        }
    }
}

/// The default weight grid 0, 0.1, …, 1.0.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

pub(crate) struct PairwiseDissim {
    n: usize,
    /// Parallelism statistic per pair, absent in `l2` mode.
    t: Option<Vec<f64>>,
    /// Mean-height statistic per pair, or the plain distance in `l2` mode.
    w: Vec<f64>,
}

impl PairwiseDissim {
    fn compute(dataset: &FunctionalDataset, distance: Distance, config: &MeasureConfig) -> Result<Self, SelectError> {
        let n = dataset.n();
        let r = dataset.r();
        match distance {
            Distance::Tw => {
                let engine = TwMeasure::new(r, config)?;
                let stats: Vec<_> = (0..n).map(|i| sample_stats(dataset.values(i))).collect();
                let mut t = vec![0.0; n * n];
                let mut w = vec![0.0; n * n];
                let rows: Vec<(usize, Vec<f64>, Vec<f64>)> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let mut buf = vec![0.0; r];
                        let mut t_row = vec![0.0; n];
                        let mut w_row = vec![0.0; n];
                        for j in (i + 1)..n {
                            let yi = dataset.values(i);
                            let yj = dataset.values(j);
                            buf.clear();
                            buf.extend(yi.iter().zip(yj).map(|(a, b)| a - b));
                            t_row[j] = engine.t_stat(&buf);
                            w_row[j] = engine.w_from_stats(stats[i], stats[j]);
                        }
                        (i, t_row, w_row)
                    })
                    .collect();
                for (i, t_row, w_row) in rows {
                    for j in (i + 1)..n {
                        t[i * n + j] = t_row[j];
                        t[j * n + i] = t_row[j];
                        w[i * n + j] = w_row[j];
                        w[j * n + i] = w_row[j];
                    }
                }
                Ok(Self { n, t: Some(t), w })
            }
            Distance::L2 => {
                let mut w = vec![0.0; n * n];
                for i in 0..n {
                    for j in (i + 1)..n {
                        let d = crate::measure::l2_raw(dataset.values(i), dataset.values(j));
                        w[i * n + j] = d;
                        w[j * n + i] = d;
                    }
                }
                Ok(Self { n, t: None, w })
            }
        }
    }

    fn at(&self, i: usize, j: usize, alpha: Option<f64>) -> f64 {
        let idx = i * self.n + j;
        match (&self.t, alpha) {
            (Some(t), Some(a)) => (a * t[idx] + (1.0 - a) * self.w[idx]).sqrt(),
            _ => self.w[idx],
        }
    }
}

pub(crate) fn silhouette_from_pairwise(
    pairwise: &PairwiseDissim,
    assignments: &[usize],
    sizes: &[usize],
    alpha: Option<f64>,
) -> f64 {
    let n = assignments.len();
    let k = sizes.len();
    let mut total = 0.0;
    let mut acc = vec![0.0; k];
    for i in 0..n {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for j in 0..n {
            acc[assignments[j]] += pairwise.at(i, j, alpha);
        }
        let own = assignments[i];
        if sizes[own] < 2 {
            continue;
        }
        let a = acc[own] / (sizes[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for l in 0..k {
            if l != own && sizes[l] > 0 {
                b = b.min(acc[l] / sizes[l] as f64);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 && b.is_finite() {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Within-cluster sum: the measure from every curve to its assigned center.
pub fn wcs(
    dataset: &FunctionalDataset,
    clustering: &Clustering,
    distance: Distance,
    alpha: f64,
    config: &MeasureConfig,
) -> Result<f64, SelectError> {
    check_clustering(dataset, clustering)?;
    let metric = Metric::new(dataset.r(), distance, alpha, config)?;
    let mut buf = Vec::with_capacity(dataset.r());
    let mut total = 0.0;
    for (i, &a) in clustering.assignments.iter().enumerate() {
        total += metric.dissim(dataset.values(i), &clustering.centers[a], &mut buf);
    }
    Ok(total)
}

/// Between-cluster sum: size-weighted measure from each center to the
/// overall center.
pub fn bcs(
    clustering: &Clustering,
    distance: Distance,
    alpha: f64,
    config: &MeasureConfig,
) -> Result<f64, SelectError> {
    let r = clustering.overall_center.len();
    let metric = Metric::new(r, distance, alpha, config)?;
    let mut buf = Vec::with_capacity(r);
    let mut total = 0.0;
    for (center, &size) in clustering.centers.iter().zip(&clustering.sizes) {
        total += size as f64 * metric.dissim(center, &clustering.overall_center, &mut buf);
    }
    Ok(total)
}

/// Average silhouette width of a clustering under the pairwise measure.
pub fn silhouette(
    dataset: &FunctionalDataset,
    clustering: &Clustering,
    distance: Distance,
    alpha: f64,
    config: &MeasureConfig,
) -> Result<f64, SelectError> {
    check_clustering(dataset, clustering)?;
    if clustering.k < 2 {
        return Err(SelectError::NoEvaluableK {
            method: Method::Silhouette,
            k_min: clustering.k,
            k_max: clustering.k,
        });
    }
    let pairwise = PairwiseDissim::compute(dataset, distance, config)?;
    let slot_alpha = match distance {
        Distance::Tw => Some(alpha),
        Distance::L2 => None,
    };
    Ok(silhouette_from_pairwise(
        &pairwise,
        &clustering.assignments,
        &clustering.sizes,
        slot_alpha,
    ))
}

fn check_clustering(dataset: &FunctionalDataset, clustering: &Clustering) -> Result<(), SelectError> {
    if clustering.assignments.len() != dataset.n() {
        return Err(SelectError::Shape(format!(
            "clustering covers {} curves, dataset has {}",
            clustering.assignments.len(),
            dataset.n()
        )));
    }
    if clustering.centers.iter().any(|c| c.len() != dataset.r()) {
        return Err(SelectError::Shape(format!(
            "center length does not match the {}-point grid",
            dataset.r()
        )));
    }
    Ok(())
}

/// The weighted within sum `Σ_ℓ (2 n_ℓ)⁻¹ Σ_{i ∈ ℓ} measure` used by the
/// gap statistic.
fn gap_within(
    dataset: &FunctionalDataset,
    clustering: &Clustering,
    metric: &Metric,
) -> f64 {
    let mut buf = Vec::with_capacity(dataset.r());
    let mut per_cluster = vec![0.0; clustering.k];
    for (i, &a) in clustering.assignments.iter().enumerate() {
        per_cluster[a] += metric.dissim(dataset.values(i), &clustering.centers[a], &mut buf);
    }
    per_cluster
        .iter()
        .zip(&clustering.sizes)
        .map(|(sum, &size)| sum / (2.0 * size as f64))
        .sum()
}

pub(crate) struct GapData {
    /// `log 𝒲` of the observed data, `[slot][k - k_min]`.
    pub log_w: Vec<Vec<f64>>,
    /// `log 𝒲*` of each uniform reference, `[slot][b][k - k_min]`.
    pub ref_log_w: Vec<Vec<Vec<f64>>>,
    pub floor_used: Vec<bool>,
}

/// Clusterings and derived tables over the `(k, α)` search grid.
pub struct SelectionGrid {
    alphas: Vec<Option<f64>>,
    k_min: usize,
    k_max: usize,
    k_lo: usize,
    n: usize,
    r: usize,
    clusterings: Vec<Vec<Clustering>>,
    wcs: SumTable,
    bcs: SumTable,
    sil: Option<SumTable>,
    distortion: Option<SumTable>,
    gap: Option<GapData>,
    gap_references: usize,
}

impl SelectionGrid {
    /// Cluster every `(k, α)` pair needed by `methods` and precompute the
    /// tables they read.
    pub fn compute(
        dataset: &FunctionalDataset,
        options: &SelectionOptions,
        methods: &[Method],
    ) -> Result<Self, SelectError> {
        let n = dataset.n();
        let r = dataset.r();
        let (k_min, k_max) = (options.k_min, options.k_max);
        if k_min < 1 || k_min > k_max || k_max > n {
            return Err(SelectError::BadKRange { k_min, k_max, n });
        }

        let alphas: Vec<Option<f64>> = match options.cluster.distance {
            Distance::Tw => {
                if options.alpha_grid.is_empty() {
                    return Err(SelectError::EmptyAlphaGrid);
                }
                let mut grid = options.alpha_grid.clone();
                for &alpha in &grid {
                    if !(0.0..=1.0).contains(&alpha) {
                        return Err(SelectError::BadAlpha { alpha });
                    }
                }
                grid.sort_by(f64::total_cmp);
                grid.dedup();
                grid.into_iter().map(Some).collect()
            }
            Distance::L2 => vec![None],
        };

        let needs_upper = methods.iter().any(Method::needs_upper_neighbor);
        let needs_lower = methods.contains(&Method::Kl) && k_min > 1;
        let k_lo = if needs_lower { k_min - 1 } else { k_min };
        let k_hi = if needs_upper { k_max + 1 } else { k_max };
        if k_hi > n {
            let method = *methods
                .iter()
                .find(|m| m.needs_upper_neighbor())
                .expect("extension implies a neighbor method");
            return Err(SelectError::NeighborOutOfRange {
                method,
                needed: k_hi,
                n,
            });
        }

        let clusterings = cluster_grid(dataset, &alphas, k_lo, k_hi, &options.cluster)?;

        let metrics = build_metrics(r, &alphas, &options.cluster)?;
        let mut wcs_rows = Vec::with_capacity(alphas.len());
        let mut bcs_rows = Vec::with_capacity(alphas.len());
        for (slot, metric) in metrics.iter().enumerate() {
            let mut wcs_row = Vec::with_capacity(k_hi - k_lo + 1);
            let mut bcs_row = Vec::with_capacity(k_hi - k_lo + 1);
            let mut buf = Vec::with_capacity(r);
            for clustering in &clusterings[slot] {
                let mut within = 0.0;
                for (i, &a) in clustering.assignments.iter().enumerate() {
                    within += metric.dissim(dataset.values(i), &clustering.centers[a], &mut buf);
                }
                wcs_row.push(within);
                let mut between = 0.0;
                for (center, &size) in clustering.centers.iter().zip(&clustering.sizes) {
                    between += size as f64 * metric.dissim(center, &clustering.overall_center, &mut buf);
                }
                bcs_row.push(between);
            }
            wcs_rows.push(wcs_row);
            bcs_rows.push(bcs_row);
        }
        let wcs = SumTable::new(alphas.clone(), k_lo, wcs_rows)?;
        let bcs = SumTable::new(alphas.clone(), k_lo, bcs_rows)?;

        let sil = if methods.contains(&Method::Silhouette) && k_max >= 2 {
            let pairwise = PairwiseDissim::compute(dataset, options.cluster.distance, &options.cluster.measure)?;
            let sil_lo = k_min.max(2);
            let mut rows = Vec::with_capacity(alphas.len());
            for (slot, &alpha) in alphas.iter().enumerate() {
                let mut row = Vec::with_capacity(k_max - sil_lo + 1);
                for k in sil_lo..=k_max {
                    let clustering = &clusterings[slot][k - k_lo];
                    row.push(silhouette_from_pairwise(
                        &pairwise,
                        &clustering.assignments,
                        &clustering.sizes,
                        alpha,
                    ));
                }
                rows.push(row);
            }
            Some(SumTable::new(alphas.clone(), sil_lo, rows)?)
        } else {
            None
        };

        let distortion = if methods.contains(&Method::Ddse) || methods.contains(&Method::Djump) {
            let mut rows = Vec::with_capacity(alphas.len());
            for (slot, metric) in metrics.iter().enumerate() {
                let mut row = Vec::with_capacity(k_max - k_min + 1);
                let mut buf = Vec::with_capacity(r);
                for k in k_min..=k_max {
                    let clustering = &clusterings[slot][k - k_lo];
                    let mut total = 0.0;
                    for i in 0..n {
                        let mut best = f64::INFINITY;
                        for center in &clustering.centers {
                            best = best.min(metric.dissim(dataset.values(i), center, &mut buf));
                        }
                        total += best;
                    }
                    row.push(total / n as f64);
                }
                rows.push(row);
            }
            Some(SumTable::new(alphas.clone(), k_min, rows)?)
        } else {
            None
        };

        let gap = if methods.contains(&Method::Gap) {
            Some(compute_gap_data(
                dataset,
                &alphas,
                &clusterings,
                &metrics,
                k_lo,
                k_min,
                k_max,
                options,
            )?)
        } else {
            None
        };

        Ok(Self {
            alphas,
            k_min,
            k_max,
            k_lo,
            n,
            r,
            clusterings,
            wcs,
            bcs,
            sil,
            distortion,
            gap,
            gap_references: options.gap_references,
        })
    }

    pub fn alphas(&self) -> &[Option<f64>] {
        &self.alphas
    }

    pub fn wcs_table(&self) -> &SumTable {
        &self.wcs
    }

    pub fn bcs_table(&self) -> &SumTable {
        &self.bcs
    }

    pub fn distortion_table(&self) -> Option<&SumTable> {
        self.distortion.as_ref()
    }

    pub fn clustering(&self, slot: usize, k: usize) -> Option<&Clustering> {
        if k < self.k_lo {
            return None;
        }
        self.clusterings.get(slot).and_then(|row| row.get(k - self.k_lo))
    }

    /// Evaluate one criterion over the grid and select `(K_opt, α_opt)`.
    pub fn trace(&self, method: Method) -> Result<CriterionTrace, SelectError> {
        match method {
            Method::Ch => ch_index(&self.wcs, &self.bcs, self.n, self.k_min, self.k_max),
            Method::Kl => kl_index(&self.wcs, self.r, self.k_min, self.k_max),
            Method::Hartigan => hartigan_index(&self.wcs, self.n, self.k_min, self.k_max),
            Method::Silhouette => {
                let sil = self
                    .sil
                    .as_ref()
                    .ok_or(SelectError::NotRequested { method })?;
                silhouette_trace(sil, self.k_min, self.k_max)
            }
            Method::Jump => jump_selection(&self.wcs, self.r, self.k_min, self.k_max),
            Method::Ddse => {
                let table = self
                    .distortion
                    .as_ref()
                    .ok_or(SelectError::NotRequested { method })?;
                slope_heuristics(table, self.n, self.k_min, self.k_max, SlopeMode::Ddse)
            }
            Method::Djump => {
                let table = self
                    .distortion
                    .as_ref()
                    .ok_or(SelectError::NotRequested { method })?;
                slope_heuristics(table, self.n, self.k_min, self.k_max, SlopeMode::Djump)
            }
            Method::Gap => {
                let gap = self.gap.as_ref().ok_or(SelectError::NotRequested { method })?;
                Ok(gap::gap_trace(
                    gap,
                    &self.alphas,
                    self.k_min,
                    self.k_max,
                    self.gap_references,
                ))
            }
        }
    }
}

fn build_metrics(
    r: usize,
    alphas: &[Option<f64>],
    cluster: &ClusterOptions,
) -> Result<Vec<Metric>, SelectError> {
    alphas
        .iter()
        .map(|alpha| {
            let a = alpha.unwrap_or(cluster.measure.alpha);
            Metric::new(r, cluster.distance, a, &cluster.measure).map_err(SelectError::from)
        })
        .collect()
}

fn cluster_grid(
    dataset: &FunctionalDataset,
    alphas: &[Option<f64>],
    k_lo: usize,
    k_hi: usize,
    base: &ClusterOptions,
) -> Result<Vec<Vec<Clustering>>, SelectError> {
    let pairs: Vec<(usize, usize)> = (0..alphas.len())
        .flat_map(|slot| (k_lo..=k_hi).map(move |k| (slot, k)))
        .collect();
    let results: Vec<Result<Clustering, ClusterError>> = pairs
        .par_iter()
        .map(|&(slot, k)| {
            let mut options = *base;
            if let Some(alpha) = alphas[slot] {
                options.measure.alpha = alpha;
            }
            cluster(dataset, k, &options)
        })
        .collect();

    let width = k_hi - k_lo + 1;
    let mut grid: Vec<Vec<Clustering>> = Vec::with_capacity(alphas.len());
    let mut iter = results.into_iter();
    for _ in 0..alphas.len() {
        let mut row = Vec::with_capacity(width);
        for _ in 0..width {
            row.push(iter.next().expect("pair count matches")?);
        }
        grid.push(row);
    }
    Ok(grid)
}

#[allow(clippy::too_many_arguments)]
fn compute_gap_data(
    dataset: &FunctionalDataset,
    alphas: &[Option<f64>],
    clusterings: &[Vec<Clustering>],
    metrics: &[Metric],
    k_lo: usize,
    k_min: usize,
    k_max: usize,
    options: &SelectionOptions,
) -> Result<GapData, SelectError> {
    let b_count = options.gap_references;
    if b_count < 2 {
        return Err(SelectError::BadReferenceCount { b: b_count });
    }

    let mut floor_used = vec![false; alphas.len()];
    let mut log_w = Vec::with_capacity(alphas.len());
    for (slot, metric) in metrics.iter().enumerate() {
        let mut row = Vec::with_capacity(k_max - k_min + 1);
        for k in k_min..=k_max {
            let w = gap_within(dataset, &clusterings[slot][k - k_lo], metric);
            if w <= 0.0 {
                floor_used[slot] = true;
            }
            row.push(w.max(GAP_LOG_FLOOR).ln());
        }
        log_w.push(row);
    }

    // Per-point value ranges of the observed data drive the uniform
    // references.
    let r = dataset.r();
    let n = dataset.n();
    let mut lo = vec![f64::INFINITY; r];
    let mut hi = vec![f64::NEG_INFINITY; r];
    for i in 0..n {
        for (j, &v) in dataset.values(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }

    let seed = options.cluster.seed;
    let per_ref: Vec<Result<Vec<Vec<f64>>, SelectError>> = (0..b_count)
        .into_par_iter()
        .map(|b| {
            use rand::Rng;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, b as u64, 10));
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..r)
                        .map(|j| {
                            if hi[j] > lo[j] {
                                rng.random_range(lo[j]..=hi[j])
                            } else {
                                lo[j]
                            }
                        })
                        .collect()
                })
                .collect();
            let curves = rows
                .into_iter()
                .map(|v| crate::data::Curve::new(v).expect("uniform draws are finite"))
                .collect();
            let reference = FunctionalDataset::new(dataset.grid().clone(), curves)
                .expect("reference mirrors the dataset shape");

            let mut cluster_options = options.cluster;
            cluster_options.seed = derive_seed(seed, b as u64, 11);
            let mut slot_rows = Vec::with_capacity(alphas.len());
            for (slot, metric) in metrics.iter().enumerate() {
                let mut row = Vec::with_capacity(k_max - k_min + 1);
                let mut slot_options = cluster_options;
                if let Some(alpha) = alphas[slot] {
                    slot_options.measure.alpha = alpha;
                }
                for k in k_min..=k_max {
                    let clustering = cluster(&reference, k, &slot_options)?;
                    let w = gap_within(&reference, &clustering, metric);
                    row.push(w.max(GAP_LOG_FLOOR).ln());
                }
                slot_rows.push(row);
            }
            Ok(slot_rows)
        })
        .collect();

    let mut ref_log_w: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(b_count); alphas.len()];
    for per_slot in per_ref {
        let per_slot = per_slot?;
        for (slot, row) in per_slot.into_iter().enumerate() {
            ref_log_w[slot].push(row);
        }
    }

    Ok(GapData {
        log_w,
        ref_log_w,
        floor_used,
    })
}

/// Convenience wrapper: compute the grid for one method and trace it.
pub fn select_k(
    dataset: &FunctionalDataset,
    method: Method,
    options: &SelectionOptions,
) -> Result<CriterionTrace, SelectError> {
    SelectionGrid::compute(dataset, options, &[method])?.trace(method)
}
