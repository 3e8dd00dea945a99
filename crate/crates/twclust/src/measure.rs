//! Parallelism statistic `T`, mean-height statistic `W`, and their blend
//! `TW_α = sqrt(α·T + (1−α)·W)` — the dissimilarity every criterion in this
//! crate is built on — plus permutation calibration of the window size `m`.
//!
//! `T` treats the residuals of a curve against a center as a one-way ANOVA
//! whose factor levels are short index windows around each grid point: a
//! curve parallel to the center has residuals with constant mean, so the
//! standardized treatment-minus-error mean square is small. `W` is a plain
//! two-sample t statistic on the curve and center heights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;
use thiserror::Error;

use crate::data::{FunctionalDataset, TimeGrid, MIN_GRID_LEN};

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("window size m = {m} must be odd")]
    WindowEven { m: usize },
    #[error("window size m = {m} exceeds the grid length r = {r}")]
    WindowTooLarge { m: usize, r: usize },
    #[error("window size m = {m} leaves the error mean square undefined; use m >= 3")]
    WindowTooSmall { m: usize },
    #[error("series has {r} points; at least {min} are required")]
    SeriesTooShort { r: usize, min: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("alpha = {alpha} is outside [0, 1]")]
    AlphaOutOfRange { alpha: f64 },
    #[error("variance floor must be positive, got {floor}")]
    BadVarianceFloor { floor: f64 },
    #[error("test level must lie strictly between 0 and 1, got {level}")]
    BadLevel { level: f64 },
    #[error("no candidate window sizes supplied")]
    NoCandidates,
    #[error("at least one permutation replicate is required")]
    NoPermutations,
}

/// Dissimilarity used by clustering and selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    /// The combined parallelism / mean-height measure.
    Tw,
    /// Pointwise Euclidean distance between curves.
    L2,
}

impl std::fmt::Display for Distance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Distance::Tw => "tw",
            Distance::L2 => "l2",
        })
    }
}

impl std::str::FromStr for Distance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tw" => Ok(Distance::Tw),
            "l2" => Ok(Distance::L2),
            other => Err(format!("unknown distance {other:?}; expected tw or l2")),
        }
    }
}

/// Index windows `W_j` around each grid position.
///
/// Window membership is decided on rank-normalized positions `j/r`, under
/// which the defining rule `|t_j − t_s| <= (m−1)/(2r)` reduces to plain index
/// distance `|j − s| <= (m−1)/2`. This keeps every window at `m` members on
/// any equally spaced grid (truncated at the boundaries) and makes windows
/// independent of the grid's units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSet {
    m: usize,
    r: usize,
    half: usize,
}

impl WindowSet {
    /// Windows for a series of length `r`. `m` must be odd and at most `r`.
    pub fn for_len(r: usize, m: usize) -> Result<Self, MeasureError> {
        if m % 2 == 0 {
            return Err(MeasureError::WindowEven { m });
        }
        if m > r {
            return Err(MeasureError::WindowTooLarge { m, r });
        }
        Ok(Self { m, r, half: (m - 1) / 2 })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn series_len(&self) -> usize {
        self.r
    }

    /// Half-open index range of `W_j` (0-based).
    pub fn range(&self, j: usize) -> std::ops::Range<usize> {
        let start = j.saturating_sub(self.half);
        let end = (j + self.half + 1).min(self.r);
        start..end
    }

    /// Members of `W_j` as 0-based indices.
    pub fn members(&self, j: usize) -> Vec<usize> {
        self.range(j).collect()
    }
}

/// Build the ANOVA windows for a grid.
pub fn build_windows(grid: &TimeGrid, m: usize) -> Result<WindowSet, MeasureError> {
    WindowSet::for_len(grid.len(), m)
}

/// Configuration of the combined measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureConfig {
    /// Weight on the parallelism statistic; `1 − alpha` goes to the
    /// mean-height statistic.
    pub alpha: f64,
    /// ANOVA window size (odd, at least 3).
    pub m: usize,
    /// Value returned for `T` when the noise-scale estimate is exactly zero,
    /// i.e. the residuals are perfectly parallel.
    pub degenerate_t: f64,
    /// Small constant under the `W` denominator guarding constant curves.
    pub variance_floor: f64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            m: 5,
            degenerate_t: 0.0,
            variance_floor: 1e-12,
        }
    }
}

impl MeasureConfig {
    pub fn validate(&self) -> Result<(), MeasureError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(MeasureError::AlphaOutOfRange { alpha: self.alpha });
        }
        if self.m % 2 == 0 {
            return Err(MeasureError::WindowEven { m: self.m });
        }
        if self.m < 3 {
            return Err(MeasureError::WindowTooSmall { m: self.m });
        }
        if !(self.variance_floor > 0.0) {
            return Err(MeasureError::BadVarianceFloor {
                floor: self.variance_floor,
            });
        }
        Ok(())
    }
}

/// Pieces of the parallelism statistic for one residual vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParallelismResult {
    pub mst: f64,
    pub mse: f64,
    pub tau_sq: f64,
    pub t_stat: f64,
}

/// Sample mean and unbiased variance of a value vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SampleStats {
    pub mean: f64,
    pub var: f64,
}

pub(crate) fn sample_stats(values: &[f64]) -> SampleStats {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return SampleStats { mean, var: 0.0 };
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    SampleStats {
        mean,
        var: ss / (n - 1) as f64,
    }
}

pub(crate) fn l2_raw(y: &[f64], c: &[f64]) -> f64 {
    y.iter()
        .zip(c)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Precomputed evaluator of the statistics for series of a fixed length.
///
/// Construction validates the window size once; the per-call paths are then
/// allocation-free, which matters inside the clustering loops.
#[derive(Debug, Clone)]
pub struct TwMeasure {
    windows: WindowSet,
    r: usize,
    degenerate_t: f64,
    variance_floor: f64,
    sqrt_r: f64,
    std_factor: f64,
}

impl TwMeasure {
    pub fn new(r: usize, config: &MeasureConfig) -> Result<Self, MeasureError> {
        config.validate()?;
        if r < MIN_GRID_LEN {
            return Err(MeasureError::SeriesTooShort { r, min: MIN_GRID_LEN });
        }
        let windows = WindowSet::for_len(r, config.m)?;
        let m = config.m as f64;
        Ok(Self {
            windows,
            r,
            degenerate_t: config.degenerate_t,
            variance_floor: config.variance_floor,
            sqrt_r: (r as f64).sqrt(),
            std_factor: (2.0 * m * (2.0 * m - 1.0) / (3.0 * (m - 1.0))).sqrt(),
        })
    }

    pub fn series_len(&self) -> usize {
        self.r
    }

    pub fn windows(&self) -> &WindowSet {
        &self.windows
    }

    fn anova_raw(&self, xi: &[f64]) -> (f64, f64) {
        let r = self.r;
        let m = self.windows.m() as f64;

        let mut grand_num = 0.0;
        let mut grand_den = 0usize;
        for j in 0..r {
            let range = self.windows.range(j);
            grand_den += range.len();
            grand_num += xi[range].iter().sum::<f64>();
        }
        let grand = grand_num / grand_den as f64;

        let mut mst_acc = 0.0;
        let mut mse_acc = 0.0;
        for j in 0..r {
            let range = self.windows.range(j);
            let count = range.len() as f64;
            let mean = xi[range.clone()].iter().sum::<f64>() / count;
            let dev = mean - grand;
            mst_acc += dev * dev;
            for s in range {
                let e = xi[s] - mean;
                mse_acc += e * e;
            }
        }
        let mst = m / (r as f64 - 1.0) * mst_acc;
        let mse = mse_acc / (r as f64 * (m - 1.0));
        (mst, mse)
    }

    fn tau_sq_raw(&self, xi: &[f64]) -> f64 {
        tau_sq_of(xi)
    }

    /// All pieces of the parallelism statistic.
    pub fn parallelism(&self, xi: &[f64]) -> ParallelismResult {
        debug_assert_eq!(xi.len(), self.r);
        let (mst, mse) = self.anova_raw(xi);
        let tau_sq = self.tau_sq_raw(xi);
        let t_stat = if tau_sq > 0.0 {
            (self.sqrt_r * (mst - mse) / (tau_sq.sqrt() * self.std_factor)).abs()
        } else {
            self.degenerate_t
        };
        ParallelismResult {
            mst,
            mse,
            tau_sq,
            t_stat,
        }
    }

    /// The standardized lack-of-parallelism statistic `T`.
    pub fn t_stat(&self, xi: &[f64]) -> f64 {
        self.parallelism(xi).t_stat
    }

    pub(crate) fn w_from_stats(&self, a: SampleStats, b: SampleStats) -> f64 {
        let denom = ((a.var + b.var) / self.r as f64 + self.variance_floor).sqrt();
        ((a.mean - b.mean) / denom).abs()
    }

    /// The mean-height statistic `W`.
    pub fn w_stat(&self, y: &[f64], c: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.r);
        debug_assert_eq!(c.len(), self.r);
        self.w_from_stats(sample_stats(y), sample_stats(c))
    }

    /// Blend the two statistics with weight `alpha` on `T`.
    pub fn combine(&self, t: f64, w: f64, alpha: f64) -> f64 {
        (alpha * t + (1.0 - alpha) * w).sqrt()
    }
}

fn tau_sq_of(xi: &[f64]) -> f64 {
    let r = xi.len();
    let mut acc = 0.0;
    // 1-based s = 2..=r−2 translates to 0-based s = 1..=r−3.
    for s in 1..=(r - 3) {
        let d1 = xi[s] - xi[s - 1];
        let d2 = xi[s + 2] - xi[s + 1];
        acc += d1 * d1 * d2 * d2;
    }
    acc / (4.0 * (r as f64 - 3.0))
}

/// Treatment and error mean sums of squares of the windowed one-way layout.
///
/// Boundary windows use their true member count in the window means while
/// the leading constants keep the nominal `m` and `r`.
pub fn anova_mst_mse(xi: &[f64], windows: &WindowSet) -> Result<(f64, f64), MeasureError> {
    if xi.len() != windows.series_len() {
        return Err(MeasureError::LengthMismatch {
            left: xi.len(),
            right: windows.series_len(),
        });
    }
    if windows.m() < 3 {
        return Err(MeasureError::WindowTooSmall { m: windows.m() });
    }
    let config = MeasureConfig {
        m: windows.m(),
        ..MeasureConfig::default()
    };
    let engine = TwMeasure::new(xi.len(), &config)?;
    Ok(engine.anova_raw(xi))
}

/// Noise-scale estimate from squared products of lag-1 differences.
pub fn tau_hat_sq(xi: &[f64]) -> Result<f64, MeasureError> {
    if xi.len() < MIN_GRID_LEN {
        return Err(MeasureError::SeriesTooShort {
            r: xi.len(),
            min: MIN_GRID_LEN,
        });
    }
    Ok(tau_sq_of(xi))
}

/// Standardized parallelism statistic of a residual vector.
pub fn t_parallelism(xi: &[f64], config: &MeasureConfig) -> Result<f64, MeasureError> {
    let engine = TwMeasure::new(xi.len(), config)?;
    Ok(engine.t_stat(xi))
}

/// Mean-height statistic between a curve and a center.
pub fn w_mean_diff(y: &[f64], c: &[f64], config: &MeasureConfig) -> Result<f64, MeasureError> {
    if y.len() != c.len() {
        return Err(MeasureError::LengthMismatch {
            left: y.len(),
            right: c.len(),
        });
    }
    if y.len() < 2 {
        return Err(MeasureError::SeriesTooShort { r: y.len(), min: 2 });
    }
    config.validate()?;
    let r = y.len() as f64;
    let (a, b) = (sample_stats(y), sample_stats(c));
    let denom = ((a.var + b.var) / r + config.variance_floor).sqrt();
    Ok(((a.mean - b.mean) / denom).abs())
}

/// The combined measure `sqrt(alpha·T(ξ) + (1−alpha)·W(Y, c))`.
pub fn tw_measure(
    xi: &[f64],
    y: &[f64],
    c: &[f64],
    config: &MeasureConfig,
) -> Result<f64, MeasureError> {
    if xi.len() != y.len() || y.len() != c.len() {
        return Err(MeasureError::LengthMismatch {
            left: xi.len(),
            right: y.len().max(c.len()),
        });
    }
    let engine = TwMeasure::new(xi.len(), config)?;
    let t = engine.t_stat(xi);
    let w = engine.w_stat(y, c);
    Ok(engine.combine(t, w, config.alpha))
}

/// Dissimilarity evaluator shared by clustering and selection.
///
/// The first argument of the combined measure is always the residual of the
/// other two, so both modes reduce to a function of `(y, c)`.
#[derive(Debug, Clone)]
pub(crate) enum Metric {
    Tw { engine: TwMeasure, alpha: f64 },
    L2,
}

impl Metric {
    pub(crate) fn new(
        r: usize,
        distance: Distance,
        alpha: f64,
        config: &MeasureConfig,
    ) -> Result<Self, MeasureError> {
        match distance {
            Distance::Tw => {
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(MeasureError::AlphaOutOfRange { alpha });
                }
                Ok(Metric::Tw {
                    engine: TwMeasure::new(r, config)?,
                    alpha,
                })
            }
            Distance::L2 => Ok(Metric::L2),
        }
    }

    /// Measure between a curve and a center, reusing `buf` for residuals.
    pub(crate) fn dissim(&self, y: &[f64], c: &[f64], buf: &mut Vec<f64>) -> f64 {
        match self {
            Metric::Tw { engine, alpha } => {
                buf.clear();
                buf.extend(y.iter().zip(c).map(|(a, b)| a - b));
                let t = engine.t_stat(buf);
                let w = engine.w_stat(y, c);
                engine.combine(t, w, *alpha)
            }
            Metric::L2 => l2_raw(y, c),
        }
    }

    /// Same as [`Metric::dissim`] with the height stats supplied by the caller.
    pub(crate) fn dissim_with_stats(
        &self,
        y: &[f64],
        ys: SampleStats,
        c: &[f64],
        cs: SampleStats,
        buf: &mut Vec<f64>,
    ) -> f64 {
        match self {
            Metric::Tw { engine, alpha } => {
                buf.clear();
                buf.extend(y.iter().zip(c).map(|(a, b)| a - b));
                let t = engine.t_stat(buf);
                let w = engine.w_from_stats(ys, cs);
                engine.combine(t, w, *alpha)
            }
            Metric::L2 => l2_raw(y, c),
        }
    }
}

/// Empirical level of one candidate window size under the permutation null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidateLevel {
    pub m: usize,
    pub empirical_level: f64,
    pub rejections: u64,
    pub trials: u64,
}

/// Result of [`calibrate_m`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationOutcome {
    pub chosen_m: usize,
    pub nominal_level: f64,
    pub critical_value: f64,
    pub levels: Vec<CandidateLevel>,
}

/// Choose the window size whose permutation-null rejection rate is closest
/// to the nominal test level.
///
/// Each replicate permutes every curve's values across grid positions and
/// centers the result at its mean, which enforces the parallelism null; `T`
/// is then compared against the standard normal critical value at `level`.
/// Ties go to the smaller candidate.
pub fn calibrate_m(
    dataset: &FunctionalDataset,
    level: f64,
    candidates: &[usize],
    permutations: usize,
    seed: u64,
) -> Result<CalibrationOutcome, MeasureError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MeasureError::BadLevel { level });
    }
    if candidates.is_empty() {
        return Err(MeasureError::NoCandidates);
    }
    if permutations == 0 {
        return Err(MeasureError::NoPermutations);
    }
    let r = dataset.r();
    let mut engines = Vec::with_capacity(candidates.len());
    for &m in candidates {
        if m % 2 == 0 {
            return Err(MeasureError::WindowEven { m });
        }
        if m < 3 {
            return Err(MeasureError::WindowTooSmall { m });
        }
        if m > r {
            return Err(MeasureError::WindowTooLarge { m, r });
        }
        let config = MeasureConfig { m, ..MeasureConfig::default() };
        engines.push(TwMeasure::new(r, &config)?);
    }

    let normal = statrs::distribution::Normal::new(0.0, 1.0).expect("standard normal");
    let critical = normal.inverse_cdf(1.0 - level);

    let rejections: Vec<u64> = (0..permutations)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut permuted = vec![0.0; r];
            let mut counts = vec![0u64; engines.len()];
            for curve in dataset.curves() {
                permuted.copy_from_slice(curve.values());
                permuted.shuffle(&mut rng);
                let mean = permuted.iter().sum::<f64>() / r as f64;
                for v in &mut permuted {
                    *v -= mean;
                }
                for (count, engine) in counts.iter_mut().zip(&engines) {
                    if engine.t_stat(&permuted) > critical {
                        *count += 1;
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; engines.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    let trials = (permutations * dataset.n()) as u64;
    let levels: Vec<CandidateLevel> = candidates
        .iter()
        .zip(&rejections)
        .map(|(&m, &rej)| CandidateLevel {
            m,
            empirical_level: rej as f64 / trials as f64,
            rejections: rej,
            trials,
        })
        .collect();

    let chosen_m = levels
        .iter()
        .min_by(|a, b| {
            let da = (a.empirical_level - level).abs();
            let db = (b.empirical_level - level).abs();
            da.total_cmp(&db).then(a.m.cmp(&b.m))
        })
        .expect("candidates checked nonempty")
        .m;

    Ok(CalibrationOutcome {
        chosen_m,
        nominal_level: level,
        critical_value: critical,
        levels,
    })
}
