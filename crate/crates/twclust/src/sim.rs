//! Labeled benchmark scenarios and the seeded Monte-Carlo harness that
//! tallies how often each method selects each cluster count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data::{Curve, DataError, FunctionalDataset, TimeGrid};
use crate::measure::Distance;
use crate::select::{Method, SelectError, SelectionGrid, SelectionOptions};
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown scenario id {id}; expected 1..=4")]
    UnknownScenario { id: u8 },
    #[error("at least one Monte-Carlo run is required")]
    NoRuns,
    #[error("no methods requested")]
    NoMethods,
    #[error("grid length {r} is too short")]
    GridTooShort { r: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Select(#[from] SelectError),
}

/// Generator parameters for one benchmark scenario.
///
/// Curve `i` of cluster `ℓ` samples `a_i + μ_ℓ(x_j) + ε_j` on an equally
/// spaced unit grid, with one shift draw per curve and independent noise per
/// observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub id: u8,
    /// Half-width `a` of the per-curve uniform shift on `(−a, a)`.
    pub shift_half_width: f64,
    pub noise_mean: f64,
    pub noise_sd: f64,
    pub grid_len: usize,
}

impl ScenarioSpec {
    /// The four standard scenarios; grid length defaults to 50 points.
    pub fn standard(id: u8) -> Result<Self, SimError> {
        let (shift, sd) = match id {
            1 => (1.0 / 3.0, 0.4),
            2 => (0.5, 0.4),
            3 => (1.0 / 3.0, 0.4),
            4 => (0.25, 0.3),
            _ => return Err(SimError::UnknownScenario { id }),
        };
        Ok(Self {
            id,
            shift_half_width: shift,
            noise_mean: 2.0,
            noise_sd: sd,
            grid_len: 50,
        })
    }

    pub fn with_grid_len(mut self, r: usize) -> Self {
        self.grid_len = r;
        self
    }

    /// True cluster count.
    pub fn k(&self) -> usize {
        self.cluster_sizes().len()
    }

    /// Curves per cluster.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        match self.id {
            1 => vec![43, 57],
            2 => vec![35, 43, 72],
            3 => vec![34, 67, 71, 28],
            4 => vec![50, 62, 36, 43, 59],
            _ => unreachable!("validated at construction"),
        }
    }

    /// Total curve count.
    pub fn n(&self) -> usize {
        self.cluster_sizes().iter().sum()
    }

    /// Mean function of one cluster at grid position `x`.
    pub fn cluster_mean(&self, cluster: usize, x: f64) -> f64 {
        use std::f64::consts::PI;
        match self.id {
            1 => match cluster {
                0 => 1.8 - (1.8 * PI * x).cos() - (1.8 * x).sin(),
                _ => 2.4 - (1.8 * PI * x).cos() - (2.2 * x).sin(),
            },
            2 => {
                let (height, freq) = [(2.0, 1.5), (2.3, 1.7), (2.7, 1.9)][cluster];
                height - (freq * PI * x.powi(3)).cos()
            }
            3 => {
                let (height, freq) = [(0.9, 1.5), (1.5, 1.7), (2.2, 1.9), (2.4, 1.6)][cluster];
                height + (freq * PI * x).sin() + (PI * x * x).sin()
            }
            4 => {
                let freq = [1.0, 1.2, 1.4, 1.6, 1.8][cluster];
                (freq * PI * x).cos() - x * x
            }
            _ => unreachable!("validated at construction"),
        }
    }
}

/// Draw one labeled dataset from a scenario.
pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<FunctionalDataset, SimError> {
    if spec.grid_len < crate::data::MIN_GRID_LEN {
        return Err(SimError::GridTooShort { r: spec.grid_len });
    }
    let grid = TimeGrid::uniform(spec.grid_len)?;
    let xs: Vec<f64> = grid.points().to_vec();
    let noise = Normal::new(spec.noise_mean, spec.noise_sd).expect("finite sd");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut curves = Vec::with_capacity(spec.n());
    for (cluster, &size) in spec.cluster_sizes().iter().enumerate() {
        for _ in 0..size {
            let shift = if spec.shift_half_width > 0.0 {
                rng.random_range(-spec.shift_half_width..spec.shift_half_width)
            } else {
                0.0
            };
            let values: Vec<f64> = xs
                .iter()
                .map(|&x| shift + spec.cluster_mean(cluster, x) + noise.sample(&mut rng))
                .collect();
            curves.push(Curve::with_label(values, cluster as i64)?);
        }
    }
    Ok(FunctionalDataset::new(grid, curves)?)
}

/// Outcome of one method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateSelection {
    pub method: Method,
    pub k_opt: Option<usize>,
    pub alpha_opt: Option<f64>,
    pub error: Option<String>,
}

/// Audit record of one Monte-Carlo replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub data_seed: u64,
    pub cluster_seed: u64,
    pub selections: Vec<ReplicateSelection>,
}

/// Selection counts of one method over the k range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodCounts {
    pub method: Method,
    /// Counts aligned with the table's `k_values`.
    pub counts: Vec<usize>,
    /// Replicates where the method returned an error.
    pub failures: usize,
}

impl MethodCounts {
    /// Count for a specific k.
    pub fn count_at(&self, k_values: &[usize], k: usize) -> usize {
        k_values
            .iter()
            .position(|&kv| kv == k)
            .map_or(0, |idx| self.counts[idx])
    }
}

/// Frequency table of selected cluster counts over Monte-Carlo replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyTable {
    pub scenario: u8,
    pub distance: Distance,
    pub runs: usize,
    pub seed: u64,
    pub k_values: Vec<usize>,
    pub methods: Vec<MethodCounts>,
    pub replicates: Vec<ReplicateRecord>,
}

impl FrequencyTable {
    pub fn counts_for(&self, method: Method) -> Option<&MethodCounts> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Flat CSV: one row per method, one column per candidate k.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for k in &self.k_values {
            out.push_str(&format!(",{k}"));
        }
        out.push('\n');
        for row in &self.methods {
            out.push_str(row.method.name());
            for c in &row.counts {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Run `runs` seeded replicates of scenario generation plus selection and
/// tally the chosen cluster counts per method.
///
/// Replicate seeds are a pure function of `(seed, replicate)`, so the table
/// does not depend on execution order; failures of a single method are
/// recorded per replicate without aborting the run.
pub fn monte_carlo(
    spec: &ScenarioSpec,
    methods: &[Method],
    options: &SelectionOptions,
    runs: usize,
    seed: u64,
) -> Result<FrequencyTable, SimError> {
    if runs == 0 {
        return Err(SimError::NoRuns);
    }
    if methods.is_empty() {
        return Err(SimError::NoMethods);
    }

    let records: Vec<Result<ReplicateRecord, SimError>> = (0..runs)
        .into_par_iter()
        .map(|replicate| {
            let data_seed = derive_seed(seed, replicate as u64, 0);
            let cluster_seed = derive_seed(seed, replicate as u64, 1);
            let dataset = generate_scenario(spec, data_seed)?;
            let mut replicate_options = options.clone();
            replicate_options.cluster.seed = cluster_seed;
            let grid = SelectionGrid::compute(&dataset, &replicate_options, methods)?;
            let selections = methods
                .iter()
                .map(|&method| match grid.trace(method) {
                    Ok(trace) => ReplicateSelection {
                        method,
                        k_opt: Some(trace.k_opt),
                        alpha_opt: trace.alpha_opt,
                        error: None,
                    },
                    Err(err) => ReplicateSelection {
                        method,
                        k_opt: None,
                        alpha_opt: None,
                        error: Some(err.to_string()),
                    },
                })
                .collect();
            Ok(ReplicateRecord {
                replicate,
                data_seed,
                cluster_seed,
                selections,
            })
        })
        .collect();

    let mut replicates = Vec::with_capacity(runs);
    for record in records {
        replicates.push(record?);
    }

    let k_values: Vec<usize> = (options.k_min..=options.k_max).collect();
    let methods_out = methods
        .iter()
        .map(|&method| {
            let mut counts = vec![0usize; k_values.len()];
            let mut failures = 0usize;
            for record in &replicates {
                let selection = record
                    .selections
                    .iter()
                    .find(|s| s.method == method)
                    .expect("every replicate records every method");
                match selection.k_opt {
                    Some(k) => {
                        let idx = k - options.k_min;
                        counts[idx] += 1;
                    }
                    None => failures += 1,
                }
            }
            MethodCounts {
                method,
                counts,
                failures,
            }
        })
        .collect();

    Ok(FrequencyTable {
        scenario: spec.id,
        distance: options.cluster.distance,
        runs,
        seed,
        k_values,
        methods: methods_out,
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_sizes_match() {
        assert_eq!(ScenarioSpec::standard(1).unwrap().cluster_sizes(), vec![43, 57]);
        assert_eq!(ScenarioSpec::standard(2).unwrap().n(), 150);
        assert_eq!(ScenarioSpec::standard(3).unwrap().n(), 200);
        assert_eq!(
            ScenarioSpec::standard(4).unwrap().cluster_sizes(),
            vec![50, 62, 36, 43, 59]
        );
        assert!(matches!(
            ScenarioSpec::standard(5),
            Err(SimError::UnknownScenario { id: 5 })
        ));
    }

    #[test]
    fn scenario_mean_endpoints() {
        let s1 = ScenarioSpec::standard(1).unwrap();
        // 1.8 − cos 0 − sin 0 = 0.8 at x = 0.
        assert!((s1.cluster_mean(0, 0.0) - 0.8).abs() < 1e-12);
        assert!((s1.cluster_mean(1, 0.0) - 1.4).abs() < 1e-12);

        let s4 = ScenarioSpec::standard(4).unwrap();
        // cos 0 − 0 = 1 at x = 0 for every cluster.
        for cluster in 0..5 {
            assert!((s4.cluster_mean(cluster, 0.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generated_labels_match_sizes_for_any_seed() {
        let spec = ScenarioSpec::standard(4).unwrap().with_grid_len(12);
        for seed in [0, 1, 99, 12345] {
            let ds = generate_scenario(&spec, seed).unwrap();
            assert_eq!(ds.n(), 250);
            assert_eq!(ds.r(), 12);
            let mut counts = vec![0usize; 5];
            for curve in ds.curves() {
                counts[curve.label().unwrap() as usize] += 1;
            }
            assert_eq!(counts, vec![50, 62, 36, 43, 59]);
        }
    }

    #[test]
    fn degenerate_noise_reduces_to_shifted_means() {
        let mut spec = ScenarioSpec::standard(1).unwrap().with_grid_len(10);
        spec.noise_sd = 0.0;
        spec.shift_half_width = 0.0;
        let ds = generate_scenario(&spec, 7).unwrap();
        let xs = ds.grid().points().to_vec();
        for (i, curve) in ds.curves().iter().enumerate() {
            let cluster = curve.label().unwrap() as usize;
            for (j, &v) in curve.values().iter().enumerate() {
                let expected = spec.cluster_mean(cluster, xs[j]) + 2.0;
                assert!(
                    (v - expected).abs() < 1e-12,
                    "curve {i} point {j}: {v} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = ScenarioSpec::standard(2).unwrap().with_grid_len(15);
        assert_eq!(
            generate_scenario(&spec, 42).unwrap(),
            generate_scenario(&spec, 42).unwrap()
        );
    }
}
