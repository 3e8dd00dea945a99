//! Penalized-distortion selection with a data-driven penalty constant,
//! calibrated either by locating the jump in selected complexity (Djump) or
//! by regressing the distortion on the penalty shape over the most complex
//! models (DDSE).

use serde::Serialize;

use super::{Auxiliary, CriterionTrace, Method, SelectError, SlopeSlotAux, SumTable, TraceEntry};
use crate::cluster::Clustering;
use crate::data::FunctionalDataset;
use crate::measure::{Distance, MeasureConfig, Metric};

/// Penalty-calibration flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SlopeMode {
    Djump,
    Ddse,
}

/// Average measure from each curve to its nearest center.
pub fn empirical_distortion(
    dataset: &FunctionalDataset,
    centers: &[Vec<f64>],
    distance: Distance,
    alpha: f64,
    config: &MeasureConfig,
) -> Result<f64, SelectError> {
    if centers.is_empty() {
        return Err(SelectError::Shape("no centers supplied".into()));
    }
    for center in centers {
        if center.len() != dataset.r() {
            return Err(SelectError::Shape(format!(
                "center length {} does not match the {}-point grid",
                center.len(),
                dataset.r()
            )));
        }
    }
    let metric = Metric::new(dataset.r(), distance, alpha, config)?;
    let mut buf = Vec::with_capacity(dataset.r());
    let mut total = 0.0;
    for i in 0..dataset.n() {
        let mut best = f64::INFINITY;
        for center in centers {
            best = best.min(metric.dissim(dataset.values(i), center, &mut buf));
        }
        total += best;
    }
    Ok(total / dataset.n() as f64)
}

/// Convenience: distortion of a clustering's centers.
pub fn clustering_distortion(
    dataset: &FunctionalDataset,
    clustering: &Clustering,
    distance: Distance,
    alpha: f64,
    config: &MeasureConfig,
) -> Result<f64, SelectError> {
    empirical_distortion(dataset, &clustering.centers, distance, alpha, config)
}

const DJUMP_GRID_LEN: usize = 200;
const DJUMP_SPAN: f64 = 1e6;

fn argmin_penalized(lambda: f64, distortion: &[f64], pen: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_v = f64::INFINITY;
    for (idx, (&d, &p)) in distortion.iter().zip(pen).enumerate() {
        let v = d + lambda * p;
        if v < best_v {
            best_v = v;
            best = idx;
        }
    }
    best
}

struct SlotOutcome {
    selected_k: Option<usize>,
    lambda: Option<f64>,
    slope: Option<f64>,
    lambda_star: Option<f64>,
    failed: Option<String>,
    objective: f64,
}

fn ddse_slot(distortion: &[f64], pen: &[f64], k_min: usize) -> SlotOutcome {
    let len = distortion.len();
    // Slope over the most complex half of the range.
    let window = len.div_ceil(2);
    let start = len - window;
    let xs = &pen[start..];
    let ys = &distortion[start..];
    let x_mean = xs.iter().sum::<f64>() / window as f64;
    let y_mean = ys.iter().sum::<f64>() / window as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - x_mean) * (y - y_mean);
        sxx += (x - x_mean) * (x - x_mean);
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return SlotOutcome {
            selected_k: None,
            lambda: None,
            slope: Some(slope),
            lambda_star: None,
            failed: Some(format!(
                "estimated slope {slope} is not negative over k = {}..={}",
                k_min + start,
                k_min + len - 1
            )),
            objective: f64::INFINITY,
        };
    }
    let lambda = -2.0 * slope;
    let idx = argmin_penalized(lambda, distortion, pen);
    SlotOutcome {
        selected_k: Some(k_min + idx),
        lambda: Some(lambda),
        slope: Some(slope),
        lambda_star: None,
        failed: None,
        objective: distortion[idx] + lambda * pen[idx],
    }
}

fn djump_slot(distortion: &[f64], pen: &[f64], k_min: usize) -> SlotOutcome {
    let max_d = distortion.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max_d > 0.0) {
        // Flat-zero distortion: every k fits perfectly, keep the smallest.
        return SlotOutcome {
            selected_k: Some(k_min),
            lambda: Some(0.0),
            slope: None,
            lambda_star: None,
            failed: None,
            objective: 0.0,
        };
    }
    let lo = 1e-6 * max_d;
    let ratio = (DJUMP_SPAN * DJUMP_SPAN).powf(1.0 / (DJUMP_GRID_LEN - 1) as f64);

    let mut lambda = lo;
    let mut path: Vec<(f64, usize)> = Vec::with_capacity(DJUMP_GRID_LEN);
    for _ in 0..DJUMP_GRID_LEN {
        path.push((lambda, argmin_penalized(lambda, distortion, pen)));
        lambda *= ratio;
    }

    let mut best_drop = 0usize;
    let mut lambda_star = None;
    for w in path.windows(2) {
        let drop = w[0].1.saturating_sub(w[1].1);
        if drop > best_drop {
            best_drop = drop;
            lambda_star = Some(w[1].0);
        }
    }

    match lambda_star {
        Some(ls) => {
            let lambda = 2.0 * ls;
            let idx = argmin_penalized(lambda, distortion, pen);
            SlotOutcome {
                selected_k: Some(k_min + idx),
                lambda: Some(lambda),
                slope: None,
                lambda_star: Some(ls),
                failed: None,
                objective: distortion[idx] + lambda * pen[idx],
            }
        }
        None => {
            // No complexity jump anywhere on the grid: the path is constant,
            // keep its value under the heaviest penalty.
            let idx = path.last().expect("grid nonempty").1;
            SlotOutcome {
                selected_k: Some(k_min + idx),
                lambda: None,
                slope: None,
                lambda_star: None,
                failed: None,
                objective: distortion[idx],
            }
        }
    }
}

/// Penalized-distortion selection over the weight grid.
///
/// Each slot calibrates its own penalty constant; slots are then compared by
/// the penalized value at their selected k, smallest first. A slot whose
/// calibration fails is skipped; if every slot fails the first failure is
/// reported.
pub fn slope_heuristics(
    distortion: &SumTable,
    n: usize,
    k_min: usize,
    k_max: usize,
    mode: SlopeMode,
) -> Result<CriterionTrace, SelectError> {
    if k_min < distortion.k_lo() || k_max > distortion.k_hi() {
        return Err(SelectError::MissingK {
            k: if k_min < distortion.k_lo() { k_min } else { k_max },
        });
    }
    let len = k_max - k_min + 1;
    if mode == SlopeMode::Ddse && len < 4 {
        return Err(SelectError::RangeTooShortForDdse { found: len });
    }
    let pen: Vec<f64> = (k_min..=k_max).map(|k| (k as f64 / n as f64).sqrt()).collect();

    let mut entries = Vec::new();
    let mut slots_aux = Vec::new();
    let mut outcomes = Vec::new();
    for (slot, &alpha) in distortion.alphas().iter().enumerate() {
        let lam: Vec<f64> = (k_min..=k_max)
            .map(|k| distortion.get(slot, k).expect("span checked"))
            .collect();
        let outcome = match mode {
            SlopeMode::Ddse => ddse_slot(&lam, &pen, k_min),
            SlopeMode::Djump => djump_slot(&lam, &pen, k_min),
        };
        let lambda = outcome.lambda.unwrap_or(0.0);
        for (idx, &d) in lam.iter().enumerate() {
            entries.push(TraceEntry {
                k: k_min + idx,
                alpha,
                value: d + lambda * pen[idx],
            });
        }
        slots_aux.push(SlopeSlotAux {
            alpha,
            selected_k: outcome.selected_k,
            lambda: outcome.lambda,
            slope: outcome.slope,
            lambda_star: outcome.lambda_star,
            failed: outcome.failed.clone(),
        });
        outcomes.push(outcome);
    }

    let mut winner: Option<(usize, usize, f64)> = None; // (slot, k, objective)
    for (slot, outcome) in outcomes.iter().enumerate() {
        let Some(k) = outcome.selected_k else { continue };
        let better = match winner {
            None => true,
            Some((_, wk, wobj)) => {
                outcome.objective < wobj
                    || (outcome.objective == wobj && k < wk)
            }
        };
        if better {
            winner = Some((slot, k, outcome.objective));
        }
    }

    match winner {
        Some((slot, k, _)) => Ok(CriterionTrace {
            method: if mode == SlopeMode::Ddse { Method::Ddse } else { Method::Djump },
            values: entries,
            k_opt: k,
            alpha_opt: distortion.alphas()[slot],
            auxiliary: Auxiliary::Slope { slots: slots_aux },
        }),
        None => {
            let first = outcomes
                .iter()
                .find_map(|o| o.slope.map(|s| (s, o)))
                .map(|(s, _)| s)
                .unwrap_or(f64::NAN);
            Err(SelectError::CalibrationFailed {
                slope: first,
                window_lo: k_min + len - len.div_ceil(2),
                window_hi: k_max,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(k_lo: usize, rows: Vec<Vec<f64>>) -> SumTable {
        let alphas = vec![Some(0.5); rows.len()];
        SumTable::new(alphas, k_lo, rows).unwrap()
    }

    #[test]
    fn ddse_recovers_twice_the_slope_on_exact_lines() {
        // Λ(k) = c − s·√(k/n) with s = 3, n = 100, k = 1..8.
        let n = 100;
        let s = 3.0;
        let lam: Vec<f64> = (1..=8)
            .map(|k| 5.0 - s * (k as f64 / n as f64).sqrt())
            .collect();
        let trace = slope_heuristics(&table(1, vec![lam]), n, 1, 8, SlopeMode::Ddse).unwrap();
        match &trace.auxiliary {
            Auxiliary::Slope { slots } => {
                let lambda = slots[0].lambda.unwrap();
                assert!((lambda - 2.0 * s).abs() <= 1e-9 * lambda);
            }
            other => panic!("unexpected auxiliary {other:?}"),
        }
        assert_eq!(trace.k_opt, 1, "penalized curve rises, smallest k wins");
    }

    #[test]
    fn ddse_rejects_nonnegative_slopes() {
        let lam: Vec<f64> = (1..=8).map(|k| 1.0 + 0.1 * k as f64).collect();
        let err = slope_heuristics(&table(1, vec![lam]), 50, 1, 8, SlopeMode::Ddse).unwrap_err();
        assert!(matches!(err, SelectError::CalibrationFailed { slope, .. } if slope > 0.0));
    }

    #[test]
    fn ddse_needs_four_points() {
        let err = slope_heuristics(&table(1, vec![vec![3.0, 2.0, 1.0]]), 50, 1, 3, SlopeMode::Ddse)
            .unwrap_err();
        assert!(matches!(err, SelectError::RangeTooShortForDdse { found: 3 }));
    }

    #[test]
    fn djump_finds_an_elbow_at_three() {
        // Steep improvement until k = 3, then a nearly flat tail.
        let n = 100;
        let lam = vec![1.5, 1.0, 0.5, 0.499, 0.498, 0.497, 0.496, 0.495];
        let trace = slope_heuristics(&table(1, vec![lam.clone()]), n, 1, 8, SlopeMode::Djump).unwrap();
        assert_eq!(trace.k_opt, 3);

        // Independent grid search over a finer lambda sweep agrees.
        let pen: Vec<f64> = (1..=8).map(|k| (k as f64 / n as f64).sqrt()).collect();
        let k_of = |l: f64| -> usize {
            (0..8)
                .min_by(|&a, &b| {
                    (lam[a] + l * pen[a]).total_cmp(&(lam[b] + l * pen[b]))
                })
                .unwrap()
                + 1
        };
        let mut grid_lambda = 1e-6 * 1.5;
        let mut best_drop = 0;
        let mut lambda_star = None;
        let mut prev = k_of(grid_lambda);
        for _ in 0..2000 {
            grid_lambda *= 1.0142;
            let curr = k_of(grid_lambda);
            if prev.saturating_sub(curr) > best_drop {
                best_drop = prev - curr;
                lambda_star = Some(grid_lambda);
            }
            prev = curr;
        }
        assert_eq!(k_of(2.0 * lambda_star.unwrap()), 3);
    }

    #[test]
    fn djump_flat_zero_distortion_selects_smallest_k() {
        let trace =
            slope_heuristics(&table(1, vec![vec![0.0; 8]]), 64, 1, 8, SlopeMode::Djump).unwrap();
        assert_eq!(trace.k_opt, 1);
    }

    #[test]
    fn failed_slots_are_skipped_when_another_succeeds() {
        let n = 100;
        let good: Vec<f64> = (1..=8)
            .map(|k| 5.0 - 3.0 * (k as f64 / n as f64).sqrt())
            .collect();
        let bad: Vec<f64> = (1..=8).map(|k| 1.0 + 0.2 * k as f64).collect();
        let table = SumTable::new(vec![Some(0.2), Some(0.7)], 1, vec![bad, good]).unwrap();
        let trace = slope_heuristics(&table, n, 1, 8, SlopeMode::Ddse).unwrap();
        assert_eq!(trace.alpha_opt, Some(0.7));
        match &trace.auxiliary {
            Auxiliary::Slope { slots } => {
                assert!(slots[0].failed.is_some());
                assert!(slots[1].failed.is_none());
            }
            other => panic!("unexpected auxiliary {other:?}"),
        }
    }
}
