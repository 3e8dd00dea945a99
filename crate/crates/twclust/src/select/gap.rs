//! Gap statistic: log within sums of the data against those of uniform
//! reference datasets drawn over the observed per-point value ranges.

use super::{
    Auxiliary, CriterionTrace, GapData, GapSlotAux, Method, SelectError, SelectionGrid,
    SelectionOptions, TraceEntry,
};
use crate::data::FunctionalDataset;

/// Evaluate the gap trace from precomputed log within sums.
pub(crate) fn gap_trace(
    gap: &GapData,
    alphas: &[Option<f64>],
    k_min: usize,
    k_max: usize,
    references: usize,
) -> CriterionTrace {
    let width = k_max - k_min + 1;
    let b = references as f64;
    let inflation = (1.0 + 1.0 / b).sqrt();

    let mut entries = Vec::new();
    let mut slots_aux = Vec::new();
    for (slot, &alpha) in alphas.iter().enumerate() {
        let mut gaps = Vec::with_capacity(width);
        let mut s_k = Vec::with_capacity(width);
        for idx in 0..width {
            let refs: Vec<f64> = gap.ref_log_w[slot].iter().map(|row| row[idx]).collect();
            let mean = refs.iter().sum::<f64>() / b;
            let var = refs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / b;
            gaps.push(mean - gap.log_w[slot][idx]);
            s_k.push(var.sqrt() * inflation);
        }
        for (idx, &g) in gaps.iter().enumerate() {
            entries.push(TraceEntry {
                k: k_min + idx,
                alpha,
                value: g,
            });
        }

        let mut selected = None;
        for idx in 0..width.saturating_sub(1) {
            if gaps[idx] >= gaps[idx + 1] - s_k[idx + 1] {
                selected = Some(k_min + idx);
                break;
            }
        }
        slots_aux.push(GapSlotAux {
            alpha,
            selected_k: selected.unwrap_or(k_max),
            never_fired: selected.is_none(),
            s_k,
            log_floor_used: gap.floor_used[slot],
        });
    }

    let winner = slots_aux
        .iter()
        .min_by(|a, b| a.selected_k.cmp(&b.selected_k))
        .expect("at least one slot");
    let (k_opt, alpha_opt) = (winner.selected_k, winner.alpha);
    CriterionTrace {
        method: Method::Gap,
        values: entries,
        k_opt,
        alpha_opt,
        auxiliary: Auxiliary::Gap { slots: slots_aux },
    }
}

/// Run the full gap pipeline on a dataset.
///
/// Reference data, reference clusterings, and the data-side grid all derive
/// deterministically from the seed inside `options.cluster`.
pub fn gap_statistic(
    dataset: &FunctionalDataset,
    options: &SelectionOptions,
) -> Result<CriterionTrace, SelectError> {
    SelectionGrid::compute(dataset, options, &[Method::Gap])?.trace(Method::Gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_gap_data(log_w: Vec<Vec<f64>>, refs: Vec<Vec<Vec<f64>>>) -> GapData {
        let slots = log_w.len();
        GapData {
            log_w,
            ref_log_w: refs,
            floor_used: vec![false; slots],
        }
    }

    #[test]
    fn rule_fires_at_first_satisfying_k() {
        // Two reference draws per k keep the arithmetic transparent.
        let data = flat_gap_data(
            vec![vec![0.0, 0.4, 0.2]],
            vec![vec![vec![0.5, 0.4, 0.2], vec![0.7, 0.6, 0.4]]],
        );
        // gap = (0.6, 0.5, 0.3) − (0.0, 0.4, 0.2) ... = (0.6, 0.1, 0.1)
        // s_k = 0.1·sqrt(1.5) ≈ 0.1225
        // k=1: 0.6 >= 0.1 − 0.1225 -> fires immediately.
        let trace = gap_trace(&data, &[Some(0.5)], 1, 3, 2);
        assert_eq!(trace.k_opt, 1);
        let g1 = trace.values[0].value;
        assert!((g1 - 0.6).abs() < 1e-12);
    }

    #[test]
    fn fallback_to_range_top_when_rule_never_fires() {
        // Gaps strictly improve faster than the spread allows.
        let data = flat_gap_data(
            vec![vec![0.0, -5.0, -10.0]],
            vec![vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]]],
        );
        let trace = gap_trace(&data, &[Some(0.5)], 1, 3, 2);
        assert_eq!(trace.k_opt, 3);
        match &trace.auxiliary {
            Auxiliary::Gap { slots } => assert!(slots[0].never_fired),
            other => panic!("unexpected auxiliary {other:?}"),
        }
    }

    #[test]
    fn joint_rule_takes_smallest_k_then_smallest_alpha() {
        let data = flat_gap_data(
            vec![vec![0.0, -5.0], vec![0.0, -0.1]],
            vec![
                vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                vec![vec![0.1, 0.0], vec![0.3, 0.2]],
            ],
        );
        let trace = gap_trace(&data, &[Some(0.2), Some(0.8)], 1, 2, 2);
        // Slot 0 never fires (keeps 2); slot 1 fires at k = 1.
        assert_eq!(trace.k_opt, 1);
        assert_eq!(trace.alpha_opt, Some(0.8));
    }
}
