//! Index-style criteria evaluated from the summed tables: the
//! between/within ratio, the scaled-difference ratio, the sequential
//! within-ratio threshold, and the silhouette trace.

use super::{
    Auxiliary, CriterionTrace, Method, SelectError, SlotSelection, SumTable, TraceEntry,
    HARTIGAN_THRESHOLD,
};

fn joint_argmax(entries: &[TraceEntry]) -> Option<(usize, Option<f64>, f64)> {
    // k-major iteration with a strict comparison: ties resolve to the
    // smallest k, then the smallest alpha.
    let mut best: Option<(usize, Option<f64>, f64)> = None;
    let mut ks: Vec<usize> = entries.iter().map(|e| e.k).collect();
    ks.sort_unstable();
    ks.dedup();
    for &k in &ks {
        for entry in entries.iter().filter(|e| e.k == k) {
            if entry.value.is_nan() {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, _, value)) => entry.value > value,
            };
            if better {
                best = Some((entry.k, entry.alpha, entry.value));
            }
        }
    }
    best
}

/// Between/within variance-ratio index, largest value wins.
pub fn ch_index(
    wcs: &SumTable,
    bcs: &SumTable,
    n: usize,
    k_min: usize,
    k_max: usize,
) -> Result<CriterionTrace, SelectError> {
    if wcs.alphas() != bcs.alphas() {
        return Err(SelectError::SlotMismatch);
    }
    let lo = k_min.max(2).max(wcs.k_lo()).max(bcs.k_lo());
    let hi = k_max.min(n.saturating_sub(1)).min(wcs.k_hi()).min(bcs.k_hi());
    if lo > hi {
        return Err(SelectError::NoEvaluableK {
            method: Method::Ch,
            k_min,
            k_max,
        });
    }

    let mut entries = Vec::new();
    for (slot, &alpha) in wcs.alphas().iter().enumerate() {
        for k in lo..=hi {
            let within = wcs.get(slot, k).expect("k within span");
            let between = bcs.get(slot, k).expect("k within span");
            let value = if between == 0.0 {
                0.0
            } else if within == 0.0 {
                f64::INFINITY
            } else {
                (between / (k - 1) as f64) / (within / (n - k) as f64)
            };
            entries.push(TraceEntry { k, alpha, value });
        }
    }

    let (k_opt, alpha_opt, _) = joint_argmax(&entries).ok_or(SelectError::SelectionFailed)?;
    Ok(CriterionTrace {
        method: Method::Ch,
        values: entries,
        k_opt,
        alpha_opt,
        auxiliary: Auxiliary::None,
    })
}

/// Ratio of scaled within-sum differences, largest value wins.
///
/// `DIFF(k+1) = 0` maps to `+∞`, resolved by the smallest-k tie rule.
pub fn kl_index(
    wcs: &SumTable,
    r: usize,
    k_min: usize,
    k_max: usize,
) -> Result<CriterionTrace, SelectError> {
    let exponent = 2.0 / r as f64;
    let diff = |slot: usize, k: usize| -> Result<f64, SelectError> {
        let prev = wcs.require(slot, k - 1)?;
        let curr = wcs.require(slot, k)?;
        Ok(((k - 1) as f64).powf(exponent) * prev - (k as f64).powf(exponent) * curr)
    };

    let lo = k_min.max(2).max(wcs.k_lo() + 1);
    let hi = k_max.min(wcs.k_hi().saturating_sub(1));
    if lo > hi {
        return Err(SelectError::NoEvaluableK {
            method: Method::Kl,
            k_min,
            k_max,
        });
    }

    let mut entries = Vec::new();
    for (slot, &alpha) in wcs.alphas().iter().enumerate() {
        for k in lo..=hi {
            let numerator = diff(slot, k)?;
            let denominator = diff(slot, k + 1)?;
            let value = if denominator == 0.0 {
                f64::INFINITY
            } else {
                (numerator / denominator).abs()
            };
            entries.push(TraceEntry { k, alpha, value });
        }
    }

    let (k_opt, alpha_opt, _) = joint_argmax(&entries).ok_or(SelectError::SelectionFailed)?;
    Ok(CriterionTrace {
        method: Method::Kl,
        values: entries,
        k_opt,
        alpha_opt,
        auxiliary: Auxiliary::None,
    })
}

/// Sequential within-ratio rule: the first k whose statistic drops to the
/// threshold wins; per slot, then the slot with the smallest selection.
pub fn hartigan_index(
    wcs: &SumTable,
    n: usize,
    k_min: usize,
    k_max: usize,
) -> Result<CriterionTrace, SelectError> {
    let lo = k_min.max(wcs.k_lo());
    let hi = k_max.min(wcs.k_hi().saturating_sub(1));
    if lo > hi {
        return Err(SelectError::NoEvaluableK {
            method: Method::Hartigan,
            k_min,
            k_max,
        });
    }

    let mut entries = Vec::new();
    let mut selections = Vec::new();
    for (slot, &alpha) in wcs.alphas().iter().enumerate() {
        let mut selected = None;
        for k in lo..=hi {
            let within = wcs.require(slot, k)?;
            let next = wcs.require(slot, k + 1)?;
            let value = if next == 0.0 {
                if within == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (n as f64 - k as f64 - 1.0) * (within / next - 1.0)
            };
            entries.push(TraceEntry { k, alpha, value });
            if selected.is_none() && value <= HARTIGAN_THRESHOLD {
                selected = Some(k);
            }
        }
        selections.push(SlotSelection {
            alpha,
            k: selected.unwrap_or(k_max),
            never_fired: selected.is_none(),
        });
    }

    let winner = selections
        .iter()
        .min_by(|a, b| a.k.cmp(&b.k))
        .expect("at least one slot");
    Ok(CriterionTrace {
        method: Method::Hartigan,
        values: entries,
        k_opt: winner.k,
        alpha_opt: winner.alpha,
        auxiliary: Auxiliary::Threshold { selections },
    })
}

/// Average silhouette width, largest value wins. `k = 1` is excluded.
pub fn silhouette_trace(
    sil: &SumTable,
    k_min: usize,
    k_max: usize,
) -> Result<CriterionTrace, SelectError> {
    let lo = k_min.max(2).max(sil.k_lo());
    let hi = k_max.min(sil.k_hi());
    if lo > hi {
        return Err(SelectError::NoEvaluableK {
            method: Method::Silhouette,
            k_min,
            k_max,
        });
    }

    let mut entries = Vec::new();
    for (slot, &alpha) in sil.alphas().iter().enumerate() {
        for k in lo..=hi {
            entries.push(TraceEntry {
                k,
                alpha,
                value: sil.get(slot, k).expect("k within span"),
            });
        }
    }
    let (k_opt, alpha_opt, _) = joint_argmax(&entries).ok_or(SelectError::SelectionFailed)?;
    Ok(CriterionTrace {
        method: Method::Silhouette,
        values: entries,
        k_opt,
        alpha_opt,
        auxiliary: Auxiliary::None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(alphas: Vec<Option<f64>>, k_lo: usize, rows: Vec<Vec<f64>>) -> SumTable {
        SumTable::new(alphas, k_lo, rows).unwrap()
    }

    #[test]
    fn ch_hand_instance() {
        // WCS(2) = 1, BCS(2) = 9, n = 10 gives CH(2) = (9/1)/(1/8) = 72.
        let wcs = table(vec![Some(0.5)], 2, vec![vec![1.0]]);
        let bcs = table(vec![Some(0.5)], 2, vec![vec![9.0]]);
        let trace = ch_index(&wcs, &bcs, 10, 2, 2).unwrap();
        assert_eq!(trace.values.len(), 1);
        assert!((trace.values[0].value - 72.0).abs() < 1e-12);
        assert_eq!(trace.k_opt, 2);
        assert_eq!(trace.alpha_opt, Some(0.5));
    }

    #[test]
    fn ch_degenerate_between_picks_smallest_k() {
        let wcs = table(vec![Some(0.0)], 2, vec![vec![3.0, 2.0, 1.0]]);
        let bcs = table(vec![Some(0.0)], 2, vec![vec![0.0, 0.0, 0.0]]);
        let trace = ch_index(&wcs, &bcs, 12, 2, 4).unwrap();
        assert!(trace.values.iter().all(|e| e.value == 0.0));
        assert_eq!(trace.k_opt, 2);
    }

    #[test]
    fn ch_rejects_k1_only_range() {
        let wcs = table(vec![Some(0.5)], 1, vec![vec![1.0]]);
        let bcs = table(vec![Some(0.5)], 1, vec![vec![1.0]]);
        assert!(matches!(
            ch_index(&wcs, &bcs, 10, 1, 1),
            Err(SelectError::NoEvaluableK { .. })
        ));
    }

    #[test]
    fn kl_injected_sequence() {
        // WCS = (10, 4, 3.6, 3.5) on k = 1..4, r = 30, selection over 2..=3.
        let wcs = table(vec![Some(0.5)], 1, vec![vec![10.0, 4.0, 3.6, 3.5]]);
        let trace = kl_index(&wcs, 30, 2, 3).unwrap();

        let e = 2.0 / 30.0;
        let diff = |k: f64, prev: f64, curr: f64| (k - 1.0).powf(e) * prev - k.powf(e) * curr;
        let d2 = diff(2.0, 10.0, 4.0);
        let d3 = diff(3.0, 4.0, 3.6);
        let d4 = diff(4.0, 3.6, 3.5);
        let expect_kl2 = (d2 / d3).abs();
        let expect_kl3 = (d3 / d4).abs();

        assert_eq!(trace.values.len(), 2);
        assert!((trace.values[0].value - expect_kl2).abs() <= 1e-12 * expect_kl2);
        assert!((trace.values[1].value - expect_kl3).abs() <= 1e-12 * expect_kl3);
        assert_eq!(trace.k_opt, 2);
    }

    #[test]
    fn kl_constant_wcs_stays_finite() {
        let wcs = table(vec![Some(0.5)], 1, vec![vec![5.0; 6]]);
        let trace = kl_index(&wcs, 30, 2, 4).unwrap();
        for entry in &trace.values {
            assert!(entry.value.is_finite());
            assert!(entry.value > 0.0);
        }
    }

    #[test]
    fn kl_zero_denominator_prefers_smallest_k() {
        // WCS hits zero from k = 3 on, so DIFF(4) = DIFF(5) = 0 and both
        // KL(3) and KL(4) are infinite; the tie resolves to k = 3.
        let wcs = table(vec![Some(0.5)], 1, vec![vec![30.0, 9.0, 0.0, 0.0, 0.0]]);
        let trace = kl_index(&wcs, 10, 2, 4).unwrap();
        let k3 = trace.values.iter().find(|t| t.k == 3).unwrap();
        let k4 = trace.values.iter().find(|t| t.k == 4).unwrap();
        assert!(k3.value.is_infinite());
        assert!(k4.value.is_infinite());
        assert_eq!(trace.k_opt, 3);
    }

    #[test]
    fn hartigan_injected_sequence() {
        // WCS = (100, 50, 49), n = 60: H(1) = 58 > 10, H(2) ≈ 1.163 <= 10.
        let wcs = table(vec![Some(0.5)], 1, vec![vec![100.0, 50.0, 49.0]]);
        let trace = hartigan_index(&wcs, 60, 1, 2).unwrap();
        assert!((trace.values[0].value - 58.0).abs() < 1e-12);
        assert!((trace.values[1].value - 57.0 * (50.0 / 49.0 - 1.0)).abs() < 1e-12);
        assert_eq!(trace.k_opt, 2);
    }

    #[test]
    fn hartigan_flat_within_fires_immediately() {
        let wcs = table(vec![Some(0.5)], 1, vec![vec![5.0, 5.0, 5.0]]);
        let trace = hartigan_index(&wcs, 40, 1, 2).unwrap();
        assert_eq!(trace.values[0].value, 0.0);
        assert_eq!(trace.k_opt, 1);
    }

    #[test]
    fn hartigan_never_met_falls_back_to_range_top() {
        let wcs = table(vec![Some(0.5)], 1, vec![vec![1000.0, 500.0, 250.0, 125.0]]);
        let trace = hartigan_index(&wcs, 200, 1, 3).unwrap();
        assert_eq!(trace.k_opt, 3);
        match &trace.auxiliary {
            Auxiliary::Threshold { selections } => {
                assert!(selections[0].never_fired);
            }
            other => panic!("unexpected auxiliary {other:?}"),
        }
    }

    #[test]
    fn hartigan_joint_prefers_smallest_selected_k() {
        // Slot alpha=0.0 fires at k=2, slot alpha=0.5 at k=1.
        let wcs = table(
            vec![Some(0.0), Some(0.5)],
            1,
            vec![vec![100.0, 50.0, 49.0], vec![50.0, 49.0, 48.0]],
        );
        let trace = hartigan_index(&wcs, 60, 1, 2).unwrap();
        assert_eq!(trace.k_opt, 1);
        assert_eq!(trace.alpha_opt, Some(0.5));
    }

    #[test]
    fn silhouette_trace_argmax_and_k1_exclusion() {
        let sil = table(
            vec![Some(0.0), Some(1.0)],
            2,
            vec![vec![0.4, 0.7, 0.2], vec![0.4, 0.1, 0.0]],
        );
        let trace = silhouette_trace(&sil, 1, 4).unwrap();
        assert_eq!(trace.k_opt, 3);
        assert_eq!(trace.alpha_opt, Some(0.0));
        assert!(trace.values.iter().all(|e| e.k >= 2));
    }
}
