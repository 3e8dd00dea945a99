//! Distortion-jump selection: transform the per-k distortion `d(k)` to
//! `d(k)^{−t}` with `t = r/2` and pick the k with the largest increase.
//!
//! For dense grids `t` is large enough that `d^{−t}` overflows `f64`, so the
//! transform and the pairwise differences are carried in a signed log
//! representation throughout.

use serde::Serialize;
use std::cmp::Ordering;

use super::{Auxiliary, CriterionTrace, JumpSlotAux, Method, SelectError, SumTable, TraceEntry};

/// A real number `sign · exp(log_abs)` that survives magnitudes far outside
/// the `f64` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignedLog {
    /// −1, 0, or 1.
    pub sign: i8,
    /// Natural log of the magnitude; `−∞` encodes zero.
    pub log_abs: f64,
}

impl SignedLog {
    pub fn zero() -> Self {
        Self {
            sign: 0,
            log_abs: f64::NEG_INFINITY,
        }
    }

    /// `exp(la) − exp(lb)` without leaving the log domain.
    fn exp_diff(la: f64, lb: f64) -> Self {
        if la == lb {
            // Covers the ∞ − ∞ convention: a later unbounded transform never
            // outranks the first one.
            return Self::zero();
        }
        if la > lb {
            let log_abs = if lb == f64::NEG_INFINITY {
                la
            } else {
                la + ln_one_minus((-(la - lb)).exp())
            };
            Self { sign: 1, log_abs }
        } else {
            let log_abs = if la == f64::NEG_INFINITY {
                lb
            } else {
                lb + ln_one_minus((-(lb - la)).exp())
            };
            Self { sign: -1, log_abs }
        }
    }

    /// Collapse to `f64`, saturating to `±∞` outside the representable range.
    pub fn to_f64(self) -> f64 {
        self.sign as f64 * self.log_abs.exp()
    }

    /// Order two represented values.
    pub fn value_cmp(&self, other: &Self) -> Ordering {
        match self.sign.cmp(&other.sign) {
            Ordering::Equal => match self.sign {
                1 => self.log_abs.total_cmp(&other.log_abs),
                -1 => other.log_abs.total_cmp(&self.log_abs),
                _ => Ordering::Equal,
            },
            other_order => other_order,
        }
    }
}

/// `ln(1 − x)` for `x` in `[0, 1)`.
fn ln_one_minus(x: f64) -> f64 {
    (-x).ln_1p()
}

/// `d(k)^{−t}` differences computed directly in `f64`; overflows for large
/// `t`. Index 0 holds `d(0)^{−t} − 0` by the zero convention.
pub fn jump_differences_direct(d: &[f64], t: f64) -> Vec<f64> {
    let transformed: Vec<f64> = d
        .iter()
        .map(|&v| if v == 0.0 { f64::INFINITY } else { v.powf(-t) })
        .collect();
    let mut jumps = Vec::with_capacity(d.len());
    for (i, &curr) in transformed.iter().enumerate() {
        if i == 0 {
            jumps.push(curr);
        } else {
            jumps.push(curr - transformed[i - 1]);
        }
    }
    jumps
}

/// `d(k)^{−t}` differences carried in signed log form; exact ordering for
/// any `t`.
pub fn jump_differences_log(d: &[f64], t: f64) -> Vec<SignedLog> {
    let logs: Vec<f64> = d
        .iter()
        .map(|&v| if v == 0.0 { f64::INFINITY } else { -t * v.ln() })
        .collect();
    let mut jumps = Vec::with_capacity(d.len());
    for (i, &curr) in logs.iter().enumerate() {
        if i == 0 {
            jumps.push(SignedLog { sign: 1, log_abs: curr });
        } else {
            jumps.push(SignedLog::exp_diff(curr, logs[i - 1]));
        }
    }
    jumps
}

/// Select k by the largest jump of the transformed distortion
/// `d(k) = WCS(k)/r`, jointly over the weight grid.
pub fn jump_selection(
    wcs: &SumTable,
    r: usize,
    k_min: usize,
    k_max: usize,
) -> Result<CriterionTrace, SelectError> {
    if k_min < wcs.k_lo() || k_max > wcs.k_hi() {
        return Err(SelectError::MissingK {
            k: if k_min < wcs.k_lo() { k_min } else { k_max },
        });
    }
    let t = r as f64 / 2.0;

    let mut entries = Vec::new();
    let mut slots_aux = Vec::new();
    let mut best: Option<(usize, usize, SignedLog)> = None; // (k, slot, jump)
    for (slot, &alpha) in wcs.alphas().iter().enumerate() {
        let distortions: Vec<f64> = (k_min..=k_max)
            .map(|k| wcs.get(slot, k).expect("span checked") / r as f64)
            .collect();
        let jumps = jump_differences_log(&distortions, t);

        let mut slot_best = 0usize;
        for (idx, jump) in jumps.iter().enumerate() {
            entries.push(TraceEntry {
                k: k_min + idx,
                alpha,
                value: jump.to_f64(),
            });
            if jump.value_cmp(&jumps[slot_best]) == Ordering::Greater {
                slot_best = idx;
            }
        }
        slots_aux.push(JumpSlotAux {
            alpha,
            selected_k: k_min + slot_best,
            distortions,
            jumps: jumps.clone(),
        });

        for (idx, jump) in jumps.iter().enumerate() {
            let k = k_min + idx;
            let better = match &best {
                None => true,
                Some((bk, bs, bj)) => match jump.value_cmp(bj) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => k < *bk || (k == *bk && slot < *bs),
                },
            };
            if better {
                best = Some((k, slot, *jump));
            }
        }
    }

    let (k_opt, slot, _) = best.ok_or(SelectError::SelectionFailed)?;
    Ok(CriterionTrace {
        method: Method::Jump,
        values: entries,
        k_opt,
        alpha_opt: wcs.alphas()[slot],
        auxiliary: Auxiliary::Jump { slots: slots_aux },
    })
}
