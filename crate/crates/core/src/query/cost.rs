//! Closed-form scan/seek counts for correlated path queries on balanced
//! trees.
//!
//! With fan-out `f` and level selectivities `s_1..s_d`, level `k` scans the
//! children of the `Π_{i<k} s_i · f^{k-1}` contexts that survived, giving
//!
//! ```text
//! n_scan = Σ_{k=1..d} (Π_{i<k} s_i) f^k        ≤ s^d f^{d+1}
//! n_seek = Σ_{k=1..d} (Π_{i<k} s_i) f^{k-1}    ≤ s^{d-1} f^d
//! ```
//!
//! where `s = max s_i`; the upper bounds hold when `s·f ≥ 2`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub n_scan: f64,
    pub n_seek: f64,
    pub bound_scan: f64,
    pub bound_seek: f64,
}

impl CostEstimate {
    /// Whether the closed-form bounds are guaranteed to dominate the series.
    pub fn bounds_apply(f: f64, s: &[f64]) -> bool {
        s.iter().cloned().fold(0.0, f64::max) * f >= 2.0
    }
}

/// `s` holds one selectivity per level; only the first `d-1` influence the
/// counts (the last level's selectivity filters output, not scans).
pub fn estimate_cost(f: f64, h: usize, d: usize, s: &[f64]) -> Result<CostEstimate> {
    if !(f >= 2.0) {
        return Err(Error::InvalidArgument(format!("fan-out must be >= 2, got {f}")));
    }
    if d < 1 || d > h {
        return Err(Error::InvalidArgument(format!("need 1 <= d <= h, got d={d}, h={h}")));
    }
    if s.len() < d {
        return Err(Error::InvalidArgument(format!("need {d} selectivities, got {}", s.len())));
    }
    if let Some(bad) = s.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
        return Err(Error::InvalidArgument(format!("selectivity {bad} outside (0, 1]")));
    }
    let mut n_scan = 0.0;
    let mut n_seek = 0.0;
    let mut surviving = 1.0;
    for k in 1..=d {
        n_seek += surviving * f.powi(k as i32 - 1);
        n_scan += surviving * f.powi(k as i32);
        surviving *= s[k - 1];
    }
    let smax = s[..d].iter().cloned().fold(0.0, f64::max);
    Ok(CostEstimate {
        n_scan,
        n_seek,
        bound_scan: smax.powi(d as i32) * f.powi(d as i32 + 1),
        bound_seek: smax.powi(d as i32 - 1) * f.powi(d as i32),
    })
}
