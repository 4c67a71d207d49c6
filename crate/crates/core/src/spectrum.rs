//! Critical interaction thresholds and regime classification.
//!
//! For `alpha > 1/3` the walk localizes on an interval whose size is set by
//! the regime index `L`: `alpha` lies strictly between `alpha_threshold(L + 1)`
//! and `alpha_threshold(L)`. The angle `omega` (argument of the complex roots
//! of `alpha X^3 - X^2 + X - alpha`) carries the same information.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative distance to a threshold below which `alpha` counts as critical.
pub const DEFAULT_CRITICAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("alpha = {alpha} is outside the domain alpha > 1/3")]
    Domain { alpha: f64 },
    #[error("alpha = {alpha} is within tolerance of the critical value alpha_{regime} = {threshold}")]
    CriticalValue {
        alpha: f64,
        regime: usize,
        threshold: f64,
    },
    #[error("beta = {beta} must be finite and positive")]
    Beta { beta: f64 },
    #[error("regime index must be at least 1")]
    ZeroRegime,
}

/// Value of `alpha_L`. `alpha_1` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Unbounded,
    Finite(f64),
}

impl Threshold {
    /// `true` when `alpha` lies strictly below this threshold.
    pub fn is_above(self, alpha: f64) -> bool {
        match self {
            Threshold::Unbounded => alpha.is_finite(),
            Threshold::Finite(t) => alpha < t,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Threshold::Unbounded => None,
            Threshold::Finite(t) => Some(t),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Unbounded => f.write_str("inf"),
            Threshold::Finite(t) => write!(f, "{t}"),
        }
    }
}

/// `alpha_L = 1 / (1 + 2 cos(2 pi / (L + 2)))`, with `alpha_1 = +inf`.
///
/// `regime` must be at least 1; `0` is treated as `1`.
pub fn alpha_threshold(regime: usize) -> Threshold {
    if regime <= 1 {
        return Threshold::Unbounded;
    }
    let angle = 2.0 * PI / (regime as f64 + 2.0);
    Threshold::Finite(1.0 / (1.0 + 2.0 * angle.cos()))
}

/// The angle `omega` in `(0, pi)` with `cos(omega) = (1 - alpha) / (2 alpha)`.
pub fn omega(alpha: f64) -> Result<f64, SpectrumError> {
    if !(alpha.is_finite() && alpha > 1.0 / 3.0) {
        return Err(SpectrumError::Domain { alpha });
    }
    let c = (1.0 - alpha) / (2.0 * alpha);
    if c >= 1.0 {
        return Err(SpectrumError::Domain { alpha });
    }
    Ok(c.max(-1.0).acos())
}

/// Regime index `L` with `alpha_{L+1} < alpha < alpha_L`.
///
/// `tol` is relative: `alpha` within `tol * alpha_L` of some threshold is
/// rejected as critical.
pub fn classify(alpha: f64, tol: f64) -> Result<usize, SpectrumError> {
    if !(alpha.is_finite() && alpha > 1.0 / 3.0 + tol) {
        return Err(SpectrumError::Domain { alpha });
    }
    let w = omega(alpha)?;
    // 2 pi / (L + 3) < omega < 2 pi / (L + 2)  <=>  L + 2 < 2 pi / omega < L + 3
    let ratio = 2.0 * PI / w;
    let mut regime = (ratio.floor() as usize).saturating_sub(2).max(1);
    // Rounding in `omega` can land one off near a threshold; settle it on alpha.
    while !alpha_threshold(regime).is_above(alpha) {
        regime -= 1;
    }
    while let Threshold::Finite(t) = alpha_threshold(regime + 1) {
        if alpha > t {
            break;
        }
        regime += 1;
    }
    for candidate in [regime, regime + 1] {
        if let Threshold::Finite(t) = alpha_threshold(candidate) {
            if (alpha - t).abs() <= tol * t {
                return Err(SpectrumError::CriticalValue {
                    alpha,
                    regime: candidate,
                    threshold: t,
                });
            }
        }
    }
    Ok(regime)
}

/// Model parameters with the derived regime index and angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub alpha: f64,
    pub beta: f64,
    /// Regime index `L`.
    pub regime: usize,
    pub omega: f64,
}

impl Params {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, SpectrumError> {
        Self::with_tolerance(alpha, beta, DEFAULT_CRITICAL_TOL)
    }

    pub fn with_tolerance(alpha: f64, beta: f64, tol: f64) -> Result<Self, SpectrumError> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(SpectrumError::Beta { beta });
        }
        let regime = classify(alpha, tol)?;
        Ok(Params {
            alpha,
            beta,
            regime,
            omega: omega(alpha)?,
        })
    }
}

/// Rows `(L, alpha_L)` for `L = 1..=max_regime`.
pub fn threshold_table(max_regime: usize) -> Vec<(usize, Threshold)> {
    (1..=max_regime).map(|l| (l, alpha_threshold(l))).collect()
}

/// `n` values of `alpha` inside `(alpha_{L+1}, alpha_L)`, evenly spaced in
/// `omega` at the midpoints of `n` equal cells.
pub fn regime_alphas(regime: usize, n: usize) -> Vec<f64> {
    let lo = 2.0 * PI / (regime as f64 + 3.0);
    let hi = 2.0 * PI / (regime as f64 + 2.0);
    (0..n)
        .map(|i| {
            let w = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
            1.0 / (1.0 + 2.0 * w.cos())
        })
        .collect()
}
