//! Generalized Fibonacci systems describing limiting normalized local times.
//!
//! For a window of `K + 2` sites the candidate profile `(l_0, ..., l_{K+2})`
//! satisfies `d_1 = ... = d_K = 0`, `l_0 = 0` and `l_1 + ... + l_{K+1} = 1`,
//! where `d_j = -alpha l_{j-1} + l_j - l_{j+1} + alpha l_{j+2}`. The boundary
//! streams `d_0 = l_0 - l_1 + alpha l_2` and
//! `d_{K+1} = -alpha l_K + l_{K+1} - l_{K+2}` decide whether the window holds
//! the walker.

pub mod dense;

use serde::Serialize;
use thiserror::Error;

use crate::spectrum::{self, SpectrumError, DEFAULT_CRITICAL_TOL};
use dense::{DenseError, Matrix};

/// Residual bound for the recurrence identities.
pub const RECURRENCE_TOL: f64 = 1e-10;

/// Lower bound tolerance when deciding `l_j >= 0` on a computed solution.
const NONNEG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinsysError {
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error("K = {k} is outside the range allowed for regime L = {regime}: {reason}")]
    Regime {
        k: usize,
        regime: usize,
        reason: &'static str,
    },
    #[error("alpha = {alpha} does not lie in the open interval of regime L = {regime}")]
    AlphaOutsideRegime { alpha: f64, regime: usize },
    #[error("system has no admissible solution (K = {k}, alpha = {alpha})")]
    Infeasible { k: usize, alpha: f64 },
    #[error("solution vector has length {got}, expected {expected}")]
    Shape { got: usize, expected: usize },
    #[error("identity check failed: residual {residual:e}")]
    IdentityViolation { residual: f64 },
}

/// A solution of the homogeneous system for a window with `K` interior sites.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSolution {
    #[serde(rename = "K")]
    pub k: usize,
    /// `l_0 ..= l_{K+2}`.
    pub l: Vec<f64>,
    pub d0: f64,
    #[serde(rename = "dK1")]
    pub d_k1: f64,
    pub unique: bool,
}

impl SystemSolution {
    fn from_vector(k: usize, alpha: f64, l: Vec<f64>, unique: bool) -> Self {
        let (d0, d_k1) = boundary_streams(&l, alpha);
        SystemSolution {
            k,
            l,
            d0,
            d_k1,
            unique,
        }
    }

    /// `max_j |d_j|` over the interior equations `j = 1..=K`.
    pub fn recurrence_residual(&self, alpha: f64) -> f64 {
        (1..=self.k)
            .map(|j| interior_stream(&self.l, j, alpha).abs())
            .fold(0.0, f64::max)
    }

    /// `|sum_{j=1}^{K+1} l_j - 1|`.
    pub fn normalization_residual(&self) -> f64 {
        (self.l[1..=self.k + 1].iter().sum::<f64>() - 1.0).abs()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.l[1..].iter().all(|&v| v >= -NONNEG_TOL)
    }
}

/// `d_j = -alpha l_{j-1} + l_j - l_{j+1} + alpha l_{j+2}` for `1 <= j <= len - 3`.
pub fn interior_stream(l: &[f64], j: usize, alpha: f64) -> f64 {
    -alpha * l[j - 1] + l[j] - l[j + 1] + alpha * l[j + 2]
}

/// `(d_0, d_{K+1})` for a vector `l_0 ..= l_{K+2}`.
pub fn boundary_streams(l: &[f64], alpha: f64) -> (f64, f64) {
    let n = l.len();
    let d0 = l[0] - l[1] + alpha * l[2];
    let d_k1 = -alpha * l[n - 3] + l[n - 2] - l[n - 1];
    (d0, d_k1)
}

fn regime_of(alpha: f64) -> Result<usize, LinsysError> {
    Ok(spectrum::classify(alpha, DEFAULT_CRITICAL_TOL)?)
}

/// Closed-form solution with `l_{K+2} = 0`, valid for `K <= L + 1`:
/// `l_j = sin((K+2-j) omega/2) sin(j omega/2) / Z`.
pub fn solve_closed(k: usize, alpha: f64) -> Result<SystemSolution, LinsysError> {
    let regime = regime_of(alpha)?;
    if k > regime + 1 {
        return Err(LinsysError::Regime {
            k,
            regime,
            reason: "closed form requires K <= L + 1",
        });
    }
    let w = spectrum::omega(alpha)?;
    let span = k as f64 + 2.0;
    let raw: Vec<f64> = (0..=k + 2)
        .map(|j| ((span - j as f64) * w / 2.0).sin() * (j as f64 * w / 2.0).sin())
        .collect();
    let z: f64 = raw[1..=k + 1].iter().sum();
    let mut l: Vec<f64> = raw.iter().map(|v| v / z).collect();
    l[0] = 0.0;
    l[k + 2] = 0.0;
    let d0 = -alpha * ((k as f64 + 3.0) * w / 2.0).sin() * (w / 2.0).sin() / z;
    Ok(SystemSolution {
        k,
        l,
        d0,
        d_k1: -d0,
        unique: true,
    })
}

/// Assemble the `(K+3) x (K+3)` system `l_0 = 0, d_1..d_K = 0, sum = 1, l_{K+2} = lk2`.
fn homogeneous_system(k: usize, alpha: f64, lk2: f64) -> (Matrix, Vec<f64>) {
    let n = k + 3;
    let mut a = Matrix::zeros(n, n);
    let mut b = vec![0.0; n];
    a.set(0, 0, 1.0);
    for j in 1..=k {
        a.set(j, j - 1, -alpha);
        a.set(j, j, 1.0);
        a.set(j, j + 1, -1.0);
        a.set(j, j + 2, alpha);
    }
    for c in 1..=k + 1 {
        a.set(k + 1, c, 1.0);
    }
    b[k + 1] = 1.0;
    a.set(k + 2, k + 2, 1.0);
    b[k + 2] = lk2;
    (a, b)
}

/// Direct solve with a prescribed `l_{K+2}`. Rank-deficient systems return
/// their minimum-norm solution with `unique = false`.
pub fn solve_direct(k: usize, alpha: f64, lk2: f64) -> Result<SystemSolution, LinsysError> {
    spectrum::omega(alpha)?;
    let (a, b) = homogeneous_system(k, alpha, lk2);
    match dense::solve(&a, &b) {
        Ok(s) => {
            let unique = s.unique();
            Ok(SystemSolution::from_vector(k, alpha, s.x, unique))
        }
        Err(DenseError::Inconsistent { .. }) => Err(LinsysError::Infeasible { k, alpha }),
        Err(DenseError::DimensionMismatch) => unreachable!("system is square by construction"),
    }
}

/// Solution of the affine system with prescribed interior streams.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineSolution {
    pub d_in: Vec<f64>,
    pub l: Vec<f64>,
    pub d0: f64,
    #[serde(rename = "dL1")]
    pub d_l1: f64,
    /// `c_1 ..= c_L`.
    pub c: Vec<f64>,
    /// `d_0` of the homogeneous closed-form solution for `K = L`.
    pub d0_base: f64,
}

impl AffineSolution {
    /// Residuals of `d_{L+1} = -d0(L) - sum c_k d_k` and `d_0 = d0(L) - sum c_{L+1-k} d_k`.
    pub fn identity_residuals(&self) -> (f64, f64) {
        let n = self.c.len();
        let right: f64 = self.c.iter().zip(&self.d_in).map(|(c, d)| c * d).sum();
        let left: f64 = (0..n).map(|k| self.c[n - 1 - k] * self.d_in[k]).sum();
        (
            (self.d_l1 - (-self.d0_base - right)).abs(),
            (self.d0 - (self.d0_base - left)).abs(),
        )
    }
}

/// Matrix `M` of the affine system: rows `l_0 = 0`, `l_{L+2} = 0`, the
/// normalization, then `d_1 .. d_L`.
pub fn affine_matrix(regime: usize, alpha: f64) -> Matrix {
    let n = regime + 3;
    let mut m = Matrix::zeros(n, n);
    m.set(0, 0, 1.0);
    m.set(1, n - 1, 1.0);
    for c in 1..=regime + 1 {
        m.set(2, c, 1.0);
    }
    for j in 1..=regime {
        let r = 2 + j;
        m.set(r, j - 1, -alpha);
        m.set(r, j, 1.0);
        m.set(r, j + 1, -1.0);
        m.set(r, j + 2, alpha);
    }
    m
}

/// Unique solution of the affine system `AS(d_1, ..., d_L)` for
/// `alpha` in the open interval of regime `L`, along with the constants `c_k`.
pub fn solve_affine(
    regime: usize,
    alpha: f64,
    d_in: &[f64],
) -> Result<AffineSolution, LinsysError> {
    if regime == 0 {
        return Err(SpectrumError::ZeroRegime.into());
    }
    if d_in.len() != regime {
        return Err(LinsysError::Shape {
            got: d_in.len(),
            expected: regime,
        });
    }
    match spectrum::classify(alpha, DEFAULT_CRITICAL_TOL) {
        Ok(l) if l == regime => {}
        _ => return Err(LinsysError::AlphaOutsideRegime { alpha, regime }),
    }
    let m = affine_matrix(regime, alpha);
    let n = regime + 3;
    let unit = |i: usize| {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    };
    let inverse_col = |i: usize| -> Result<Vec<f64>, LinsysError> {
        dense::solve(&m, &unit(i))
            .map(|s| s.x)
            .map_err(|_| LinsysError::Infeasible { k: regime, alpha })
    };
    // Row vector picking d_{L+1} = -alpha l_L + l_{L+1}.
    let pick = |x: &[f64]| -alpha * x[regime] + x[regime + 1];

    let base = inverse_col(2)?;
    let d0_base = -pick(&base);
    let c = (1..=regime)
        .map(|k| inverse_col(2 + k).map(|col| -pick(&col)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rhs = vec![0.0; n];
    rhs[2] = 1.0;
    rhs[3..].copy_from_slice(d_in);
    let l = dense::solve(&m, &rhs)
        .map_err(|_| LinsysError::Infeasible { k: regime, alpha })?
        .x;
    let d0 = -l[1] + alpha * l[2];
    let d_l1 = -alpha * l[regime] + l[regime + 1];
    Ok(AffineSolution {
        d_in: d_in.to_vec(),
        l,
        d0,
        d_l1,
        c,
        d0_base,
    })
}

/// The one-parameter family of solutions of the homogeneous system,
/// `l(t) = base + t * direction`, with `direction` scaled to unit max-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFamily {
    pub k: usize,
    pub alpha: f64,
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
}

impl SolutionFamily {
    /// Builds the family from the two basis sequences with `(l_0, l_1, l_2)`
    /// equal to `(0, 1, 0)` and `(0, 0, 1)`, cut by the normalization.
    pub fn new(k: usize, alpha: f64) -> Result<Self, LinsysError> {
        spectrum::omega(alpha)?;
        let seq = |l1: f64, l2: f64| {
            let mut l = vec![0.0; k + 3];
            l[1] = l1;
            l[2] = l2;
            for j in 1..=k {
                l[j + 2] = (alpha * l[j - 1] - l[j] + l[j + 1]) / alpha;
            }
            l
        };
        let u = seq(1.0, 0.0);
        let v = seq(0.0, 1.0);
        let su: f64 = u[1..=k + 1].iter().sum();
        let sv: f64 = v[1..=k + 1].iter().sum();
        let norm2 = su * su + sv * sv;
        if norm2 == 0.0 {
            return Err(LinsysError::Infeasible { k, alpha });
        }
        let base: Vec<f64> = u
            .iter()
            .zip(&v)
            .map(|(a, b)| (su * a + sv * b) / norm2)
            .collect();
        let mut direction: Vec<f64> = u.iter().zip(&v).map(|(a, b)| -sv * a + su * b).collect();
        let scale = direction.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        direction.iter_mut().for_each(|x| *x /= scale);
        Ok(SolutionFamily {
            k,
            alpha,
            base,
            direction,
        })
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        self.base
            .iter()
            .zip(&self.direction)
            .map(|(b, d)| b + t * d)
            .collect()
    }

    pub fn solution_at(&self, t: f64) -> SystemSolution {
        SystemSolution::from_vector(self.k, self.alpha, self.at(t), false)
    }

    /// Parameter interval on which `l_1, ..., l_{K+2} >= 0`, if non-empty.
    pub fn nonnegative_interval(&self) -> Option<(f64, f64)> {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for j in 1..self.base.len() {
            let (b, d) = (self.base[j], self.direction[j]);
            if d.abs() < 1e-14 {
                if b < -NONNEG_TOL {
                    return None;
                }
                continue;
            }
            let root = -b / d;
            if d > 0.0 {
                lo = lo.max(root);
            } else {
                hi = hi.min(root);
            }
        }
        if lo <= hi + 1e-12 {
            Some((lo, hi.max(lo)))
        } else {
            None
        }
    }

    pub fn d0_at(&self, t: f64) -> f64 {
        boundary_streams(&self.at(t), self.alpha).0
    }
}

/// Minimum of `d_0` over the non-negative solutions of the system with
/// `K >= L` interior sites. The feasible set is a segment on which `d_0` is
/// affine, so the minimum sits at an endpoint.
pub fn c_oracle(k: usize, alpha: f64) -> Result<f64, LinsysError> {
    let regime = regime_of(alpha)?;
    if k < regime {
        return Err(LinsysError::Regime {
            k,
            regime,
            reason: "c(K) is defined for K >= L",
        });
    }
    let family = SolutionFamily::new(k, alpha)?;
    let (lo, hi) = family
        .nonnegative_interval()
        .ok_or(LinsysError::Infeasible { k, alpha })?;
    Ok(family.d0_at(lo).min(family.d0_at(hi)))
}

/// `l_{L+2} - alpha l_{L+1}` together with its trigonometric expression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamGap {
    pub value: f64,
    /// Right-hand side in terms of `l_1` and `l_{L+1}`.
    pub identity: f64,
    pub residual: f64,
    /// `c_oracle(K, alpha)` when the solution is non-negative.
    pub c_oracle: Option<f64>,
}

/// Evaluates the stream gap and checks it against its closed expression and,
/// for non-negative solutions, against `-c_oracle(K, alpha)`.
pub fn stream_gap(k: usize, alpha: f64, sol: &SystemSolution) -> Result<StreamGap, LinsysError> {
    let regime = regime_of(alpha)?;
    if k < regime {
        return Err(LinsysError::Regime {
            k,
            regime,
            reason: "stream gap needs K >= L",
        });
    }
    if sol.l.len() != k + 3 {
        return Err(LinsysError::Shape {
            got: sol.l.len(),
            expected: k + 3,
        });
    }
    let w = spectrum::omega(alpha)?;
    let lf = regime as f64;
    let denom = (lf * w / 2.0).sin();
    let l = &sol.l;
    let value = l[regime + 2] - alpha * l[regime + 1];
    let identity = -((lf + 2.0) * w / 2.0).sin() / denom * l[1]
        + 2.0 * alpha * (w / 2.0).cos() * ((lf + 3.0) * w / 2.0).sin() / denom * l[regime + 1];
    let residual = (value - identity).abs();
    let scale = l.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if residual > RECURRENCE_TOL * scale {
        return Err(LinsysError::IdentityViolation { residual });
    }
    let c_oracle = if sol.is_nonnegative() {
        let c = c_oracle(k, alpha)?;
        if value > -c + 1e-9 {
            return Err(LinsysError::IdentityViolation {
                residual: value + c,
            });
        }
        Some(c)
    } else {
        None
    };
    Ok(StreamGap {
        value,
        identity,
        residual,
        c_oracle,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMethod {
    Closed,
    Family,
}

/// One row of [`sign_scan`]. For closed-form rows the min and max coincide.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignRow {
    pub k: usize,
    pub method: ScanMethod,
    pub feasible: bool,
    pub d0_min: f64,
    pub d0_max: f64,
    pub dk1_min: f64,
    pub dk1_max: f64,
}

/// Boundary-stream signs for `K = 0..=kmax`: closed form up to `L + 1`,
/// endpoints of the non-negative segment beyond.
pub fn sign_scan(alpha: f64, kmax: usize) -> Result<Vec<SignRow>, LinsysError> {
    let regime = regime_of(alpha)?;
    (0..=kmax)
        .map(|k| {
            if k <= regime + 1 {
                let s = solve_closed(k, alpha)?;
                return Ok(SignRow {
                    k,
                    method: ScanMethod::Closed,
                    feasible: true,
                    d0_min: s.d0,
                    d0_max: s.d0,
                    dk1_min: s.d_k1,
                    dk1_max: s.d_k1,
                });
            }
            let family = SolutionFamily::new(k, alpha)?;
            Ok(match family.nonnegative_interval() {
                Some((lo, hi)) => {
                    let a = boundary_streams(&family.at(lo), alpha);
                    let b = boundary_streams(&family.at(hi), alpha);
                    SignRow {
                        k,
                        method: ScanMethod::Family,
                        feasible: true,
                        d0_min: a.0.min(b.0),
                        d0_max: a.0.max(b.0),
                        dk1_min: a.1.min(b.1),
                        dk1_max: a.1.max(b.1),
                    }
                }
                None => SignRow {
                    k,
                    method: ScanMethod::Family,
                    feasible: false,
                    d0_min: f64::NAN,
                    d0_max: f64::NAN,
                    dk1_min: f64::NAN,
                    dk1_max: f64::NAN,
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
