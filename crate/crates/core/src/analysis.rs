//! Localization detection on finite trajectories and comparison of the tail
//! local-time profile with the solutions of the linear system.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linsys::{self, LinsysError, SolutionFamily};
use crate::spectrum::Params;
use crate::stats::{wilson, Interval, Z95};
use crate::walk::{WalkError, WalkState};

/// Shortest trajectory (in steps) accepted by [`detect_localization`].
pub const MIN_STEPS: usize = 1000;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;
/// A window site must receive at least `tail / (SUSTAIN_DIVISOR * size)` visits.
pub const SUSTAIN_DIVISOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("trajectory has {steps} steps, need at least {min}")]
    TooShort { steps: usize, min: usize },
    #[error("tail fraction {value} must lie in (0, 1)")]
    TailFraction { value: f64 },
    #[error("run is not localized")]
    NotLocalized,
    #[error(
        "no closed form for window size {size} in regime L = {regime}; \
         distance to the feasible segment: {distance:?}"
    )]
    NoTheory {
        size: usize,
        regime: usize,
        distance: Option<f64>,
    },
    #[error(transparent)]
    Linsys(#[from] LinsysError),
    #[error(transparent)]
    Walk(#[from] WalkError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Sites visited during the tail, `[a, b]`.
    pub window: [i64; 2],
    pub size: usize,
    pub localized: bool,
    /// Tail increments of `l(a+1), ..., l(b)`, normalized to sum 1.
    pub profile: Vec<f64>,
    /// Max deviation from the matching system solution, once compared.
    pub deviation: Option<f64>,
    /// `|Delta_k(j)| / k` at the final step, interior sites `a < j < b`.
    pub stream_rate: BTreeMap<i64, f64>,
    pub range_final: [i64; 2],
    pub steps: usize,
    pub tail_steps: usize,
    /// Minimum visit count a window site needed.
    pub visit_threshold: f64,
}

fn tail_len(steps: usize, tail_fraction: f64) -> usize {
    ((steps as f64 * tail_fraction).ceil() as usize).clamp(1, steps)
}

/// Estimates the set of sites visited infinitely often from the final
/// `tail_fraction` of `positions` (which start at 0).
pub fn detect_localization(
    params: &Params,
    positions: &[i64],
    tail_fraction: f64,
) -> Result<RunSummary, AnalysisError> {
    let steps = positions.len().saturating_sub(1);
    if steps < MIN_STEPS {
        return Err(AnalysisError::TooShort {
            steps,
            min: MIN_STEPS,
        });
    }
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(AnalysisError::TailFraction {
            value: tail_fraction,
        });
    }
    let tail = tail_len(steps, tail_fraction);
    let start = steps - tail;
    let tail_pos = &positions[start..];

    let a = *tail_pos.iter().min().unwrap();
    let b = *tail_pos.iter().max().unwrap();
    let size = (b - a + 1) as usize;

    let mut visits = vec![0u64; size];
    for &x in &tail_pos[1..] {
        visits[(x - a) as usize] += 1;
    }
    let visit_threshold = tail as f64 / (SUSTAIN_DIVISOR * size as f64);
    let localized = visits.iter().all(|&v| v as f64 >= visit_threshold);

    // Edge {j-1, j} has index j - a - 1 for a < j <= b.
    let mut crossings = vec![0u64; size - 1];
    for w in tail_pos.windows(2) {
        let j = w[0].max(w[1]);
        crossings[(j - a - 1) as usize] += 1;
    }
    let total: u64 = crossings.iter().sum();
    let profile = crossings
        .iter()
        .map(|&c| c as f64 / total as f64)
        .collect();

    let state = WalkState::from_positions(params, positions)?;
    let k = steps as f64;
    let stream_rate = (a + 1..b)
        .map(|j| (j, state.local_stream(j).abs() / k))
        .collect();
    let (lo, hi) = state.range();

    Ok(RunSummary {
        window: [a, b],
        size,
        localized,
        profile,
        deviation: None,
        stream_rate,
        range_final: [lo, hi],
        steps,
        tail_steps: tail,
        visit_threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileComparison {
    #[serde(rename = "K")]
    pub k: usize,
    /// `l_1, ..., l_{K+1}` of the closed-form solution.
    pub target: Vec<f64>,
    pub deviation: f64,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Compares a localized run with `solve_closed(size - 2, alpha)`.
pub fn compare_profile(
    summary: &RunSummary,
    params: &Params,
) -> Result<ProfileComparison, AnalysisError> {
    if !summary.localized {
        return Err(AnalysisError::NotLocalized);
    }
    let k = summary.size - 2;
    if k > params.regime + 1 {
        return Err(AnalysisError::NoTheory {
            size: summary.size,
            regime: params.regime,
            distance: distance_to_family(&summary.profile, k, params.alpha),
        });
    }
    let sol = linsys::solve_closed(k, params.alpha)?;
    let target = sol.l[1..=k + 1].to_vec();
    let deviation = max_abs_diff(&summary.profile, &target);
    Ok(ProfileComparison {
        k,
        target,
        deviation,
    })
}

/// Max-norm distance from `profile` to `l_1, ..., l_{K+1}` of the
/// non-negative solutions of the system. The distance is convex along the
/// segment, so a ternary search finds it.
pub fn distance_to_family(profile: &[f64], k: usize, alpha: f64) -> Option<f64> {
    let family = SolutionFamily::new(k, alpha).ok()?;
    let (lo, hi) = family.nonnegative_interval()?;
    let dist = |t: f64| max_abs_diff(&family.at(t)[1..=k + 1], profile);
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if dist(m1) <= dist(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    Some(dist((lo + hi) / 2.0))
}

/// Signed `Delta_k(j) / k` of one site at a sequence of checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamSeries {
    pub site: i64,
    pub interior: bool,
    pub k: Vec<u64>,
    pub ratio: Vec<f64>,
}

/// `Delta_k(j) / k` for every site of `window` at each checkpoint `k`
/// (ratio 0 at `k = 0`). Checkpoints beyond the trajectory are dropped.
pub fn stream_decay(
    params: &Params,
    positions: &[i64],
    window: [i64; 2],
    checkpoints: &[u64],
) -> Result<Vec<StreamSeries>, AnalysisError> {
    let steps = positions.len().saturating_sub(1) as u64;
    let mut ks: Vec<u64> = checkpoints.iter().copied().filter(|&k| k <= steps).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut series: Vec<StreamSeries> = (window[0]..=window[1])
        .map(|site| StreamSeries {
            site,
            interior: site > window[0] && site < window[1],
            k: Vec::with_capacity(ks.len()),
            ratio: Vec::with_capacity(ks.len()),
        })
        .collect();
    let mut state = WalkState::new(params);
    let mut at = 0u64;
    for &k in &ks {
        state.extend_with(&positions[at as usize..=k as usize])?;
        at = k;
        for s in &mut series {
            let r = if k == 0 {
                0.0
            } else {
                state.local_stream(s.site) / k as f64
            };
            s.k.push(k);
            s.ratio.push(r);
        }
    }
    Ok(series)
}

/// Detects localization and, when a closed form exists, fills `deviation`.
pub fn analyze(
    params: &Params,
    positions: &[i64],
    tail_fraction: f64,
) -> Result<RunSummary, AnalysisError> {
    let mut s = detect_localization(params, positions, tail_fraction)?;
    if s.localized {
        s.deviation = match compare_profile(&s, params) {
            Ok(c) => Some(c.deviation),
            Err(AnalysisError::NoTheory { .. }) => None,
            Err(e) => return Err(e),
        };
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationStats {
    pub count: usize,
    pub mean: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchStats {
    pub runs: usize,
    /// Localized runs by window size.
    pub size_histogram: BTreeMap<usize, u64>,
    pub unlocalized: u64,
    /// Share of all runs localized on `L + 2` sites.
    #[serde(rename = "frac_L2")]
    pub frac_l2: f64,
    #[serde(rename = "frac_L3")]
    pub frac_l3: f64,
    /// Share localized on `L + 2` or `L + 3` sites.
    #[serde(rename = "frac_L2_or_L3")]
    pub frac_l2_or_l3: f64,
    pub ci: BTreeMap<String, Interval>,
    /// Deviation among `L + 2` runs.
    pub deviation_l2: DeviationStats,
    pub deviation_l3: DeviationStats,
}

fn deviation_stats<'a>(devs: impl Iterator<Item = &'a RunSummary>) -> DeviationStats {
    let d: Vec<f64> = devs.filter_map(|s| s.deviation).collect();
    let count = d.len();
    if count == 0 {
        return DeviationStats {
            count,
            mean: None,
            max: None,
        };
    }
    // Index order keeps the sum reproducible.
    let mean = d.iter().sum::<f64>() / count as f64;
    let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    DeviationStats {
        count,
        mean: Some(mean),
        max: Some(max),
    }
}

/// Aggregates run summaries given in run-index order.
pub fn batch_stats(summaries: &[RunSummary], params: &Params) -> BatchStats {
    let runs = summaries.len();
    let mut size_histogram = BTreeMap::new();
    let mut unlocalized = 0;
    for s in summaries {
        if s.localized {
            *size_histogram.entry(s.size).or_insert(0) += 1;
        } else {
            unlocalized += 1;
        }
    }
    let l2 = params.regime + 2;
    let count = |size: usize| size_histogram.get(&size).copied().unwrap_or(0);
    let (n2, n3) = (count(l2), count(l2 + 1));
    let frac = |n: u64| if runs == 0 { 0.0 } else { n as f64 / runs as f64 };
    let mut ci = BTreeMap::new();
    ci.insert("frac_L2".to_string(), wilson(n2, runs as u64, Z95));
    ci.insert("frac_L3".to_string(), wilson(n3, runs as u64, Z95));
    ci.insert("frac_L2_or_L3".to_string(), wilson(n2 + n3, runs as u64, Z95));
    let of_size = |size: usize| summaries.iter().filter(move |s| s.localized && s.size == size);
    BatchStats {
        runs,
        size_histogram,
        unlocalized,
        frac_l2: frac(n2),
        frac_l3: frac(n3),
        frac_l2_or_l3: frac(n2 + n3),
        ci,
        deviation_l2: deviation_stats(of_size(l2)),
        deviation_l3: deviation_stats(of_size(l2 + 1)),
    }
}
