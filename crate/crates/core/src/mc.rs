//! Parallel batches of independent runs.
//!
//! Run `i` uses the seed `derive_seed(master_seed, i)`, results are collected
//! in index order and every aggregate is computed from that ordered list, so
//! the output does not depend on the number of workers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, BatchStats, RunSummary, DEFAULT_TAIL_FRACTION, MIN_STEPS};
use crate::rng::derive_seed;
use crate::rubin::{simulate_rubin, RubinError};
use crate::spectrum::Params;
use crate::stats::{wilson, Interval, Z95};
use crate::walk::simulate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Direct,
    Rubin,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Direct => "direct",
            Engine::Rubin => "rubin",
        })
    }
}

impl FromStr for Engine {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "direct" => Ok(Engine::Direct),
            "rubin" => Ok(Engine::Rubin),
            other => Err(format!("unknown engine '{other}' (expected direct or rubin)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchConfig {
    pub params: Params,
    pub runs: u64,
    pub steps: u64,
    pub master_seed: u64,
    pub engine: Engine,
    /// Not part of the serialized configuration: results do not depend on it.
    #[serde(skip)]
    pub workers: usize,
    pub tail_fraction: f64,
    /// Steps at which the visited range is recorded.
    pub checkpoints: Vec<u64>,
}

impl BatchConfig {
    pub fn new(params: Params, runs: u64, steps: u64, master_seed: u64) -> Self {
        BatchConfig {
            params,
            runs,
            steps,
            master_seed,
            engine: Engine::Direct,
            workers: 1,
            tail_fraction: DEFAULT_TAIL_FRACTION,
            checkpoints: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), McError> {
        if self.runs < 1 {
            return Err(McError::Config("runs must be at least 1".into()));
        }
        if (self.steps as usize) < MIN_STEPS {
            return Err(McError::Config(format!(
                "steps must be at least {MIN_STEPS}"
            )));
        }
        if self.workers < 1 {
            return Err(McError::Config("workers must be at least 1".into()));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction < 1.0) {
            return Err(McError::Config("tail fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("invalid batch configuration: {0}")]
    Config(String),
    #[error("{failed} of {runs} runs failed (first: run {first_run}: {first_reason})")]
    TooManyFailures {
        failed: usize,
        runs: u64,
        first_run: u64,
        first_reason: String,
    },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// A run that could not be completed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub run: u64,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run: u64,
    pub seed: u64,
    pub first_step: i64,
    /// Visited range `[min, max]` at each checkpoint.
    pub ranges: Vec<[i64; 2]>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchResult {
    pub config: BatchConfig,
    #[serde(flatten)]
    pub stats: BatchStats,
    pub mean_deviation: Option<f64>,
    /// Runs whose first step went right.
    pub first_step_right: u64,
    /// Share of runs whose range did not change between the last two checkpoints.
    pub range_saturation: Option<f64>,
    pub range_saturation_ci: Option<Interval>,
    pub failures: Vec<Failure>,
    pub runs: Vec<RunRecord>,
}

/// Positions of one run of `engine`.
pub fn simulate_engine(
    params: &Params,
    engine: Engine,
    steps: u64,
    seed: u64,
) -> Result<Vec<i64>, RubinError> {
    Ok(match engine {
        Engine::Direct => simulate(params, steps, seed).positions,
        Engine::Rubin => simulate_rubin(params, steps, seed)?.trajectory.positions,
    })
}

/// Visited range of `positions[0..=k]` for each checkpoint `k` (clamped to the
/// trajectory length).
pub fn ranges_at(positions: &[i64], checkpoints: &[u64]) -> Vec<[i64; 2]> {
    let mut order: Vec<usize> = (0..checkpoints.len()).collect();
    order.sort_by_key(|&i| checkpoints[i]);
    let mut out = vec![[0, 0]; checkpoints.len()];
    let (mut lo, mut hi, mut at) = (0i64, 0i64, 0usize);
    let last = positions.len().saturating_sub(1);
    for i in order {
        let k = (checkpoints[i] as usize).min(last);
        while at < k {
            at += 1;
            lo = lo.min(positions[at]);
            hi = hi.max(positions[at]);
        }
        out[i] = [lo, hi];
    }
    out
}

fn saturated(ranges: &[[i64; 2]]) -> bool {
    match ranges {
        [.., a, b] => a == b,
        _ => true,
    }
}

fn run_one(config: &BatchConfig, run: u64) -> Result<RunRecord, Failure> {
    let seed = derive_seed(config.master_seed, run);
    let fail = |reason: String| Failure { run, seed, reason };
    let positions = simulate_engine(&config.params, config.engine, config.steps, seed)
        .map_err(|e| fail(e.to_string()))?;
    let summary = analysis::analyze(&config.params, &positions, config.tail_fraction)
        .map_err(|e| fail(e.to_string()))?;
    Ok(RunRecord {
        run,
        seed,
        first_step: positions.get(1).copied().unwrap_or(0),
        ranges: ranges_at(&positions, &config.checkpoints),
        summary,
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, McError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| McError::Pool(e.to_string()))
}

/// Runs the batch and aggregates in run-index order.
pub fn run_batch(config: &BatchConfig) -> Result<BatchResult, McError> {
    config.validate()?;
    let results: Vec<Result<RunRecord, Failure>> = pool(config.workers)?.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|i| run_one(config, i))
            .collect()
    });
    let mut runs = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => runs.push(rec),
            Err(f) => failures.push(f),
        }
    }
    if failures.len() as u64 * 100 > config.runs {
        let first = &failures[0];
        return Err(McError::TooManyFailures {
            failed: failures.len(),
            runs: config.runs,
            first_run: first.run,
            first_reason: first.reason.clone(),
        });
    }
    let summaries: Vec<RunSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    let stats = analysis::batch_stats(&summaries, &config.params);
    let mean_deviation = stats.deviation_l2.mean;
    let first_step_right = runs.iter().filter(|r| r.first_step == 1).count() as u64;
    let (range_saturation, range_saturation_ci) = if config.checkpoints.len() >= 2 {
        let n = runs.len() as u64;
        let frozen = runs.iter().filter(|r| saturated(&r.ranges)).count() as u64;
        (
            Some(frozen as f64 / n.max(1) as f64),
            Some(wilson(frozen, n, Z95)),
        )
    } else {
        (None, None)
    };
    Ok(BatchResult {
        config: config.clone(),
        stats,
        mean_deviation,
        first_step_right,
        range_saturation,
        range_saturation_ci,
        failures,
        runs,
    })
}

/// Fraction of runs whose visited range at the last checkpoint equals the
/// range at the one before. Only simulates; `steps` may be below the analysis
/// minimum.
pub fn range_saturation(config: &BatchConfig, checkpoints: &[u64]) -> Result<f64, McError> {
    if checkpoints.len() < 2 {
        return Err(McError::Config("need at least two checkpoints".into()));
    }
    if config.runs < 1 || config.workers < 1 {
        return Err(McError::Config("runs and workers must be at least 1".into()));
    }
    let frozen: Vec<Result<bool, Failure>> = pool(config.workers)?.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|run| {
                let seed = derive_seed(config.master_seed, run);
                simulate_engine(&config.params, config.engine, config.steps, seed)
                    .map(|p| saturated(&ranges_at(&p, checkpoints)))
                    .map_err(|e| Failure {
                        run,
                        seed,
                        reason: e.to_string(),
                    })
            })
            .collect()
    });
    let ok: Vec<bool> = frozen.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let failed = frozen.len() - ok.len();
    if failed as u64 * 100 > config.runs {
        let first = frozen.into_iter().find_map(Result::err).unwrap();
        return Err(McError::TooManyFailures {
            failed,
            runs: config.runs,
            first_run: first.run,
            first_reason: first.reason,
        });
    }
    Ok(ok.iter().filter(|&&b| b).count() as f64 / ok.len() as f64)
}

/// Histogram helper used by reports: window sizes of localized runs.
pub fn size_counts(records: &[RunRecord]) -> BTreeMap<usize, u64> {
    let mut h = BTreeMap::new();
    for r in records.iter().filter(|r| r.summary.localized) {
        *h.entry(r.summary.size).or_insert(0) += 1;
    }
    h
}
