//! Self-check suites run by `stuckwalk verify`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::linsys::{self, LinsysError, SolutionFamily};
use crate::rng::{derive_seed, WalkRng};
use crate::rubin::{couple, simulate_rubin, weight_identity_residual, StuckWeights};
use crate::spectrum::{regime_alphas, Params};
use crate::stats::{chi_square, total_variation};
use crate::walk::{exact_path_law, PathLaw, WalkState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Linsys,
    Rubin,
    Coupling,
    Walk,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Linsys, Suite::Rubin, Suite::Coupling, Suite::Walk];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Linsys => "linsys",
            Suite::Rubin => "rubin",
            Suite::Coupling => "coupling",
            Suite::Walk => "walk",
        })
    }
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|x| x.to_string() == s)
            .ok_or_else(|| format!("unknown suite '{s}' (expected linsys, rubin, coupling, walk or all)"))
    }
}

/// Which way a measured value is compared with its limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Below,
    Above,
    /// Reported only.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub measured: f64,
    pub limit: f64,
    pub bound: Bound,
    pub passed: bool,
}

impl Check {
    fn new(suite: Suite, name: impl Into<String>, measured: f64, bound: Bound, limit: f64) -> Self {
        let passed = match bound {
            Bound::Below => measured < limit,
            Bound::Above => measured > limit,
            Bound::Info => true,
        };
        Check {
            suite,
            name: name.into(),
            measured,
            limit,
            bound,
            passed,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match (self.bound, self.passed) {
            (Bound::Info, _) => "INFO",
            (_, true) => "PASS",
            (_, false) => "FAIL",
        };
        let op = match self.bound {
            Bound::Below => "<",
            Bound::Above => ">",
            Bound::Info => "~",
        };
        write!(
            f,
            "{status} {}/{}: {:e} {op} {:e}",
            self.suite, self.name, self.measured, self.limit
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Path-law horizon for the Rubin suite.
    pub horizon: usize,
    /// Samples per parameter set for the Rubin suite.
    pub runs: u64,
    pub pairs: u64,
    pub jumps: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 1,
            horizon: 6,
            runs: 100_000,
            pairs: 1000,
            jumps: 500,
        }
    }
}

/// Parameter sets of the Rubin path-law comparison.
pub const RUBIN_PARAMS: [(f64, f64); 3] = [(2.0, 0.5), (2.0, 1.0), (0.8, 1.0)];
/// Longest horizon at which 10^5 samples keep the expected TV distance below 0.01.
pub const RUBIN_TV_HORIZON: usize = 6;

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Vec<Check> {
    match suite {
        Suite::Linsys => linsys_suite(),
        Suite::Rubin => rubin_suite(opts),
        Suite::Coupling => coupling_suite(opts),
        Suite::Walk => walk_suite(opts),
    }
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Closed form vs direct solve, symmetry and boundary-stream signs for
/// `L = 1..=8`, 20 values of `alpha` per regime, `K = 0..=L+1`; affine
/// constants and the stream-gap identity.
pub fn linsys_suite() -> Vec<Check> {
    let s = Suite::Linsys;
    let mut dev: f64 = 0.0;
    let mut sym: f64 = 0.0;
    let mut margin = f64::INFINITY;
    let mut c_min = f64::INFINITY;
    let mut affine_res: f64 = 0.0;
    let mut errors = 0usize;
    let mut rng = WalkRng::new(0x5eed);
    for l in 1..=8 {
        for alpha in regime_alphas(l, 20) {
            for k in 0..=l + 1 {
                match (linsys::solve_closed(k, alpha), linsys::solve_direct(k, alpha, 0.0)) {
                    (Ok(c), Ok(d)) => {
                        dev = dev.max(max_abs(&c.l, &d.l)).max((c.d0 - d.d0).abs());
                        for j in 0..=k + 2 {
                            sym = sym.max((d.l[j] - d.l[k + 2 - j]).abs());
                        }
                        sym = sym.max((d.d0 + d.d_k1).abs());
                        let signed = if k < l { -d.d0 } else { d.d0 };
                        margin = margin.min(signed);
                    }
                    _ => errors += 1,
                }
            }
            for _ in 0..100 {
                let d_in: Vec<f64> = (0..l).map(|_| 2.0 * rng.uniform() - 1.0).collect();
                match linsys::solve_affine(l, alpha, &d_in) {
                    Ok(a) => {
                        c_min = a.c.iter().copied().fold(c_min, f64::min);
                        let (r1, r2) = a.identity_residuals();
                        affine_res = affine_res.max(r1).max(r2);
                    }
                    Err(_) => errors += 1,
                }
            }
        }
    }

    let mut gap_res: f64 = 0.0;
    let mut gap_excess = f64::NEG_INFINITY;
    let mut c_oracle_min = f64::INFINITY;
    for l in 1..=5 {
        for alpha in regime_alphas(l, 10) {
            for k in l..=l + 6 {
                let Ok(family) = SolutionFamily::new(k, alpha) else {
                    errors += 1;
                    continue;
                };
                let interval = family.nonnegative_interval();
                if interval.is_some() {
                    match linsys::c_oracle(k, alpha) {
                        Ok(c) => c_oracle_min = c_oracle_min.min(c),
                        Err(_) => errors += 1,
                    }
                }
                for i in 0..100 {
                    // Alternate between non-negative and arbitrary members.
                    let t = match interval {
                        Some((lo, hi)) if i % 2 == 0 => lo + (hi - lo) * rng.uniform(),
                        _ => 4.0 * rng.uniform() - 2.0,
                    };
                    match linsys::stream_gap(k, alpha, &family.solution_at(t)) {
                        Ok(g) => {
                            gap_res = gap_res.max(g.residual);
                            if let Some(c) = g.c_oracle {
                                gap_excess = gap_excess.max(g.value + c);
                            }
                        }
                        Err(LinsysError::IdentityViolation { residual }) => {
                            gap_res = gap_res.max(residual);
                            errors += 1;
                        }
                        Err(_) => errors += 1,
                    }
                }
            }
        }
    }
    let spot = |k| linsys::c_oracle(k, 2.0).map_or(f64::INFINITY, |c| (c - 0.5).abs());

    vec![
        Check::new(s, "closed_vs_direct_max_dev", dev, Bound::Below, 1e-10),
        Check::new(s, "symmetry_residual", sym, Bound::Below, 1e-12),
        Check::new(s, "boundary_sign_margin", margin, Bound::Above, 1e-9),
        Check::new(s, "affine_c_min", c_min, Bound::Above, 0.0),
        Check::new(s, "affine_identity_residual", affine_res, Bound::Below, 1e-9),
        Check::new(s, "c_oracle_min", c_oracle_min, Bound::Above, 0.0),
        Check::new(s, "stream_gap_identity_residual", gap_res, Bound::Below, 1e-10),
        Check::new(s, "stream_gap_plus_c_max", gap_excess, Bound::Below, 1e-9),
        Check::new(s, "c_oracle_spot_K1_alpha2", spot(1), Bound::Below, 1e-12),
        Check::new(s, "c_oracle_spot_K2_alpha2", spot(2), Bound::Below, 1e-12),
        Check::new(s, "solver_errors", errors as f64, Bound::Below, 0.5),
    ]
}

/// Path codes of `runs` embedded walks of length `horizon`.
pub fn rubin_path_counts(params: &Params, horizon: usize, runs: u64, master: u64) -> Vec<u64> {
    let codes: Vec<Option<usize>> = (0..runs)
        .into_par_iter()
        .map(|i| {
            simulate_rubin(params, horizon as u64, derive_seed(master, i))
                .ok()
                .map(|r| PathLaw::encode(&r.trajectory.positions))
        })
        .collect();
    let mut counts = vec![0u64; 1 << horizon];
    for c in codes.into_iter().flatten() {
        counts[c] += 1;
    }
    counts
}

/// Counts of the first `horizon` steps from counts of longer paths.
pub fn marginalize(counts: &[u64], horizon: usize) -> Vec<u64> {
    let mask = (1usize << horizon) - 1;
    let mut out = vec![0u64; 1 << horizon];
    for (code, &c) in counts.iter().enumerate() {
        out[code & mask] += c;
    }
    out
}

/// Embedded-walk path frequencies against the exact path law. The TV gate
/// applies up to [`RUBIN_TV_HORIZON`]; beyond it the sampling floor alone
/// exceeds 0.01 and TV is reported only.
pub fn rubin_suite(opts: &VerifyOptions) -> Vec<Check> {
    let s = Suite::Rubin;
    let mut out = Vec::new();
    for (alpha, beta) in RUBIN_PARAMS {
        let tag = format!("alpha={alpha},beta={beta},h={}", opts.horizon);
        let Ok(params) = Params::new(alpha, beta) else {
            continue;
        };
        let law = match exact_path_law(&params, opts.horizon) {
            Ok(l) => l,
            Err(_) => {
                out.push(Check::new(s, format!("{tag}:horizon"), opts.horizon as f64, Bound::Below, 15.0));
                continue;
            }
        };
        let counts = rubin_path_counts(&params, opts.horizon, opts.runs, opts.seed);
        let failed = opts.runs - counts.iter().sum::<u64>();
        let tv = total_variation(&counts, &law.probs);
        let bound = if opts.horizon <= RUBIN_TV_HORIZON {
            Bound::Below
        } else {
            Bound::Info
        };
        out.push(Check::new(s, format!("{tag}:tv"), tv, bound, 0.01 + f64::EPSILON));
        let chi = chi_square(&counts, &law.probs, 5.0);
        out.push(Check::new(s, format!("{tag}:chi2_p"), chi.p_value, Bound::Above, 1e-3));
        out.push(Check::new(s, format!("{tag}:failed_runs"), failed as f64, Bound::Below, 0.5));
    }
    out
}

/// Randomized coupled pairs at `alpha = 2, beta = 1`.
pub fn coupling_suite(opts: &VerifyOptions) -> Vec<Check> {
    let s = Suite::Coupling;
    let params = Params::new(2.0, 1.0).expect("valid parameters");
    let results: Vec<Result<(usize, usize), ()>> = (0..opts.pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = WalkRng::new(derive_seed(opts.seed, i));
            let a = rng.uniform() * 4.0;
            let b = rng.uniform() * 4.0;
            let y = (rng.uniform() * 7.0) as i64 - 3;
            let shared = rng.uniform().to_bits() ^ derive_seed(opts.seed ^ 0xc0, i);
            couple(&params, y, a.min(b), a.max(b), shared, opts.jumps)
                .map(|r| (r.violations, r.pairs.len()))
                .map_err(|_| ())
        })
        .collect();
    let violations: usize = results.iter().flatten().map(|r| r.0).sum();
    let compared: usize = results.iter().flatten().map(|r| r.1).sum();
    let failed = results.iter().filter(|r| r.is_err()).count();
    vec![
        Check::new(s, "violations", violations as f64, Bound::Below, 0.5),
        Check::new(s, "failed_pairs", failed as f64, Bound::Below, 0.5),
        Check::new(s, "matched_crossings", compared as f64, Bound::Info, 0.0),
    ]
}

/// Conservation and bookkeeping identities along simulated runs, plus
/// reflection symmetry of the exact path law.
pub fn walk_suite(opts: &VerifyOptions) -> Vec<Check> {
    let s = Suite::Walk;
    let mut identity_failures = 0usize;
    let mut stream_dev: f64 = 0.0;
    let mut weight_res: f64 = 0.0;
    for (i, (alpha, beta)) in [(2.0, 1.0), (0.8, 1.0), (0.6, 0.3)].into_iter().enumerate() {
        let params = Params::new(alpha, beta).expect("valid parameters");
        let weights = StuckWeights::new(&params);
        let mut state = WalkState::new(&params);
        let mut rng = WalkRng::new(derive_seed(opts.seed, i as u64));
        for _ in 0..10_000 {
            state.step(&mut rng);
            if state.check_identities().is_err() {
                identity_failures += 1;
            }
            let (lo, hi) = state.range();
            for j in lo - 2..=hi + 2 {
                stream_dev = stream_dev
                    .max((state.local_stream(j) - state.local_stream_recount(j)).abs());
            }
            let scale = 1.0 + 2.0 * beta * state.step_count() as f64;
            weight_res = weight_res.max(weight_identity_residual(&state, &weights) / scale);
        }
    }
    let mut reflection: f64 = 0.0;
    for (alpha, beta) in RUBIN_PARAMS {
        let params = Params::new(alpha, beta).expect("valid parameters");
        let law = exact_path_law(&params, 8).expect("horizon within limit");
        let mask = (1usize << 8) - 1;
        for code in 0..law.probs.len() {
            reflection = reflection.max((law.probs[code] - law.probs[!code & mask]).abs());
        }
        let first: f64 = (0..law.probs.len()).filter(|c| c & 1 == 1).map(|c| law.probs[c]).sum();
        reflection = reflection.max((first - 0.5).abs());
    }
    vec![
        Check::new(s, "identity_failures", identity_failures as f64, Bound::Below, 0.5),
        Check::new(s, "incremental_vs_recount_stream", stream_dev, Bound::Below, 1e-12),
        Check::new(s, "weight_identity_relative", weight_res, Bound::Below, 1e-9),
        Check::new(s, "path_law_reflection", reflection, Bound::Below, 1e-12),
    ]
}
