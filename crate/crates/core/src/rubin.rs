//! Continuous-time embedding of the stuck walk through exponential clocks.
//!
//! Each oriented edge `(y, y±1)` owns a sequence of clocks `xi_k^±(y)`, drawn
//! exponential with mean `f^±(y, k)`. While the walker sits at `y` the two
//! current clocks at `y` run at rates `w(Z(y+1))` and `w(Z(y-1))`; the first
//! to ring moves the walker, the other is suspended with its remaining raw
//! amount and resumed on the next visit to `y`. The embedded jump chain has
//! the law of the discrete walk.
//!
//! Raw amounts, ring times and consumed times are all kept as logarithms:
//! `w(n) = exp(4 beta alpha n)` leaves double range after a few dozen visits.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;
use thiserror::Error;

use crate::logmath::{log1mexp, LogSum};
use crate::rng::ClockSource;
use crate::spectrum::Params;
use crate::tape::Tape;
use crate::walk::{Trajectory, WalkState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// Both clocks ring at the same instant.
    Tie,
    /// The losing clock's residual is no longer representable.
    PrecisionExhausted,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RubinError {
    #[error("construction failed at jump {jump} on site {site}: {kind:?}")]
    ConstructionFailure {
        jump: u64,
        site: i64,
        kind: FailureKind,
    },
}

/// Clock means and visit weights, as logarithms.
pub trait Weights {
    /// `ln f^±(y, n)`.
    fn log_f(&self, y: i64, plus: bool, n: u64) -> f64;
    /// `ln w(n)`; `w` must be non-decreasing.
    fn log_w(&self, n: u64) -> f64;
}

/// `f^±(y, n) = exp(2 beta [2(1+alpha) n - alpha 1{y±1 = 0} + (1+alpha) 1{±y < 0}])`
/// and `w(n) = exp(4 beta alpha n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StuckWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl StuckWeights {
    pub fn new(params: &Params) -> Self {
        StuckWeights {
            alpha: params.alpha,
            beta: params.beta,
        }
    }
}

impl Weights for StuckWeights {
    #[inline]
    fn log_f(&self, y: i64, plus: bool, n: u64) -> f64 {
        let a = self.alpha;
        let target_is_origin = if plus { y + 1 == 0 } else { y - 1 == 0 };
        let behind = if plus { y < 0 } else { y > 0 };
        2.0 * self.beta
            * (2.0 * (1.0 + a) * n as f64 - a * f64::from(u8::from(target_is_origin))
                + (1.0 + a) * f64::from(u8::from(behind)))
    }

    #[inline]
    fn log_w(&self, n: u64) -> f64 {
        4.0 * self.beta * self.alpha * n as f64
    }
}

/// Largest discrepancy (in log scale) between the two sides of
/// `w(Z(y±1)) / f^±(y, N(y, y±1)) = exp(2 beta [-l(y+½±½) + alpha l(y+½±3/2)])`
/// at the walk's current position.
pub fn weight_identity_residual(state: &WalkState, weights: &impl Weights) -> f64 {
    let y = state.pos();
    let b = state.beta();
    let a = state.alpha();
    let l = |j: i64| state.edge_local_time(j) as f64;
    let plus_lhs = weights.log_w(state.site_visits(y + 1))
        - weights.log_f(y, true, state.crossings(y, true));
    let plus_rhs = 2.0 * b * (-l(y + 1) + a * l(y + 2));
    let minus_lhs = weights.log_w(state.site_visits(y - 1))
        - weights.log_f(y, false, state.crossings(y, false));
    let minus_rhs = 2.0 * b * (-l(y) + a * l(y - 1));
    (plus_lhs - plus_rhs).abs().max((minus_lhs - minus_rhs).abs())
}

/// `ln xi` for `xi` exponential with mean `f_mean`: `ln f_mean + ln E`.
pub fn sample_clock<R: Rng + ?Sized>(f_mean: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    f_mean.ln() + e.ln()
}

/// The full clock collection `xi`, addressed by `(site, direction, index)`.
pub trait ClockCollection {
    fn log_xi(&self, y: i64, plus: bool, index: u64) -> f64;
}

/// Independent exponential clocks with means `f^±(y, k)`.
#[derive(Debug, Clone)]
pub struct ExpClocks<W> {
    source: ClockSource,
    weights: W,
}

impl<W: Weights> ExpClocks<W> {
    pub fn new(seed: u64, weights: W) -> Self {
        ExpClocks {
            source: ClockSource::new(seed),
            weights,
        }
    }
}

impl<W: Weights> ClockCollection for ExpClocks<W> {
    fn log_xi(&self, y: i64, plus: bool, index: u64) -> f64 {
        self.weights.log_f(y, plus, index) + self.source.standard_exp(y, plus, index).ln()
    }
}

/// A collection with a single clock replaced by a fixed value.
#[derive(Debug, Clone)]
pub struct WithOverride<C> {
    pub inner: C,
    pub site: i64,
    pub plus: bool,
    pub index: u64,
    pub log_value: f64,
}

impl<C: ClockCollection> ClockCollection for WithOverride<C> {
    fn log_xi(&self, y: i64, plus: bool, index: u64) -> f64 {
        if y == self.site && plus == self.plus && index == self.index {
            self.log_value
        } else {
            self.inner.log_xi(y, plus, index)
        }
    }
}

/// State of the clocks attached to one oriented edge.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EdgeClock {
    /// Index of the next clock to start (= number of clocks that rang).
    pub index: u64,
    /// `ln` of the raw amount left on the current clock, if one is started.
    pub log_residual: Option<f64>,
    /// Real time consumed by clocks that rang.
    pub consumed: LogSum,
    /// Real time already consumed by the current clock.
    pub running: LogSum,
}

/// Clocks of every oriented edge plus per-site race bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct ClockBank {
    plus: Tape<EdgeClock>,
    minus: Tape<EdgeClock>,
    /// Sum of race durations at each site.
    site_time: Tape<LogSum>,
    /// Consumed times recorded by [`ClockBank::mark`].
    marked: Option<(Tape<LogSum>, Tape<LogSum>)>,
    min_site: i64,
    max_site: i64,
}

impl ClockBank {
    pub fn clock(&self, y: i64, plus: bool) -> EdgeClock {
        if plus {
            self.plus.get(y)
        } else {
            self.minus.get(y)
        }
    }

    fn clock_mut(&mut self, y: i64, plus: bool) -> &mut EdgeClock {
        if plus {
            self.plus.get_mut(y)
        } else {
            self.minus.get_mut(y)
        }
    }

    /// `T_y^±`: real time consumed by the clocks of `(y, y±1)` that rang.
    pub fn consumed(&self, y: i64, plus: bool) -> LogSum {
        self.clock(y, plus).consumed
    }

    /// Total duration of all races held at `y`.
    pub fn site_time(&self, y: i64) -> LogSum {
        self.site_time.get(y)
    }

    /// Sites that have hosted at least one clock.
    pub fn site_range(&self) -> (i64, i64) {
        (self.min_site, self.max_site)
    }

    /// Records the current consumed times as the reference for tail increments.
    pub fn mark(&mut self) {
        let mut plus = Tape::new();
        let mut minus = Tape::new();
        for y in self.min_site..=self.max_site {
            *plus.get_mut(y) = self.consumed(y, true);
            *minus.get_mut(y) = self.consumed(y, false);
        }
        self.marked = Some((plus, minus));
    }

    fn marked(&self, y: i64, plus: bool) -> LogSum {
        match &self.marked {
            Some((p, m)) => {
                if plus {
                    p.get(y)
                } else {
                    m.get(y)
                }
            }
            None => LogSum::default(),
        }
    }
}

/// Result of one race between the two clocks at a site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaceOutcome {
    pub plus: bool,
    /// `ln` of the real time until the ring.
    pub log_elapsed: f64,
    /// `ln` of the loser's remaining raw amount.
    pub loser_log_residual: f64,
}

/// Races two clocks given as `(ln raw residual, ln rate)`.
pub fn race_logs(
    plus: (f64, f64),
    minus: (f64, f64),
) -> Result<RaceOutcome, FailureKind> {
    let ring_plus = plus.0 - plus.1;
    let ring_minus = minus.0 - minus.1;
    if ring_plus == ring_minus {
        return Err(FailureKind::Tie);
    }
    let plus_wins = ring_plus < ring_minus;
    let (win, lose, lose_clock) = if plus_wins {
        (ring_plus, ring_minus, minus)
    } else {
        (ring_minus, ring_plus, plus)
    };
    // Loser depleted by elapsed * rate: residual * (1 - exp(win - lose)).
    let residual = lose_clock.0 + log1mexp(win - lose);
    if !residual.is_finite() {
        return Err(FailureKind::PrecisionExhausted);
    }
    Ok(RaceOutcome {
        plus: plus_wins,
        log_elapsed: win,
        loser_log_residual: residual,
    })
}

/// Real time for a raw amount `exp(log_raw)` consumed at rate `exp(log_rate)`.
pub fn ring_time(log_raw: f64, log_rate: f64) -> f64 {
    (log_raw - log_rate).exp()
}

/// The continuous-time walk driven by a fixed clock collection.
#[derive(Debug, Clone)]
pub struct RubinWalk<C, W> {
    clocks: C,
    weights: W,
    pos: i64,
    jumps: u64,
    site_visits: Tape<u64>,
    bank: ClockBank,
    time: LogSum,
}

/// One jump of the embedded chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub from: i64,
    pub plus: bool,
    pub log_elapsed: f64,
}

impl<C: ClockCollection, W: Weights> RubinWalk<C, W> {
    pub fn new(clocks: C, weights: W) -> Self {
        RubinWalk {
            clocks,
            weights,
            pos: 0,
            jumps: 0,
            site_visits: Tape::new(),
            bank: ClockBank::default(),
            time: LogSum::default(),
        }
    }

    pub fn pos(&self) -> i64 {
        self.pos
    }

    pub fn jumps(&self) -> u64 {
        self.jumps
    }

    pub fn site_visits(&self, y: i64) -> u64 {
        self.site_visits.get(y)
    }

    pub fn bank(&self) -> &ClockBank {
        &self.bank
    }

    pub fn bank_mut(&mut self) -> &mut ClockBank {
        &mut self.bank
    }

    /// `ln` of the elapsed real time.
    pub fn log_time(&self) -> f64 {
        self.time.0
    }

    pub fn into_bank(self) -> ClockBank {
        self.bank
    }

    fn ensure_started(&mut self, y: i64, plus: bool) -> f64 {
        let index = self.bank.clock(y, plus).index;
        let clocks = &self.clocks;
        let c = self.bank.clock_mut(y, plus);
        *c.log_residual.get_or_insert_with(|| clocks.log_xi(y, plus, index))
    }

    /// Runs the race at the current site and performs the jump.
    pub fn race(&mut self) -> Result<Jump, RubinError> {
        let y = self.pos;
        let res_plus = self.ensure_started(y, true);
        let res_minus = self.ensure_started(y, false);
        self.bank.min_site = self.bank.min_site.min(y);
        self.bank.max_site = self.bank.max_site.max(y);
        let w_plus = self.weights.log_w(self.site_visits.get(y + 1));
        let w_minus = self.weights.log_w(self.site_visits.get(y - 1));
        let out = race_logs((res_plus, w_plus), (res_minus, w_minus)).map_err(|kind| {
            RubinError::ConstructionFailure {
                jump: self.jumps,
                site: y,
                kind,
            }
        })?;

        self.time.add_log(out.log_elapsed);
        self.bank.site_time.get_mut(y).add_log(out.log_elapsed);
        {
            let winner = self.bank.clock_mut(y, out.plus);
            winner.running.add_log(out.log_elapsed);
            let total = winner.running;
            winner.consumed.add_log(total.0);
            winner.running = LogSum::default();
            winner.log_residual = None;
            winner.index += 1;
        }
        {
            let loser = self.bank.clock_mut(y, !out.plus);
            loser.running.add_log(out.log_elapsed);
            loser.log_residual = Some(out.loser_log_residual);
        }
        self.pos += if out.plus { 1 } else { -1 };
        *self.site_visits.get_mut(self.pos) += 1;
        self.jumps += 1;
        Ok(Jump {
            from: y,
            plus: out.plus,
            log_elapsed: out.log_elapsed,
        })
    }
}

/// Output of [`simulate_rubin`].
#[derive(Debug, Clone)]
pub struct RubinRun {
    pub trajectory: Trajectory,
    pub bank: ClockBank,
    /// `ln` of the total real time.
    pub log_time: f64,
}

/// Runs `jumps` jumps with clocks keyed by `seed`. The bank is marked after
/// 90% of the jumps for [`ty_report`].
pub fn simulate_rubin(params: &Params, jumps: u64, seed: u64) -> Result<RubinRun, RubinError> {
    let weights = StuckWeights::new(params);
    let mut walk = RubinWalk::new(ExpClocks::new(seed, weights), weights);
    let mut positions = Vec::with_capacity(jumps as usize + 1);
    positions.push(0);
    let mark_at = jumps - jumps / 10;
    for _ in 0..jumps {
        if walk.jumps() == mark_at {
            walk.bank_mut().mark();
        }
        walk.race()?;
        positions.push(walk.pos());
    }
    if jumps == 0 || mark_at == jumps {
        walk.bank_mut().mark();
    }
    let log_time = walk.log_time();
    Ok(RubinRun {
        trajectory: Trajectory {
            positions,
            seed,
            params: *params,
        },
        bank: walk.into_bank(),
        log_time,
    })
}

/// Consumed times at one site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TyEntry {
    pub site: i64,
    /// `T_y^+`; overflows to infinity long before its logarithm does.
    pub t_plus: f64,
    pub t_minus: f64,
    pub log_t_plus: f64,
    pub log_t_minus: f64,
    /// Share of `T_y^+` consumed after the mark.
    pub tail_plus: f64,
    pub tail_minus: f64,
    /// `max(tail_plus, tail_minus)`.
    pub tail_fraction: f64,
}

fn tail_share(now: LogSum, then: LogSum) -> f64 {
    if now.is_zero() {
        0.0
    } else {
        (-(then.0 - now.0).exp_m1()).max(0.0)
    }
}

/// `T_y^±` for every site that hosted a race, with the increment since the mark.
pub fn ty_report(bank: &ClockBank) -> Vec<TyEntry> {
    let (lo, hi) = bank.site_range();
    (lo..=hi)
        .map(|y| {
            let (p, m) = (bank.consumed(y, true), bank.consumed(y, false));
            let tail_plus = tail_share(p, bank.marked(y, true));
            let tail_minus = tail_share(m, bank.marked(y, false));
            TyEntry {
                site: y,
                t_plus: p.value(),
                t_minus: m.value(),
                log_t_plus: p.0,
                log_t_minus: m.0,
                tail_plus,
                tail_minus,
                tail_fraction: tail_plus.max(tail_minus),
            }
        })
        .collect()
}

/// Visit counts of both walks at the `i`-th crossing of edge `{z, z+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CrossingPair {
    pub edge: i64,
    pub crossing: usize,
    /// `(Z^1(z+1), Z^2(z+1))`.
    pub right: (u64, u64),
    /// `(Z^1(z), Z^2(z))`.
    pub left: (u64, u64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub hold_out: i64,
    pub pairs: Vec<CrossingPair>,
    /// Pairs with `Z^1(z+1) < Z^2(z+1)` or `Z^1(z) > Z^2(z)`.
    pub violations: usize,
    pub identical: bool,
    pub positions: [Vec<i64>; 2],
}

/// Per-edge visit counts `(Z(z+1), Z(z))`, in crossing order.
type CrossingLog = std::collections::BTreeMap<i64, Vec<(u64, u64)>>;

/// Positions and the crossing log, recorded right after each crossing.
fn run_recording<C: ClockCollection, W: Weights>(
    mut walk: RubinWalk<C, W>,
    jumps: u64,
) -> Result<(Vec<i64>, CrossingLog), RubinError> {
    let mut positions = vec![0];
    let mut log = std::collections::BTreeMap::new();
    for _ in 0..jumps {
        let j = walk.race()?;
        let z = if j.plus { j.from } else { j.from - 1 };
        log.entry(z)
            .or_insert_with(Vec::new)
            .push((walk.site_visits(z + 1), walk.site_visits(z)));
        positions.push(walk.pos());
    }
    Ok((positions, log))
}

/// Runs two walks on the same clocks except `xi_0^+(hold_out)`, set to `u1`
/// for the first and `u2` for the second, and compares visit counts at matched
/// crossings of every edge.
pub fn couple(
    params: &Params,
    hold_out: i64,
    u1: f64,
    u2: f64,
    shared_seed: u64,
    jumps: u64,
) -> Result<CouplingReport, RubinError> {
    let weights = StuckWeights::new(params);
    let base = ExpClocks::new(shared_seed, weights);
    let walk = |u: f64| {
        RubinWalk::new(
            WithOverride {
                inner: base.clone(),
                site: hold_out,
                plus: true,
                index: 0,
                log_value: u.ln(),
            },
            weights,
        )
    };
    let (pos1, log1) = run_recording(walk(u1), jumps)?;
    let (pos2, log2) = run_recording(walk(u2), jumps)?;
    let mut pairs = Vec::new();
    for (&z, seq1) in &log1 {
        if let Some(seq2) = log2.get(&z) {
            for (i, (a, b)) in seq1.iter().zip(seq2).enumerate() {
                pairs.push(CrossingPair {
                    edge: z,
                    crossing: i + 1,
                    right: (a.0, b.0),
                    left: (a.1, b.1),
                });
            }
        }
    }
    let violations = pairs
        .iter()
        .filter(|p| p.right.0 < p.right.1 || p.left.0 > p.left.1)
        .count();
    Ok(CouplingReport {
        hold_out,
        violations,
        identical: pos1 == pos2,
        pairs,
        positions: [pos1, pos2],
    })
}
