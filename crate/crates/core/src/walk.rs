//! Discrete-time stuck walk.
//!
//! From site `x` after `k` steps the walk moves right with probability
//! `1 / (1 + exp(-2 beta Delta_k(x)))`, where the local stream
//! `Delta_k(j) = -alpha l(j-1) + l(j) - l(j+1) + alpha l(j+2)` combines local
//! times `l(j)` of edge `{j-1, j}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::WalkRng;
use crate::spectrum::Params;
use crate::tape::Tape;

/// Largest horizon accepted by [`exact_path_law`].
pub const MAX_EXACT_HORIZON: usize = 14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WalkError {
    #[error("horizon {horizon} exceeds the enumeration limit {MAX_EXACT_HORIZON}")]
    Capacity { horizon: usize },
    #[error("positions[{index}] = {value} does not follow a nearest-neighbour path from 0")]
    NotAPath { index: usize, value: i64 },
}

/// `1 / (1 + exp(-x))` without overflow for any finite `x`.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Counts of a walk in progress.
///
/// `Delta` is tracked through two integer tapes,
/// `far(j) = l(j+2) - l(j-1)` and `near(j) = l(j) - l(j+1)`, so that
/// `Delta(j) = alpha * far(j) + near(j)` is identical whether updated
/// incrementally or recounted.
#[derive(Debug, Clone)]
pub struct WalkState {
    alpha: f64,
    beta: f64,
    pos: i64,
    step: u64,
    edge_lt: Tape<u64>,
    site_visits: Tape<u64>,
    cross_right: Tape<u64>,
    cross_left: Tape<u64>,
    far: Tape<i64>,
    near: Tape<i64>,
    min_site: i64,
    max_site: i64,
}

impl WalkState {
    pub fn new(params: &Params) -> Self {
        Self::with_coefficients(params.alpha, params.beta)
    }

    /// Unvalidated constructor; any real `alpha` and `beta` define a walk.
    pub fn with_coefficients(alpha: f64, beta: f64) -> Self {
        WalkState {
            alpha,
            beta,
            pos: 0,
            step: 0,
            edge_lt: Tape::new(),
            site_visits: Tape::new(),
            cross_right: Tape::new(),
            cross_left: Tape::new(),
            far: Tape::new(),
            near: Tape::new(),
            min_site: 0,
            max_site: 0,
        }
    }

    /// Replays a position sequence starting at 0.
    pub fn from_positions(params: &Params, positions: &[i64]) -> Result<Self, WalkError> {
        let mut s = Self::new(params);
        s.extend_with(positions)?;
        Ok(s)
    }

    /// Applies the moves `positions[0] -> positions[1] -> ...`; `positions[0]`
    /// must equal the current position.
    pub fn extend_with(&mut self, positions: &[i64]) -> Result<(), WalkError> {
        if let Some(&first) = positions.first() {
            if first != self.pos {
                return Err(WalkError::NotAPath {
                    index: 0,
                    value: first,
                });
            }
        }
        for (i, w) in positions.windows(2).enumerate() {
            match w[1] - w[0] {
                1 => self.apply_move(true),
                -1 => self.apply_move(false),
                _ => {
                    return Err(WalkError::NotAPath {
                        index: i + 1,
                        value: w[1],
                    })
                }
            }
        }
        Ok(())
    }

    pub fn pos(&self) -> i64 {
        self.pos
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Local time `l(j)` of edge `{j-1, j}`.
    pub fn edge_local_time(&self, j: i64) -> u64 {
        self.edge_lt.get(j)
    }

    /// `Z(j)`: visits to `j` at steps `1..=k`.
    pub fn site_visits(&self, j: i64) -> u64 {
        self.site_visits.get(j)
    }

    /// `N(y, y+1)` when `plus`, else `N(y, y-1)`.
    pub fn crossings(&self, y: i64, plus: bool) -> u64 {
        if plus {
            self.cross_right.get(y)
        } else {
            self.cross_left.get(y)
        }
    }

    /// `(min, max)` of visited sites.
    pub fn range(&self) -> (i64, i64) {
        (self.min_site, self.max_site)
    }

    /// Non-zero edge local times keyed by `j`.
    pub fn edge_local_times(&self) -> BTreeMap<i64, u64> {
        self.edge_lt.iter().filter(|&(_, v)| v > 0).collect()
    }

    #[inline]
    pub fn local_stream(&self, j: i64) -> f64 {
        self.alpha * self.far.get(j) as f64 + self.near.get(j) as f64
    }

    /// `Delta(j)` recomputed from the edge local times.
    pub fn local_stream_recount(&self, j: i64) -> f64 {
        let l = |i: i64| self.edge_lt.get(i) as i64;
        self.alpha * (l(j + 2) - l(j - 1)) as f64 + (l(j) - l(j + 1)) as f64
    }

    /// Integer parts `(far, near)` of `Delta(j)` as maintained incrementally.
    pub fn stream_parts(&self, j: i64) -> (i64, i64) {
        (self.far.get(j), self.near.get(j))
    }

    pub fn stream_parts_recount(&self, j: i64) -> (i64, i64) {
        let l = |i: i64| self.edge_lt.get(i) as i64;
        (l(j + 2) - l(j - 1), l(j) - l(j + 1))
    }

    /// Probability of a right step from the current position.
    #[inline]
    pub fn step_prob_right(&self) -> f64 {
        logistic(2.0 * self.beta * self.local_stream(self.pos))
    }

    /// Moves right iff `u < step_prob_right()`.
    #[inline]
    pub fn step_with_uniform(&mut self, u: f64) {
        let right = u < self.step_prob_right();
        self.apply_move(right);
    }

    pub fn step(&mut self, rng: &mut WalkRng) {
        let u = rng.uniform();
        self.step_with_uniform(u);
    }

    #[inline]
    fn apply_move(&mut self, right: bool) {
        let from = self.pos;
        // Edge {i-1, i} being crossed.
        let i = if right { from + 1 } else { from };
        *self.edge_lt.get_mut(i) += 1;
        *self.far.get_mut(i + 1) -= 1;
        *self.near.get_mut(i) += 1;
        *self.near.get_mut(i - 1) -= 1;
        *self.far.get_mut(i - 2) += 1;
        if right {
            *self.cross_right.get_mut(from) += 1;
            self.pos += 1;
            self.max_site = self.max_site.max(self.pos);
        } else {
            *self.cross_left.get_mut(from) += 1;
            self.pos -= 1;
            self.min_site = self.min_site.min(self.pos);
        }
        *self.site_visits.get_mut(self.pos) += 1;
        self.step += 1;
    }

    /// Checks conservation and the visit/crossing identities at the current
    /// position; returns a description of the first failure.
    pub fn check_identities(&self) -> Result<(), String> {
        let total: u64 = self.edge_lt.iter().map(|(_, v)| v).sum();
        if total != self.step {
            return Err(format!("sum of local times {total} != step {}", self.step));
        }
        let (lo, hi) = self.range();
        for j in lo - 1..=hi + 1 {
            let twice = self.edge_lt.get(j) + self.edge_lt.get(j + 1) + u64::from(self.pos == j);
            let origin = u64::from(j == 0);
            if twice < origin || twice - origin != 2 * self.site_visits.get(j) {
                return Err(format!("visit identity fails at site {j}"));
            }
        }
        let y = self.pos;
        let n_plus = self.edge_lt.get(y + 1) - u64::from(y < 0);
        let n_minus = self.edge_lt.get(y) - u64::from(y > 0);
        if n_plus != 2 * self.crossings(y, true) || n_minus != 2 * self.crossings(y, false) {
            return Err(format!("crossing identity fails at site {y}"));
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        let (lo, hi) = self.range();
        Snapshot {
            step: self.step,
            pos: self.pos,
            edge_local_times: self.edge_local_times(),
            range: [lo, hi],
        }
    }
}

/// Periodic state dump of a streaming simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: u64,
    pub pos: i64,
    pub edge_local_times: BTreeMap<i64, u64>,
    pub range: [i64; 2],
}

/// Full position sequence of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub positions: Vec<i64>,
    pub seed: u64,
    pub params: Params,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.positions.len().saturating_sub(1)
    }
}

/// Runs `steps` steps from the origin with the stream seeded by `seed`.
pub fn simulate(params: &Params, steps: u64, seed: u64) -> Trajectory {
    simulate_with(params, steps, seed, |_| {})
}

/// As [`simulate`], calling `observe` after every step.
pub fn simulate_with(
    params: &Params,
    steps: u64,
    seed: u64,
    mut observe: impl FnMut(&WalkState),
) -> Trajectory {
    let mut rng = WalkRng::new(seed);
    let mut state = WalkState::new(params);
    let mut positions = Vec::with_capacity(steps as usize + 1);
    positions.push(0);
    for _ in 0..steps {
        state.step(&mut rng);
        positions.push(state.pos());
        observe(&state);
    }
    Trajectory {
        positions,
        seed,
        params: *params,
    }
}

/// Same draws as [`simulate`] but every probability is taken from the
/// recounted stream.
pub fn simulate_recount(params: &Params, steps: u64, seed: u64) -> Trajectory {
    let mut rng = WalkRng::new(seed);
    let mut state = WalkState::new(params);
    let mut positions = vec![0];
    for _ in 0..steps {
        let u = rng.uniform();
        let p = logistic(2.0 * state.beta * state.local_stream_recount(state.pos));
        state.apply_move(u < p);
        positions.push(state.pos());
    }
    Trajectory {
        positions,
        seed,
        params: *params,
    }
}

/// Snapshots at every multiple of `every` (including step 0) and at the end.
pub fn simulate_snapshots(
    params: &Params,
    steps: u64,
    seed: u64,
    every: u64,
) -> (Trajectory, Vec<Snapshot>) {
    let every = every.max(1);
    let mut snaps = vec![WalkState::new(params).snapshot()];
    let traj = simulate_with(params, steps, seed, |s| {
        if s.step_count() % every == 0 || s.step_count() == steps {
            snaps.push(s.snapshot());
        }
    });
    (traj, snaps)
}

/// Exact law of the first `horizon` steps. Path `code` has bit `i` set when
/// step `i` goes right.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLaw {
    pub horizon: usize,
    pub probs: Vec<f64>,
}

impl PathLaw {
    pub fn decode(&self, code: usize) -> Vec<i8> {
        (0..self.horizon)
            .map(|i| if code >> i & 1 == 1 { 1 } else { -1 })
            .collect()
    }

    /// Code of the step sequence of `positions[0..=horizon]`.
    pub fn encode(positions: &[i64]) -> usize {
        positions
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0])
            .fold(0, |acc, (i, _)| acc | 1 << i)
    }

    pub fn to_map(&self) -> BTreeMap<Vec<i8>, f64> {
        (0..self.probs.len())
            .map(|c| (self.decode(c), self.probs[c]))
            .collect()
    }
}

/// Enumerates all `2^horizon` paths and multiplies the step probabilities.
pub fn exact_path_law(params: &Params, horizon: usize) -> Result<PathLaw, WalkError> {
    if horizon > MAX_EXACT_HORIZON {
        return Err(WalkError::Capacity { horizon });
    }
    let mut probs = vec![0.0; 1 << horizon];
    fn descend(state: &WalkState, depth: usize, horizon: usize, code: usize, p: f64, out: &mut [f64]) {
        if depth == horizon {
            out[code] = p;
            return;
        }
        let right = state.step_prob_right();
        let mut next = state.clone();
        next.apply_move(true);
        descend(&next, depth + 1, horizon, code | 1 << depth, p * right, out);
        let mut next = state.clone();
        next.apply_move(false);
        descend(&next, depth + 1, horizon, code, p * (1.0 - right), out);
    }
    descend(&WalkState::new(params), 0, horizon, 0, 1.0, &mut probs);
    Ok(PathLaw { horizon, probs })
}
