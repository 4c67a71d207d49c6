//! wasm-bindgen bindings behind `www/index.html`. Every entry point returns a
//! JSON string; errors surface as JS exceptions.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use stuckwalk::analysis::{analyze, AnalysisError, MIN_STEPS};
use stuckwalk::linsys::{solve_closed, SolutionFamily};
use stuckwalk::spectrum::{self, Params, Threshold};
use stuckwalk::walk::simulate;

/// Longest run the page will simulate in one call.
pub const MAX_STEPS: u32 = 2_000_000;
/// Points kept for the trajectory plot.
const PLOT_POINTS: usize = 4000;

fn finite(t: Threshold) -> Value {
    t.finite().map_or(Value::Null, Value::from)
}

/// Simulates one walk and summarizes its tail.
pub fn simulate_json(alpha: f64, beta: f64, steps: u32, seed: u64) -> Result<String, String> {
    if !(1..=MAX_STEPS).contains(&steps) {
        return Err(format!("steps must be in 1..={MAX_STEPS}"));
    }
    let params = Params::new(alpha, beta).map_err(|e| e.to_string())?;
    let traj = simulate(&params, steps as u64, seed);
    let pos = &traj.positions;
    let stride = pos.len().div_ceil(PLOT_POINTS).max(1);
    let plot: Vec<[i64; 2]> = pos
        .iter()
        .enumerate()
        .step_by(stride)
        .map(|(k, &x)| [k as i64, x])
        .collect();
    let summary = match analyze(&params, pos, 0.5) {
        Ok(s) => serde_json::to_value(&s).map_err(|e| e.to_string())?,
        Err(AnalysisError::TooShort { .. }) => Value::Null,
        Err(e) => return Err(e.to_string()),
    };
    let target = summary["size"]
        .as_u64()
        .filter(|_| summary["localized"] == true)
        .and_then(|size| size.checked_sub(2))
        .and_then(|k| solve_closed(k as usize, alpha).ok())
        .map(|s| s.l[1..=s.k + 1].to_vec());
    Ok(json!({
        "L": params.regime,
        "steps": steps,
        "final": pos.last(),
        "plot": plot,
        "summary": summary,
        "min_steps": MIN_STEPS,
        "target": target,
    })
    .to_string())
}

/// Candidate profile on `K + 2` sites: the closed form when it applies,
/// otherwise the non-negative segment endpoints.
pub fn profile_json(alpha: f64, k: u32) -> Result<String, String> {
    let regime = spectrum::classify(alpha, spectrum::DEFAULT_CRITICAL_TOL).map_err(|e| e.to_string())?;
    let k = k as usize;
    if let Ok(s) = solve_closed(k, alpha) {
        return Ok(json!({
            "L": regime, "K": k, "method": "closed",
            "profiles": [s.l], "d0": [s.d0], "dK1": [s.d_k1],
        })
        .to_string());
    }
    let family = SolutionFamily::new(k, alpha).map_err(|e| e.to_string())?;
    let Some((lo, hi)) = family.nonnegative_interval() else {
        return Ok(json!({ "L": regime, "K": k, "method": "none", "profiles": [] }).to_string());
    };
    let ends = [family.solution_at(lo), family.solution_at(hi)];
    Ok(json!({
        "L": regime, "K": k, "method": "segment",
        "profiles": ends.iter().map(|s| &s.l).collect::<Vec<_>>(),
        "d0": ends.iter().map(|s| s.d0).collect::<Vec<_>>(),
        "dK1": ends.iter().map(|s| s.d_k1).collect::<Vec<_>>(),
    })
    .to_string())
}

/// Regime of `alpha` with its bracketing thresholds, plus the table up to `max_l`.
pub fn regime_json(alpha: f64, max_l: u32) -> Result<String, String> {
    let table: Vec<Value> = spectrum::threshold_table(max_l.max(1) as usize)
        .into_iter()
        .map(|(l, t)| json!({ "L": l, "alpha_L": finite(t) }))
        .collect();
    let regime = spectrum::classify(alpha, spectrum::DEFAULT_CRITICAL_TOL);
    let body = match regime {
        Ok(l) => json!({
            "L": l,
            "omega": spectrum::omega(alpha).ok(),
            "upper": finite(spectrum::alpha_threshold(l)),
            "lower": finite(spectrum::alpha_threshold(l + 1)),
            "sites": [l + 2, l + 3],
            "table": table,
        }),
        Err(e) => json!({ "error": e.to_string(), "table": table }),
    };
    Ok(body.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate_walk(alpha: f64, beta: f64, steps: u32, seed: u32) -> Result<String, JsError> {
    js(simulate_json(alpha, beta, steps, seed as u64))
}

#[wasm_bindgen]
pub fn candidate_profile(alpha: f64, k: u32) -> Result<String, JsError> {
    js(profile_json(alpha, k))
}

#[wasm_bindgen]
pub fn regime(alpha: f64, max_l: u32) -> Result<String, JsError> {
    js(regime_json(alpha, max_l))
}
