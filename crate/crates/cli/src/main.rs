mod config;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use stuckwalk::analysis::{self, AnalysisError};
use stuckwalk::io::{read_trajectory_csv, write_json, write_trajectory_csv, Meta};
use stuckwalk::linsys;
use stuckwalk::mc::{self, BatchConfig};
use stuckwalk::rubin::{simulate_rubin, ty_report};
use stuckwalk::spectrum::{threshold_table, Params};
use stuckwalk::verify::{run_suite, Suite, VerifyOptions};
use stuckwalk::walk::{simulate, WalkState};

#[derive(Parser, Debug)]
#[command(name = "stuckwalk", version, about = "Simulate and analyse stuck walks on Z")]
struct Cli {
    /// Plain-text `key = value` file; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

const SUBCOMMANDS: &[&str] = &["simulate", "batch", "analyze", "linsys", "thresholds", "verify"];

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one walk and write its trajectory as CSV.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Run many independent walks and aggregate their localization.
    #[command(args_override_self = true)]
    Batch(BatchArgs),
    /// Detect localization in a trajectory CSV.
    #[command(args_override_self = true)]
    Analyze(AnalyzeArgs),
    /// Solve the limiting local-time system.
    #[command(args_override_self = true)]
    Linsys(LinsysArgs),
    /// Print the regime thresholds alpha_L.
    #[command(args_override_self = true)]
    Thresholds(ThresholdArgs),
    /// Run the built-in invariant suites.
    #[command(args_override_self = true)]
    Verify(VerifyArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum EngineArg {
    Direct,
    Rubin,
}

impl From<EngineArg> for mc::Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Direct => mc::Engine::Direct,
            EngineArg::Rubin => mc::Engine::Rubin,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long)]
    steps: u64,
    #[arg(long, required = true)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = EngineArg::Direct)]
    engine: EngineArg,
    /// Also write state snapshots every N steps.
    #[arg(long, value_name = "N")]
    snapshot_every: Option<u64>,
    /// Trajectory CSV (stdout when omitted).
    #[serde(skip)]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Snapshot JSON; defaults to `<out>.snapshots.json`.
    #[serde(skip)]
    #[arg(long)]
    snapshot_out: Option<PathBuf>,
    /// Consumed clock times per site (rubin engine only).
    #[serde(skip)]
    #[arg(long)]
    ty_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct BatchArgs {
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long)]
    steps: u64,
    #[arg(long)]
    runs: u64,
    #[arg(long, required = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[serde(skip)]
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = EngineArg::Direct)]
    engine: EngineArg,
    #[arg(long, default_value_t = analysis::DEFAULT_TAIL_FRACTION)]
    tail: f64,
    /// Steps at which the visited range is recorded, e.g. `10000,100000`.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<u64>,
    /// Leave per-run records out of the output.
    #[arg(long)]
    no_runs: bool,
    #[serde(skip)]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct AnalyzeArgs {
    #[arg(long = "in", value_name = "CSV")]
    input: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long, default_value_t = analysis::DEFAULT_TAIL_FRACTION)]
    tail: f64,
    /// Also report Delta_k(j)/k at these steps.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<u64>,
    #[serde(skip)]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct LinsysArgs {
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    #[serde(rename = "K")]
    #[arg(long = "K", required_unless_present = "scan_to")]
    k: Option<usize>,
    /// Prescribed l_{K+2}; the closed form (l_{K+2} = 0) is used otherwise.
    #[arg(long, allow_negative_numbers = true)]
    lk2: Option<f64>,
    /// Emit a CSV table of boundary-stream signs for K = 0..=KMAX.
    #[arg(long, value_name = "KMAX")]
    scan_to: Option<usize>,
    #[serde(skip)]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ThresholdArgs {
    #[serde(rename = "max_L")]
    #[arg(long = "max-L")]
    max_l: usize,
    #[serde(skip)]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Suites to run: linsys, rubin, coupling, walk, all (comma separated).
    #[arg(long, value_delimiter = ',')]
    suite: Vec<String>,
    /// Shorthand for `--suite rubin`.
    #[arg(long)]
    rubin_equivalence: bool,
    #[arg(long, default_value_t = 6)]
    horizon: usize,
    #[arg(long, default_value_t = 100_000)]
    runs: u64,
    #[arg(long, default_value_t = 1000)]
    pairs: u64,
    #[arg(long, default_value_t = 500)]
    jumps: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Opens `path` for writing, or stdout.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn params(alpha: f64, beta: f64) -> Result<Params> {
    Params::new(alpha, beta).with_context(|| format!("invalid parameters alpha={alpha}, beta={beta}"))
}

fn config_value<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

fn simulate_cmd(args: &SimulateArgs) -> Result<()> {
    let p = params(args.alpha, args.beta)?;
    let seed = args.seed.expect("required by clap");
    let meta = Meta::new(Some(seed), config_value(args));
    let (positions, ty) = match args.engine {
        EngineArg::Direct => (simulate(&p, args.steps, seed).positions, None),
        EngineArg::Rubin => {
            let run = simulate_rubin(&p, args.steps, seed)?;
            (run.trajectory.positions, Some(ty_report(&run.bank)))
        }
    };
    write_trajectory_csv(sink(args.out.as_deref())?, &meta, &positions)?;

    if let Some(every) = args.snapshot_every {
        let path = match (&args.snapshot_out, &args.out) {
            (Some(p), _) => p.clone(),
            (None, Some(out)) => out.with_extension("snapshots.json"),
            (None, None) => unreachable!("checked during validation"),
        };
        let every = every.max(1);
        let mut state = WalkState::new(&p);
        let mut snaps = vec![state.snapshot()];
        for (k, w) in positions.windows(2).enumerate() {
            state.extend_with(w)?;
            let step = k as u64 + 1;
            if step.is_multiple_of(every) || step == args.steps {
                snaps.push(state.snapshot());
            }
        }
        write_json(sink(Some(&path))?, &meta, &json!({ "snapshots": snaps }))?;
    }
    if let (Some(path), Some(ty)) = (&args.ty_out, ty) {
        let sites: serde_json::Map<String, Value> = ty
            .iter()
            .map(|e| {
                (
                    e.site.to_string(),
                    json!({
                        "t_plus": e.t_plus,
                        "t_minus": e.t_minus,
                        "log_t_plus": e.log_t_plus,
                        "log_t_minus": e.log_t_minus,
                        "tail_plus": e.tail_plus,
                        "tail_minus": e.tail_minus,
                        "tail_fraction": e.tail_fraction,
                    }),
                )
            })
            .collect();
        write_json(sink(Some(path))?, &meta, &json!({ "sites": sites }))?;
    }
    Ok(())
}

fn batch_cmd(args: &BatchArgs) -> Result<()> {
    let p = params(args.alpha, args.beta)?;
    let mut cfg = BatchConfig::new(p, args.runs, args.steps, args.seed.expect("required by clap"));
    cfg.engine = args.engine.into();
    cfg.tail_fraction = args.tail;
    cfg.checkpoints = args.checkpoints.clone();
    cfg.workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut result = mc::run_batch(&cfg)?;
    if args.no_runs {
        result.runs.clear();
    }
    let meta = Meta::new(Some(cfg.master_seed), config_value(args));
    write_json(sink(args.out.as_deref())?, &meta, &result)?;
    Ok(())
}

fn analyze_cmd(args: &AnalyzeArgs) -> Result<()> {
    let p = params(args.alpha, args.beta)?;
    let file = File::open(&args.input).with_context(|| format!("cannot open {}", args.input.display()))?;
    let (source, positions) = read_trajectory_csv(BufReader::new(file))?;
    let mut summary = analysis::detect_localization(&p, &positions, args.tail)?;
    let mut comparison = Value::Null;
    let mut family_distance = Value::Null;
    if summary.localized {
        match analysis::compare_profile(&summary, &p) {
            Ok(c) => {
                summary.deviation = Some(c.deviation);
                comparison = serde_json::to_value(&c)?;
            }
            Err(AnalysisError::NoTheory { distance, .. }) => {
                family_distance = json!(distance);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut body = serde_json::to_value(&summary)?;
    body["comparison"] = comparison;
    body["distance_to_family"] = family_distance;
    if !args.checkpoints.is_empty() {
        let series = analysis::stream_decay(&p, &positions, summary.window, &args.checkpoints)?;
        body["stream_decay"] = serde_json::to_value(series)?;
    }
    let mut config = config_value(args);
    if let Some(src) = &source {
        config["source"] = serde_json::to_value(src)?;
    }
    let meta = Meta::new(source.as_ref().and_then(|m| m.seed), config);
    write_json(sink(args.out.as_deref())?, &meta, &body)?;
    Ok(())
}

fn linsys_cmd(args: &LinsysArgs) -> Result<()> {
    let meta = Meta::new(None, config_value(args));
    let mut w = sink(args.out.as_deref())?;
    if let Some(kmax) = args.scan_to {
        let rows = linsys::sign_scan(args.alpha, kmax)?;
        writeln!(w, "# meta: {}", serde_json::to_string(&meta)?)?;
        writeln!(w, "K,method,feasible,d0_min,d0_max,dK1_min,dK1_max")?;
        for r in rows {
            let method = serde_json::to_value(r.method)?;
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.k,
                method.as_str().unwrap_or(""),
                r.feasible,
                r.d0_min,
                r.d0_max,
                r.dk1_min,
                r.dk1_max
            )?;
        }
        w.flush()?;
        return Ok(());
    }
    let k = args.k.expect("required by clap");
    let regime = stuckwalk::spectrum::classify(args.alpha, stuckwalk::spectrum::DEFAULT_CRITICAL_TOL)?;
    let sol = match args.lk2 {
        Some(v) => linsys::solve_direct(k, args.alpha, v)?,
        None if k <= regime + 1 => linsys::solve_closed(k, args.alpha)?,
        None => linsys::solve_direct(k, args.alpha, 0.0)?,
    };
    let c = if k >= regime {
        linsys::c_oracle(k, args.alpha).ok()
    } else {
        None
    };
    let mut body = serde_json::to_value(&sol)?;
    body["c_oracle"] = json!(c);
    body["L"] = json!(regime);
    write_json(w, &meta, &body)?;
    Ok(())
}

fn thresholds_cmd(args: &ThresholdArgs) -> Result<()> {
    let meta = Meta::new(None, config_value(args));
    let mut w = sink(args.out.as_deref())?;
    writeln!(w, "# meta: {}", serde_json::to_string(&meta)?)?;
    writeln!(w, "L,alpha_L")?;
    for (l, t) in threshold_table(args.max_l) {
        writeln!(w, "{l},{t}")?;
    }
    w.flush()?;
    Ok(())
}

/// Returns whether every check passed.
fn verify_cmd(args: &VerifyArgs, suites: &[Suite]) -> Result<bool> {
    let opts = VerifyOptions {
        seed: args.seed,
        horizon: args.horizon,
        runs: args.runs,
        pairs: args.pairs,
        jumps: args.jumps,
    };
    let mut ok = true;
    let mut out = io::stdout().lock();
    for &suite in suites {
        for check in run_suite(suite, &opts) {
            ok &= check.passed;
            writeln!(out, "{check}")?;
        }
    }
    writeln!(out, "{}", if ok { "verify: all checks passed" } else { "verify: FAILED" })?;
    Ok(ok)
}

fn usage_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

/// Suite selection for `verify`; an empty selection is a usage error.
fn select_suites(args: &VerifyArgs) -> std::result::Result<Vec<Suite>, String> {
    let mut suites = Vec::new();
    if args.suite.is_empty() && !args.rubin_equivalence {
        return Ok(Suite::ALL.to_vec());
    }
    for name in &args.suite {
        match name.as_str() {
            "all" => suites.extend(Suite::ALL),
            "none" => {}
            other => suites.push(other.parse::<Suite>().map_err(|e| format!("--suite: {e}"))?),
        }
    }
    if args.rubin_equivalence {
        suites.push(Suite::Rubin);
    }
    let mut seen = Vec::new();
    suites.retain(|s| {
        let fresh = !seen.contains(s);
        seen.push(*s);
        fresh
    });
    if suites.is_empty() {
        return Err("--suite: empty selection".into());
    }
    Ok(suites)
}

/// Usage checks clap cannot express.
fn validate(cli: &Cli) -> std::result::Result<(), String> {
    match &cli.command {
        Command::Simulate(a) => {
            if a.snapshot_every.is_some() && a.snapshot_out.is_none() && a.out.is_none() {
                return Err("--snapshot-every needs --out or --snapshot-out".into());
            }
            if a.ty_out.is_some() && a.engine != EngineArg::Rubin {
                return Err("--ty-out requires --engine rubin".into());
            }
        }
        Command::Batch(a) => {
            if a.workers == Some(0) {
                return Err("--workers must be at least 1".into());
            }
            if a.runs == 0 {
                return Err("--runs must be at least 1".into());
            }
            if (a.steps as usize) < analysis::MIN_STEPS {
                return Err(format!("--steps must be at least {}", analysis::MIN_STEPS));
            }
        }
        Command::Thresholds(a) if a.max_l == 0 => return Err("--max-L must be at least 1".into()),
        _ => {}
    }
    Ok(())
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args_os().collect(), SUBCOMMANDS) {
        Ok(a) => a,
        Err(e) => return usage_error(e.0),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = validate(&cli) {
        return usage_error(msg);
    }
    let result = match &cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Batch(a) => batch_cmd(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Linsys(a) => linsys_cmd(a),
        Command::Thresholds(a) => thresholds_cmd(a),
        Command::Verify(a) => {
            let suites = match select_suites(a) {
                Ok(s) => s,
                Err(msg) => return usage_error(msg),
            };
            match verify_cmd(a, &suites) {
                Ok(true) => Ok(()),
                Ok(false) => return ExitCode::from(1),
                Err(e) => Err(e),
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn suite_selection() {
        let parse = |v: &[&str]| {
            let cli = Cli::try_parse_from(["stuckwalk", "verify"].iter().chain(v)).unwrap();
            match cli.command {
                Command::Verify(a) => select_suites(&a),
                _ => unreachable!(),
            }
        };
        assert_eq!(parse(&[]).unwrap().len(), 4);
        assert!(parse(&["--suite", "none"]).is_err());
        assert_eq!(parse(&["--rubin-equivalence"]).unwrap(), vec![Suite::Rubin]);
        assert_eq!(parse(&["--suite", "walk,linsys,walk"]).unwrap(), vec![Suite::Walk, Suite::Linsys]);
        assert!(parse(&["--suite", "bogus"]).is_err());
    }
}
