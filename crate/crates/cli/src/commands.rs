//! One function per subcommand.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use autocat::balance::{balance_grid, hyp_ratios};
use autocat::io::{balance_csv, distribution_csv, load_params, occupation_csv, ratios_csv, read_distribution_csv};
use autocat::model::{Distribution, ParamsConfig, ReactionParams, ScaledParams, State};
use autocat::ode::fixed_point;
use autocat::oracle::{solve_truncated, Solver, SolverOptions, TruncationPolicy, TruncationSpec};
use autocat::ssa::{run_replicas, tv_distance, Horizon, OccupationMeasure, SimConfig, DEFAULT_BURN_IN_FRACTION};
use autocat::stationary::{
    build_distribution_nmax, distribution_modes, modes_d2, poisson_tail, poisson_truncation, regime_classify,
    DEFAULT_STATE_CAP,
};
use autocat::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::output::{RunManifest, Sink};
use crate::{
    BalanceArgs, Command, CompareArgs, ExactArgs, FixedPointArgs, NMax, PolicyArg, RegimesArgs, SimulateArgs,
    SolverArg, StationaryArgs, Truncation,
};

/// Most modes listed per grid point by `regimes`; ties on a flat hyperplane can
/// produce thousands.
const MODES_LISTED: usize = 8;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Stationary(a) => stationary(a),
        Command::Balance(a) => balance(a),
        Command::Simulate(a) => simulate(a),
        Command::FixedPoint(a) => fixed_point_cmd(a),
        Command::Exact(a) => exact(a),
        Command::Compare(a) => compare(a),
        Command::Regimes(a) => regimes(a),
    }
}

fn manifest(command: &str, params: Option<&ParamsConfig>, seed: Option<u64>) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        params_echo: params.cloned(),
        seed,
        outputs: Vec::new(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        relabelled: false,
        details: serde_json::Value::Null,
    }
}

fn load(path: &Path) -> Result<(ParamsConfig, ReactionParams)> {
    let cfg = load_params(path)?;
    let params = cfg.reaction_params()?;
    Ok((cfg, params))
}

fn require_two_species(params: &ReactionParams, command: &str) -> Result<()> {
    if params.d() != 2 {
        return Err(Error::InvalidParams(format!(
            "`{command}` needs a two-species network, the parameter file has d = {}",
            params.d()
        )));
    }
    Ok(())
}

/// Announces on standard error when the closed forms run with the species
/// exchanged.
fn announce_relabelling(params: &ReactionParams) -> bool {
    let swap = params.d() == 2 && params.kappa()[0] > params.kappa()[1];
    if swap {
        eprintln!(
            "note: kappa_1 = {} > kappa_2 = {}; species are relabelled so that kappa_1 <= kappa_2 for the \
             closed forms (state tables keep the input labels, ratio series use the relabelled ones)",
            params.kappa()[0],
            params.kappa()[1]
        );
    }
    swap
}

fn check_tail_tol(tail_tol: f64) -> Result<()> {
    if tail_tol > 0.0 && tail_tol < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("--tail-tol must lie in (0, 1), got {tail_tol}")))
    }
}

/// Truncation level and the Poisson mass above it.
fn resolve_nmax(params: &ReactionParams, t: &Truncation) -> Result<(u64, f64)> {
    let mu = params.mean_total();
    match t.nmax {
        NMax::Auto => {
            check_tail_tol(t.tail_tol)?;
            poisson_truncation(mu, t.tail_tol)
        }
        NMax::Fixed(n) => Ok((n, poisson_tail(mu, n))),
    }
}

fn stationary(a: StationaryArgs) -> Result<()> {
    let (cfg, params) = load(&a.common.config)?;
    let (n_max, tail) = resolve_nmax(&params, &a.truncation)?;
    let dist = build_distribution_nmax(&params, n_max, DEFAULT_STATE_CAP)?;
    let mut sink = Sink::new(a.common.out)?;
    sink.emit("stationary.csv", &distribution_csv(&dist)?)?;
    let mut m = manifest("stationary", Some(&cfg), None);
    m.details = json!({
        "n_max": n_max,
        "truncation_tail_mass": tail,
        "states": dist.len(),
        "exact": params.is_neutral(),
    });
    sink.finish(m)
}

fn balance(a: BalanceArgs) -> Result<()> {
    let (cfg, params) = load(&a.common.config)?;
    require_two_species(&params, "balance")?;
    let relabelled = announce_relabelling(&params);
    let rows = balance_grid(&params, a.grid)?;
    let mut sink = Sink::new(a.common.out)?;
    sink.emit("balance.csv", &balance_csv(&rows)?)?;
    if a.ratios {
        let ratios = (0..=a.grid).map(|n| hyp_ratios(&params, n)).collect::<Result<Vec<_>>>()?;
        sink.emit("ratios.csv", &ratios_csv(&ratios)?)?;
    }
    let worst = rows.iter().max_by(|x, y| x.bstar_direct.abs().total_cmp(&y.bstar_direct.abs()));
    let max_diff = rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max);
    let mut m = manifest("balance", Some(&cfg), None);
    m.relabelled = relabelled;
    m.details = json!({
        "grid": a.grid,
        "states": rows.len(),
        "max_abs_bstar": worst.map(|r| r.bstar_direct.abs()),
        "argmax_abs_bstar": worst.map(|r| [r.a1, r.a2]),
        "max_abs_diff_direct_closed": max_diff,
    });
    sink.finish(m)
}

fn default_initial(params: &ReactionParams) -> Vec<u64> {
    params.lambda().iter().map(|l| (l / params.delta()).round() as u64).collect()
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let (cfg, params) = load(&a.common.config)?;
    let initial = a.initial.unwrap_or_else(|| default_initial(&params));
    if initial.len() != params.d() {
        return Err(Error::InvalidParams(format!(
            "--initial has {} counts but the network has {} species",
            initial.len(),
            params.d()
        )));
    }
    if a.replicas == 0 {
        return Err(Error::InvalidParams("--replicas must be at least 1".into()));
    }
    let (horizon, default_burn_in) = match (a.t_max, a.max_events) {
        (Some(t), None) => (Horizon::Time(t), DEFAULT_BURN_IN_FRACTION * t),
        (None, Some(k)) => (Horizon::Events(k), 0.0),
        _ => unreachable!("clap enforces exactly one horizon"),
    };
    let burn_in = a.burn_in.unwrap_or(default_burn_in);
    let sim = SimConfig::new(horizon, burn_in, a.seed, State::new(initial.clone()))?;
    let runs = run_replicas(&params, &sim, a.replicas)?;
    let occ = OccupationMeasure::merged(&runs);
    let mut sink = Sink::new(a.common.out)?;
    sink.emit("occupation.csv", &occupation_csv(&occ)?)?;
    let mut m = manifest("simulate", Some(&cfg), Some(a.seed));
    m.details = json!({
        "horizon": horizon,
        "burn_in": burn_in,
        "initial": initial,
        "replicas": a.replicas,
        "recorded_time": occ.total_time(),
        "events": occ.events(),
        "states_visited": occ.weights().len(),
    });
    sink.finish(m)
}

#[derive(Serialize)]
struct FixedPointReport {
    a1_star: f64,
    a2_star: f64,
    stable: bool,
    residual: f64,
}

fn scaled(cfg: &ParamsConfig, command: &str) -> Result<ScaledParams> {
    cfg.scaled_params()?.ok_or_else(|| {
        Error::InvalidParams(format!("`{command}` needs a scaled parameter file (\"kind\": \"scaled\")"))
    })
}

fn fixed_point_cmd(a: FixedPointArgs) -> Result<()> {
    let cfg = load_params(&a.common.config)?;
    let sp = scaled(&cfg, "fixed-point")?;
    if sp.d() != 2 {
        return Err(Error::InvalidParams(format!(
            "`fixed-point` needs a two-species network, the parameter file has d = {}",
            sp.d()
        )));
    }
    let fp = fixed_point(&sp)?;
    let report = FixedPointReport {
        a1_star: fp.a_star.0,
        a2_star: fp.a_star.1,
        stable: fp.stable,
        residual: fp.residual,
    };
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    let mut sink = Sink::new(a.common.out)?;
    sink.emit("fixed_point.json", &bytes)?;
    sink.finish(manifest("fixed-point", Some(&cfg), None))
}

fn exact(a: ExactArgs) -> Result<()> {
    let (cfg, params) = load(&a.common.config)?;
    let (n_max, tail) = resolve_nmax(&params, &a.truncation)?;
    let spec = TruncationSpec {
        n_max,
        policy: match a.policy {
            PolicyArg::Drop => TruncationPolicy::DropOutflowing,
            PolicyArg::Reflect => TruncationPolicy::Reflect,
        },
    };
    let opts = SolverOptions {
        solver: match a.solver {
            SolverArg::Gth => Solver::Gth,
            SolverArg::Power => Solver::PowerIteration,
        },
        ..SolverOptions::default()
    };
    let sol = solve_truncated(&params, &spec, &opts)?;
    let (residual, max_rate, iterations) = (sol.residual, sol.max_rate, sol.iterations);
    let dist = Distribution::from_weights(sol.states.into_iter().zip(sol.prob), tail)?;
    let mut sink = Sink::new(a.common.out)?;
    sink.emit("exact.csv", &distribution_csv(&dist)?)?;
    let mut m = manifest("exact", Some(&cfg), None);
    m.details = json!({
        "truncation": spec,
        "solver": opts.solver,
        "truncation_tail_mass": tail,
        "states": dist.len(),
        "residual": residual,
        "max_rate": max_rate,
        "iterations": iterations,
    });
    sink.finish(m)
}

#[derive(Serialize)]
struct CompareReport {
    a: String,
    b: String,
    tv: f64,
    states_a: usize,
    states_b: usize,
    max_abs_diff: f64,
    max_abs_diff_state: Option<Vec<u64>>,
    modes_a: Vec<Vec<u64>>,
    modes_b: Vec<Vec<u64>>,
}

fn dimension(d: &Distribution) -> Option<usize> {
    d.support().next().map(State::dim)
}

fn compare(a: CompareArgs) -> Result<()> {
    let pa = read_distribution_csv(&a.a)?;
    let pb = read_distribution_csv(&a.b)?;
    if let (Some(da), Some(db)) = (dimension(&pa), dimension(&pb)) {
        if da != db {
            return Err(Error::InvalidParams(format!(
                "{} has {da} species but {} has {db}",
                a.a.display(),
                a.b.display()
            )));
        }
    }
    let union: BTreeSet<&State> = pa.support().chain(pb.support()).collect();
    let d = dimension(&pa).unwrap_or(2);
    let mut diff = String::new();
    for i in 1..=d {
        let _ = write!(diff, "a{i},");
    }
    diff.push_str("n,prob_a,prob_b,diff\n");
    let mut worst: (f64, Option<&State>) = (0.0, None);
    for s in &union {
        let (x, y) = (pa.prob(s), pb.prob(s));
        if (x - y).abs() > worst.0 {
            worst = ((x - y).abs(), Some(s));
        }
        for c in s.counts() {
            let _ = write!(diff, "{c},");
        }
        let _ = writeln!(diff, "{},{x:.16e},{y:.16e},{:.16e}", s.n(), x - y);
    }
    let counts = |v: Vec<State>| v.into_iter().map(|s| s.counts().to_vec()).collect();
    let report = CompareReport {
        a: a.a.display().to_string(),
        b: a.b.display().to_string(),
        tv: tv_distance(&pa, &pb),
        states_a: pa.len(),
        states_b: pb.len(),
        max_abs_diff: worst.0,
        max_abs_diff_state: worst.1.map(|s| s.counts().to_vec()),
        modes_a: counts(distribution_modes(&pa)),
        modes_b: counts(distribution_modes(&pb)),
    };
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    let mut sink = Sink::new(a.out)?;
    if sink.has_dir() {
        sink.emit("diff.csv", diff.as_bytes())?;
    }
    sink.emit("compare.json", &bytes)?;
    let mut m = manifest("compare", None, None);
    m.details = json!({ "a": report.a, "b": report.b, "tv": report.tv });
    sink.finish(m)
}

fn regimes(a: RegimesArgs) -> Result<()> {
    let cfg = load_params(&a.config)?;
    let base = scaled(&cfg, "regimes")?;
    check_tail_tol(a.tail_tol)?;
    let mut table = String::from("V,D,DV,d,regime,near_tie,mode_count,top_mode,top_log_prob,modes\n");
    for &v in &a.volumes {
        for &dd in &a.flows {
            let sp = ScaledParams::new(v, dd, base.kappa_prime().to_vec())?;
            let label = regime_classify(&sp);
            let modes = if sp.d() == 2 { modes_d2(&sp.to_unscaled(), a.tail_tol)? } else { Vec::new() };
            let top = modes.iter().max_by(|x, y| x.1.total_cmp(&y.1));
            let mut listed: Vec<String> = modes
                .iter()
                .take(MODES_LISTED)
                .map(|(s, _)| join(s.counts(), ":"))
                .collect();
            if modes.len() > MODES_LISTED {
                listed.push("...".into());
            }
            let _ = writeln!(
                table,
                "{v},{dd},{},{},{},{},{},{},{},{}",
                label.dv,
                label.d,
                label.value,
                label.near_tie,
                modes.len(),
                top.map_or(String::new(), |(s, _)| join(s.counts(), ":")),
                top.map_or(String::new(), |(_, l)| format!("{l:.16e}")),
                listed.join(" "),
            );
        }
    }
    let mut sink = Sink::new(a.out)?;
    sink.emit("regimes.csv", table.as_bytes())?;
    let mut m = manifest("regimes", Some(&cfg), None);
    m.details = json!({ "volumes": a.volumes, "flows": a.flows, "tail_tol": a.tail_tol });
    sink.finish(m)
}

fn join(xs: &[u64], sep: &str) -> String {
    xs.iter().map(u64::to_string).collect::<Vec<_>>().join(sep)
}
