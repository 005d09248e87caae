//! `bellforge` — Bell-functional construction, expected key-rate sweeps,
//! random-measurement surveys, and Monte-Carlo protocol simulation.
//!
//! Every command reads a JSON config (`--config`), writes its artifacts under
//! `--out`, and is deterministic given `(config, --seed)`. Exit codes:
//! 0 success, 2 classical/infeasible inputs, 3 solver failure, 1 anything
//! else. Worker-thread count comes from `BELLFORGE_THREADS` (default 1).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use bellforge::experiments::{
    budget_from, default_n_grid, keyrate_curve, random_settings_experiment, render_line_svg,
    theta_sweep, write_csv, EpsilonConfig, ExperimentError, KeyrateContext, ParamsConfig,
    SetupConfig, TuneGrid, DEFAULT_PG_POINTS,
};
use bellforge::npa::NpaError;
use bellforge::polytope::{optimal_hyperplane, render_tabular, PolytopeError};
use bellforge::protocol::{
    abort_statistics, run_protocol, simulate_rounds, ProtocolError, RoundRecord,
};
use bellforge::quantum::pe_behavior;

#[derive(Parser)]
#[command(
    name = "bellforge",
    version,
    about = "Bell-inequality optimization and finite-size key-rate analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct the optimal Bell functional for a setup's exact behavior.
    BellOpt(CommonArgs),
    /// Expected key-rate curves over round counts, or a tilt-angle sweep.
    KeyrateSweep(CommonArgs),
    /// Fraction of Haar-random settings achieving a positive key rate.
    RandomSettings(CommonArgs),
    /// Monte-Carlo protocol run (single, or abort statistics with --trials).
    Simulate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// RNG seed for stochastic commands.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for CSV/JSON/SVG artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Trial-count override for Monte-Carlo commands.
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BellOptConfig {
    setup: SetupConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyrateSweepConfig {
    setup: SetupConfig,
    /// Noise weights; one curve (and CSV) per entry. Empty: the setup's own.
    #[serde(default)]
    p_grid: Vec<f64>,
    /// Round counts; empty selects 10⁴..10¹⁵, six points per decade.
    #[serde(default)]
    n_grid: Vec<u64>,
    /// Tilt angles; non-empty switches to a θ sweep at fixed `n_rounds`.
    #[serde(default)]
    theta_grid: Vec<f64>,
    #[serde(default)]
    n_rounds: Option<u64>,
    #[serde(default)]
    eps: Option<EpsilonConfig>,
    #[serde(default)]
    tune: Option<TuneGrid>,
    /// Divide rates by log₂ d (per-symbol normalization).
    #[serde(default)]
    normalize: bool,
    #[serde(default)]
    svg: bool,
    #[serde(default)]
    pg_points: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomSettingsConfig {
    m: usize,
    d: usize,
    #[serde(default)]
    p_grid: Vec<f64>,
    #[serde(default)]
    n_rounds: Option<u64>,
    #[serde(default)]
    eps: Option<EpsilonConfig>,
    #[serde(default)]
    trials: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    setup: SetupConfig,
    params: ParamsConfig,
    /// Also dump the full round transcript as CSV (single-run mode).
    #[serde(default)]
    dump_transcript: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BellOpt(args) => cmd_bell_opt(args),
        Command::KeyrateSweep(args) => cmd_keyrate_sweep(args),
        Command::RandomSettings(args) => cmd_random_settings(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &ExperimentError) -> u8 {
    match e {
        ExperimentError::Polytope(p) => polytope_code(p),
        ExperimentError::Npa(n) => npa_code(n),
        ExperimentError::Protocol(p) => protocol_code(p),
        _ => 1,
    }
}

fn polytope_code(e: &PolytopeError) -> u8 {
    match e {
        PolytopeError::InfeasibleClassical => 2,
        PolytopeError::Solver(_) => 3,
        _ => 1,
    }
}

fn npa_code(e: &NpaError) -> u8 {
    match e {
        NpaError::BetaAboveQuantumMaximum { .. } | NpaError::BetaBelowClassicalBound { .. } => 2,
        NpaError::Solver(_) => 3,
        _ => 1,
    }
}

fn protocol_code(e: &ProtocolError) -> u8 {
    match e {
        ProtocolError::Polytope(p) => polytope_code(p),
        ProtocolError::Npa(n) => npa_code(n),
        _ => 1,
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| ExperimentError::BadConfig(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String, ExperimentError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| ExperimentError::BadConfig(format!("serialize: {e}")))?;
    std::fs::write(path, &json)?;
    Ok(json)
}

fn provenance<T: Serialize>(config: &T, seed: u64) -> serde_json::Value {
    serde_json::json!({ "config": config, "seed": seed })
}

fn cmd_bell_opt(args: CommonArgs) -> Result<(), ExperimentError> {
    let config: BellOptConfig = read_config(&args.config)?;
    let setup = config.setup.build()?;
    let behavior = pe_behavior(&setup)?;
    let functional = optimal_hyperplane(&behavior)?;
    let table = render_tabular(&functional);
    println!("{table}");
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("bell_functional.txt"), &table)?;
    write_json(&args.out.join("bell_functional.json"), &functional)?;
    println!(
        "violation {:.6} over classical bound {:.6}; wrote bell_functional.{{txt,json}}",
        functional.violation, functional.c
    );
    Ok(())
}

const KEYRATE_COLUMNS: [&str; 7] = ["n_rounds", "rate", "key_length", "xi", "eta", "beta", "pg"];

fn cmd_keyrate_sweep(args: CommonArgs) -> Result<(), ExperimentError> {
    let config: KeyrateSweepConfig = read_config(&args.config)?;
    let eps = budget_from(config.eps)?;
    let tune = config.tune.clone().unwrap_or_default();
    let pg_points = config.pg_points.unwrap_or(DEFAULT_PG_POINTS);
    std::fs::create_dir_all(&args.out)?;

    if !config.theta_grid.is_empty() {
        if config.setup.preset.as_deref() != Some("chain3") {
            return Err(ExperimentError::BadConfig(
                "theta sweeps apply to the `chain3` preset".into(),
            ));
        }
        let n_rounds = config.n_rounds.ok_or_else(|| {
            ExperimentError::BadConfig("theta sweep needs a fixed n_rounds".into())
        })?;
        let sweep = theta_sweep(
            config.setup.p,
            &config.theta_grid,
            n_rounds,
            eps,
            &tune,
            pg_points,
        )?;
        let rows: Vec<Vec<f64>> = sweep
            .iter()
            .map(|(theta, pt)| {
                vec![*theta, pt.rate, pt.key_length, pt.xi, pt.eta, pt.beta, pt.pg]
            })
            .collect();
        write_csv(
            &args.out.join("keyrate_theta.csv"),
            "bellforge-keyrate-theta-v1",
            &provenance(&config, args.seed),
            &["theta", "rate", "key_length", "xi", "eta", "beta", "pg"],
            &rows,
        )?;
        for (theta, pt) in &sweep {
            println!("theta = {theta:+.5}  rate = {:.6}", pt.rate);
        }
        if config.svg {
            let series = vec![(
                format!("N={n_rounds}"),
                sweep.iter().map(|(t, pt)| (*t, pt.rate)).collect(),
            )];
            std::fs::write(
                args.out.join("keyrate_theta.svg"),
                render_line_svg("rate vs tilt", "theta", "rate", &series, false),
            )?;
        }
        return Ok(());
    }

    let n_grid = if config.n_grid.is_empty() {
        default_n_grid()
    } else {
        config.n_grid.clone()
    };
    let p_grid = if config.p_grid.is_empty() {
        vec![config.setup.p]
    } else {
        config.p_grid.clone()
    };
    let mut series = Vec::new();
    for &p in &p_grid {
        let setup = config.setup.with_noise(p).build()?;
        let ctx = KeyrateContext::build(&setup, eps, pg_points)?;
        let denom = if config.normalize {
            (ctx.d as f64).log2()
        } else {
            1.0
        };
        let points = keyrate_curve(&ctx, &n_grid, &tune)?;
        let rows: Vec<Vec<f64>> = points
            .iter()
            .map(|pt| {
                vec![
                    pt.n_rounds as f64,
                    pt.rate / denom,
                    pt.key_length,
                    pt.xi,
                    pt.eta,
                    pt.beta,
                    pt.pg,
                ]
            })
            .collect();
        let name = format!("keyrate_p{p}.csv");
        let prov = serde_json::json!({ "config": config, "p": p, "seed": args.seed });
        write_csv(
            &args.out.join(&name),
            "bellforge-keyrate-v1",
            &prov,
            &KEYRATE_COLUMNS,
            &rows,
        )?;
        match points.iter().find(|pt| pt.rate > 0.0) {
            Some(pt) => println!(
                "p = {p}: first positive rate at N = {}, rate at N = {} is {:.6} ({name})",
                pt.n_rounds,
                points.last().unwrap().n_rounds,
                points.last().unwrap().rate / denom,
            ),
            None => println!("p = {p}: no positive rate on the grid ({name})"),
        }
        series.push((
            format!("p={p}"),
            points
                .iter()
                .map(|pt| (pt.n_rounds as f64, pt.rate / denom))
                .collect(),
        ));
    }
    if config.svg {
        std::fs::write(
            args.out.join("keyrate.svg"),
            render_line_svg("expected key rate", "rounds", "rate", &series, true),
        )?;
    }
    Ok(())
}

fn cmd_random_settings(args: CommonArgs) -> Result<(), ExperimentError> {
    let config: RandomSettingsConfig = read_config(&args.config)?;
    let eps = budget_from(config.eps)?;
    let n_rounds = config.n_rounds.unwrap_or(1_000_000_000_000);
    let trials = args.trials.or(config.trials).unwrap_or(1000);
    let p_grid = if config.p_grid.is_empty() {
        vec![0.0]
    } else {
        config.p_grid.clone()
    };
    std::fs::create_dir_all(&args.out)?;
    println!(
        "[{}, {}] settings, d = {}, N = {n_rounds}, {trials} trials per cell",
        config.m, config.m, config.d
    );
    let mut rows = Vec::new();
    for &p in &p_grid {
        let cell =
            random_settings_experiment(config.m, config.d, p, trials, n_rounds, eps, args.seed)?;
        println!(
            "p = {p:<6} nonzero-key fraction = {:.3}  (95% CI {:.3}–{:.3})",
            cell.fraction, cell.wilson_low, cell.wilson_high
        );
        rows.push(vec![
            cell.m as f64,
            cell.d as f64,
            cell.p,
            cell.n_rounds as f64,
            cell.trials as f64,
            cell.nonzero as f64,
            cell.fraction,
            cell.wilson_low,
            cell.wilson_high,
        ]);
    }
    write_csv(
        &args.out.join("random_settings.csv"),
        "bellforge-random-settings-v1",
        &provenance(&config, args.seed),
        &[
            "m",
            "d",
            "p",
            "n_rounds",
            "trials",
            "nonzero",
            "fraction",
            "wilson_low",
            "wilson_high",
        ],
        &rows,
    )?;
    Ok(())
}

fn cmd_simulate(args: CommonArgs) -> Result<(), ExperimentError> {
    let config: SimulateConfig = read_config(&args.config)?;
    let setup = config.setup.build()?;
    let params = config.params.build(setup.outcomes())?;
    std::fs::create_dir_all(&args.out)?;
    let trials = args.trials.unwrap_or(1);
    if trials > 1 {
        let stats = abort_statistics(&setup, &params, trials, args.seed)?;
        let json = write_json(&args.out.join("abort_stats.json"), &stats)?;
        println!("{json}");
        return Ok(());
    }
    if config.dump_transcript {
        let records: Vec<RoundRecord> = simulate_rounds(&setup, &params, args.seed)?.collect();
        let mut text = String::new();
        let _ = writeln!(text, "# params: {}", provenance(&config, args.seed));
        let _ = writeln!(text, "# schema: bellforge-transcript-v1");
        let _ = writeln!(text, "t,x,y,a,b");
        for r in &records {
            let _ = writeln!(text, "{},{},{},{},{}", r.t as u8, r.x, r.y, r.a, r.b);
        }
        std::fs::write(args.out.join("transcript.csv"), text)?;
    }
    let outcome = run_protocol(&setup, &params, args.seed)?;
    let json = write_json(&args.out.join("run_outcome.json"), &outcome)?;
    println!("{json}");
    Ok(())
}
