//! Command-line front end: solve one epoch file, run a Monte Carlo
//! campaign, or run the self-test suite.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use cwls::io::{run_grid, write_outputs, CampaignConfig, EpochFile};
use cwls::reference_solvers::{afm_grid_search, brute_force_cils, oracle_solver, OracleInput};
use cwls::simulator::Method;
use cwls::solver::{self, ObsMode, QMode, SolverParams};
use cwls::Error;

#[derive(Parser)]
#[command(name = "cwls", version, about = "GNSS attitude determination from ambiguous carrier phase")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single epoch file and print the result as JSON.
    Solve(SolveArgs),
    /// Run a Monte Carlo campaign from a config file.
    Campaign(CampaignArgs),
    /// Run the fast invariant suite.
    Selftest,
}

#[derive(Args)]
struct SolveArgs {
    /// Epoch file path.
    path: PathBuf,
    /// Estimator: cwls, afm, cils, or oracle.
    #[arg(long, default_value = "cwls")]
    method: String,
    /// Shortcut for --method oracle (requires ntrue lines in the file).
    #[arg(long)]
    oracle: bool,
    /// Drop the pseudo-range block from the objective.
    #[arg(long)]
    phase_only: bool,
    /// Use only the diagonal of the covariance.
    #[arg(long)]
    diagonal_q: bool,
    /// Candidates kept per baseline.
    #[arg(long, default_value_t = 32)]
    keep_best: usize,
    /// Inter-baseline angle tolerance in degrees (default: noise-scaled).
    #[arg(long)]
    delta_theta_deg: Option<f64>,
    /// Phase noise assumed for the weighting, millimeters.
    #[arg(long, default_value_t = 1.0)]
    sigma_phase_mm: f64,
    /// Code-to-phase variance ratio for the weighting.
    #[arg(long, default_value_t = 1e4)]
    variance_ratio: f64,
    /// AFM grid step in degrees.
    #[arg(long, default_value_t = 2.0)]
    afm_step_deg: f64,
    /// Integer box radius for the brute-force search.
    #[arg(long, default_value_t = 3)]
    cils_box: i64,
}

#[derive(Args)]
struct CampaignArgs {
    /// Campaign config file (key = value lines).
    config: PathBuf,
    /// Comma-separated method list, overriding the config.
    #[arg(long)]
    methods: Option<String>,
    /// Trial count override.
    #[arg(long)]
    trials: Option<usize>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "campaign_out")]
    out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
    /// Record wall-clock timings (makes outputs run-dependent).
    #[arg(long)]
    timing: bool,
}

#[derive(serde::Serialize)]
struct SolveOutput {
    method: String,
    yaw_deg: f64,
    pitch_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    roll_deg: Option<f64>,
    gimbal_lock: bool,
    cost: f64,
    /// Row s, column a, matching the dd line indices.
    ambiguities: Vec<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<cwls::solver::Diagnostics>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(args) => run_solve(&args),
        Command::Campaign(args) => run_campaign_cmd(&args),
        Command::Selftest => run_selftest(),
    }
}

fn run_solve(args: &SolveArgs) -> ExitCode {
    let text = match std::fs::read_to_string(&args.path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.path.display());
            return ExitCode::from(1);
        }
    };
    let file = match EpochFile::parse(&text) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let method = if args.oracle {
        Method::Oracle
    } else {
        match args.method.parse::<Method>() {
            Ok(m) => m,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
    };
    match solve_file(&file, method, args) {
        Ok(output) => {
            println!("{}", serde_json::to_string_pretty(&output).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn solve_file(file: &EpochFile, method: Method, args: &SolveArgs) -> cwls::Result<SolveOutput> {
    let (epoch, h, geometry, _los) =
        file.to_solver_inputs(args.sigma_phase_mm * 1e-3, args.variance_ratio)?;
    let params = SolverParams {
        keep_best: args.keep_best,
        angle_tol: args.delta_theta_deg.map(f64::to_radians),
        q_mode: if args.diagonal_q {
            QMode::Diagonal
        } else {
            QMode::Full
        },
        obs_mode: if args.phase_only {
            ObsMode::PhaseOnly
        } else {
            ObsMode::PhaseAndCode
        },
        ..SolverParams::default()
    };
    let single = geometry.num_baselines() == 1;

    let (rotation, ambiguities, cost, diagnostics) = match method {
        Method::Cwls => {
            let report = solver::solve(&epoch, &h, &geometry, &params)?;
            (
                report.rotation,
                report.ambiguities,
                report.cost,
                Some(report.diagnostics),
            )
        }
        Method::Afm => {
            let res = afm_grid_search(&epoch, &h, &geometry, args.afm_step_deg.to_radians(), &params)?;
            (res.rotation, res.ambiguities, res.cost, None)
        }
        Method::Cils => {
            let res = brute_force_cils(
                &epoch,
                &h,
                &geometry,
                params.q_mode,
                params.obs_mode,
                args.cils_box,
            )?;
            (res.rotation, res.ambiguities, res.cost, None)
        }
        Method::Oracle => {
            let n_true = file.n_true.as_ref().ok_or_else(|| {
                Error::InvalidInput("--oracle needs ntrue lines in the epoch file".into())
            })?;
            let input = OracleInput::new(&epoch, &h, &geometry, n_true)?;
            let est = oracle_solver(&input, params.q_mode, params.obs_mode)?;
            let n_hat =
                solver::ambiguity_from_rotation(&est.rotation, &epoch.phase, &h, &geometry);
            (est.rotation, n_hat, est.cost, None)
        }
    };

    let attitude = if single {
        let r = rotation.column(0).into_owned();
        let (yaw, pitch) = cwls::obs_model::angles_from_direction(&r);
        cwls::obs_model::Attitude::new(yaw, pitch, 0.0)
    } else {
        cwls::obs_model::rotation_to_euler(&rotation)
    };

    let amb_rows: Vec<Vec<i64>> = (0..ambiguities.nrows())
        .map(|i| (0..ambiguities.ncols()).map(|j| ambiguities[(i, j)]).collect())
        .collect();
    Ok(SolveOutput {
        method: method.name().to_string(),
        yaw_deg: attitude.yaw.to_degrees(),
        pitch_deg: attitude.pitch.to_degrees(),
        roll_deg: (!single).then(|| attitude.roll.to_degrees()),
        gimbal_lock: attitude.gimbal_lock,
        cost,
        ambiguities: amb_rows,
        diagnostics,
    })
}

fn run_campaign_cmd(args: &CampaignArgs) -> ExitCode {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(1);
        }
    };
    let mut cfg = match CampaignConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(methods) = &args.methods {
        match methods
            .split(',')
            .map(|m| m.parse::<Method>())
            .collect::<cwls::Result<Vec<_>>>()
        {
            Ok(ms) => cfg.methods = ms,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.timing = cfg.timing || args.timing;
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }

    let t0 = Instant::now();
    let grid = match run_grid(&cfg, |cell| {
        eprintln!(
            "cell baselines={} sats={} sigma={}mm: {}",
            cell.baselines,
            cell.sats,
            cell.sigma_phase_mm,
            cell.methods
                .iter()
                .map(|m| format!("{} {:.2}%", m.method.name(), m.success_rate_pct))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match write_outputs(&grid, &args.out, args.force) {
        Ok(files) => {
            eprintln!(
                "wrote {} files to {} in {:.1}s",
                files.len(),
                args.out.display(),
                t0.elapsed().as_secs_f64()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run_selftest() -> ExitCode {
    let t0 = Instant::now();
    let results = cwls::selftest::run();
    let mut failed = 0;
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {} ({})", r.name, r.detail);
        if !r.passed {
            failed += 1;
        }
    }
    println!(
        "{}/{} checks passed in {:.2}s",
        results.len() - failed,
        results.len(),
        t0.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
