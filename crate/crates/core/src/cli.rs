//! Batch driver behind the `optlearn` binary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::config::{InitKind, PolicySource, RunConfig};
use crate::error::{Error, Result};
use crate::grid::{Action, Grid, PolicyField, ValueField};
use crate::io;
use crate::simulator::{estimate_value_mc, ConstantPolicy, McEstimate, Policy, SimOptions};
use crate::solver::{discrete_residual, extract_policy, solve_value, Init, SolveReport};
use crate::verify::{
    check_complementarity, check_mc_against_value, check_residual_sign, check_value_bounds,
    comparison_experiment, doubling_ladder, sign_tolerance, theta_sensitivity, ComparisonOptions,
    OperatorForm, SignCheck, SignSide, VerifyReport,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Solve for the value function and extract the policy.
    Solve,
    /// Monte-Carlo simulation of the policy from `x0`.
    Simulate,
    /// Two-sided comparison run and residual-sign checks.
    Verify,
    /// Doubling-of-variables bound over the alpha and eps ladders.
    Doubling,
    /// Everything above plus the value/Monte-Carlo cross-check.
    All,
}

#[derive(Debug, Parser)]
#[command(
    name = "optlearn",
    version,
    about = "Optimal learning HJB solver and checks"
)]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Simulation seed (overrides `[simulate] seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub nodes: usize,
    #[serde(flatten)]
    pub report: SolveReport,
    pub value_at_x0: f64,
    pub stop_fraction: f64,
    /// Per-axis `[min, max]` coordinates of continuation nodes.
    pub continuation_box: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub policy: PolicySource,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub t_max: f64,
    #[serde(flatten)]
    pub estimate: McEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub command: Command,
    pub passed: bool,
    pub failures: Vec<String>,
    pub config: RunConfig,
    pub solve: Option<SolveSummary>,
    pub simulate: Option<SimulateSummary>,
    pub checks: Vec<VerifyReport>,
}

struct Run<'a> {
    config: &'a RunConfig,
    out: &'a Path,
    quiet: bool,
    solved: Option<(ValueField, PolicyField)>,
    summary: Summary,
}

impl Run<'_> {
    fn note(&self, message: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", message.as_ref());
        }
    }

    fn solve(&mut self) -> Result<()> {
        let cfg = self.config;
        let grid = Grid::new(&cfg.grid)?;
        let init = match cfg.solver.init {
            InitKind::Obstacle => Init::FromObstacle,
            InitKind::Upper => Init::FromUpper,
        };
        let (value, report) = solve_value(&cfg.spec, &grid, init, &cfg.solver.options())?;
        self.note(format!(
            "solve: {} sweeps, residual {:e}, {:.2}s",
            report.iterations, report.residual, report.wall_time_secs
        ));
        let policy = extract_policy(&cfg.spec, &value, cfg.solver.contact_tol)?;
        io::write_value_csv(&self.out.join("value.csv"), &value)?;
        io::write_policy_csv(&self.out.join("policy.csv"), &policy)?;
        io::write_residual_csv(
            &self.out.join("residual.csv"),
            &discrete_residual(&cfg.spec, &value)?,
        )?;
        self.summary.solve = Some(SolveSummary {
            nodes: grid.len(),
            report,
            value_at_x0: value.interpolate(&cfg.simulate.x0),
            stop_fraction: policy.stop_fraction(),
            continuation_box: continuation_box(&policy),
        });
        self.summary
            .checks
            .push(check_value_bounds(&cfg.spec, &value, cfg.solver.tol));
        self.summary
            .checks
            .push(check_complementarity(&cfg.spec, &value, cfg.solver.tol)?);
        self.solved = Some((value, policy));
        Ok(())
    }

    fn simulate(&mut self) -> Result<()> {
        let cfg = self.config;
        let sim = &cfg.simulate;
        let from_file;
        let policy: &dyn Policy = match sim.policy {
            PolicySource::Stop => &ConstantPolicy(Action::Stop),
            PolicySource::Solver => match &self.solved {
                Some((_, p)) => p,
                None => {
                    let path = self.out.join("policy.csv");
                    if !path.exists() {
                        return Err(Error::Dependency(format!(
                            "{} not found: run `solve` first or set `policy = stop` in [simulate]",
                            path.display()
                        )));
                    }
                    from_file = io::read_policy_csv(&path)?;
                    &from_file
                }
            },
        };
        let opts = SimOptions {
            dt: sim.dt,
            t_max: sim.t_max,
        };
        let (estimate, episodes) =
            estimate_value_mc(&cfg.spec, policy, &sim.x0, sim.paths, &opts, sim.seed)?;
        self.note(format!(
            "simulate: mean {:.6} +- {:.2e} over {} paths",
            estimate.mean, estimate.stderr, estimate.paths
        ));
        if sim.write_episodes {
            io::write_episodes_csv(&self.out.join("episodes.csv"), &episodes)?;
        }
        self.summary.simulate = Some(SimulateSummary {
            policy: sim.policy,
            x0: sim.x0.clone(),
            dt: sim.dt,
            t_max: sim.t_max,
            estimate,
        });
        Ok(())
    }

    fn cross_check(&mut self) {
        if self.config.simulate.policy != PolicySource::Solver {
            return;
        }
        if let (Some(solve), Some(sim)) = (&self.summary.solve, &self.summary.simulate) {
            let report =
                check_mc_against_value(&self.config.spec, solve.value_at_x0, &sim.estimate);
            self.summary.checks.push(report);
        }
    }

    fn verify(&mut self) -> Result<()> {
        let cfg = self.config;
        let spec = &cfg.spec;
        let grid = Grid::new(&cfg.grid)?;
        let opts = ComparisonOptions::new(cfg.solver.options());
        let (report, below, _) = comparison_experiment(spec, &grid, &opts)?;
        self.note(format!("verify: comparison passed = {}", report.passed));
        self.summary.checks.push(report);

        let u = below.to_log(spec)?;
        let tol = sign_tolerance(spec, &grid, cfg.solver.tol);
        for side in [SignSide::Sub, SignSide::Super] {
            let check = SignCheck::new(side, tol);
            self.summary
                .checks
                .push(check_residual_sign(spec, &u, &check)?);
        }
        self.summary
            .checks
            .push(theta_sensitivity(spec, &u, 0.5, OperatorForm::LogValue)?);
        Ok(())
    }

    fn doubling(&mut self) -> Result<()> {
        let cfg = self.config;
        let grid = Grid::new(&cfg.verify.doubling_n)?;
        let opts = ComparisonOptions::new(cfg.solver.options());
        let (_, below, above) = comparison_experiment(&cfg.spec, &grid, &opts)?;
        let (report, _) = doubling_ladder(
            &below.to_log(&cfg.spec)?,
            &above.to_log(&cfg.spec)?,
            &cfg.verify.alpha,
            &cfg.verify.eps,
            cfg.verify.pair_budget,
        )?;
        self.note(format!("doubling: passed = {}", report.passed));
        self.summary.checks.push(report);
        Ok(())
    }
}

fn continuation_box(policy: &PolicyField) -> Option<Vec<[f64; 2]>> {
    let d = policy.grid.dim();
    let mut bounds: Option<Vec<[f64; 2]>> = None;
    for (k, action) in policy.actions.iter().enumerate() {
        if *action == Action::Stop {
            continue;
        }
        let x = policy.grid.point(k);
        let b = bounds.get_or_insert_with(|| vec![[f64::INFINITY, f64::NEG_INFINITY]; d]);
        for a in 0..d {
            b[a][0] = b[a][0].min(x[a]);
            b[a][1] = b[a][1].max(x[a]);
        }
    }
    bounds
}

/// Executes `command`, writing outputs and `summary.json` under `out`.
pub fn run(command: Command, config: &RunConfig, out: &Path, quiet: bool) -> Result<Summary> {
    std::fs::create_dir_all(out)?;
    let started = Instant::now();
    let mut run = Run {
        config,
        out,
        quiet,
        solved: None,
        summary: Summary {
            command,
            passed: true,
            failures: Vec::new(),
            config: config.clone(),
            solve: None,
            simulate: None,
            checks: Vec::new(),
        },
    };
    match command {
        Command::Solve => run.solve()?,
        Command::Simulate => run.simulate()?,
        Command::Verify => run.verify()?,
        Command::Doubling => run.doubling()?,
        Command::All => {
            run.solve()?;
            run.simulate()?;
            run.cross_check();
            run.verify()?;
            run.doubling()?;
        }
    }
    let mut summary = run.summary;
    summary.failures = summary
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.clone())
        .collect();
    summary.passed = summary.failures.is_empty();
    io::write_json(&out.join("summary.json"), &summary)?;
    if !quiet {
        eprintln!("done in {:.2}s", started.elapsed().as_secs_f64());
    }
    Ok(summary)
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NoConvergence { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    status: &'static str,
    code: &'a str,
    message: String,
}

fn report_error(err: &Error) -> i32 {
    let report = ErrorReport {
        status: "error",
        code: err.code(),
        message: err.to_string(),
    };
    eprintln!(
        "{}",
        serde_json::to_string(&report).unwrap_or_else(|_| err.to_string())
    );
    exit_code(err)
}

fn execute(args: &Args) -> Result<Summary> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.simulate.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output = out.clone();
    }
    let out = config.output.clone();
    match args.threads {
        Some(0) => Err(Error::InvalidArgument("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| run(args.command, &config, &out, args.quiet)),
        None => run(args.command, &config, &out, args.quiet),
    }
}

/// Parses `argv`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_PASS
            };
        }
    };
    match execute(&args) {
        Ok(summary) if summary.passed => EXIT_PASS,
        Ok(summary) => {
            if !args.quiet {
                eprintln!("failed checks: {}", summary.failures.join(", "));
            }
            EXIT_CHECK_FAILED
        }
        Err(err) => report_error(&err),
    }
}
