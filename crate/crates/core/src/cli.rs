//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage or
//! configuration error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::closed_form::{
    optimal_strategy, proportional_objective, transversality_threshold, value, value_d1, value_d2,
    ClosedFormSolution, ProportionalStrategy,
};
use crate::error::{MertonError, Result};
use crate::hamiltonian::hjb_residual;
use crate::hjb_numeric::{policy_iteration, Grid};
use crate::model::{ModelFile, ModelSpec};
use crate::output::{fmt_f64, paths_csv, table_csv, to_json_string, write_atomic, PathSummary};
use crate::sde::{optimal_path_exact, simulate, Scheme, SimConfig};
use crate::verify::{
    default_sweep_grid, log_grid, mc_objective, objective_config, run_battery, strategy_grid_sweep,
    transversality_probe, BatteryConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

const DEFAULT_SEED: u64 = 20240601;

#[derive(Debug, Parser)]
#[command(
    name = "merton",
    version,
    about = "Infinite-horizon Merton problem: closed form, simulation and verification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON model file {"r", "mu", "sigma", "rho", "gamma"}
    #[arg(long)]
    pub model: PathBuf,
    /// Directory for output files; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct StrategyArgs {
    /// Consumption fraction c/x; the optimal strategy is used when absent
    #[arg(long, requires = "theta")]
    pub kappa: Option<f64>,
    /// Risky fraction pi/x
    #[arg(long, requires = "kappa", allow_hyphen_values = true)]
    pub theta: Option<f64>,
}

impl StrategyArgs {
    fn resolve(&self) -> Result<Option<ProportionalStrategy>> {
        match (self.kappa, self.theta) {
            (Some(k), Some(t)) => ProportionalStrategy::new(k, t).map(Some),
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form constant, optimal fractions and wealth law
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate wealth, consumption and deflator paths
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        strategy: StrategyArgs,
        #[arg(long, default_value_t = 1.0)]
        x: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        paths: usize,
        #[arg(long, value_enum, default_value_t = Scheme::ExactLog)]
        scheme: Scheme,
    },
    /// Monte-Carlo objective of a proportional strategy against the closed form
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        strategy: StrategyArgs,
        #[arg(long, default_value_t = 1.0)]
        x: f64,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
    },
    /// Run the full verification battery
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 2_000)]
        sweep_paths: usize,
        /// Debug: multiply the constant used in the residual sweep
        #[arg(long, default_value_t = 1.0, hide = true)]
        corrupt_a: f64,
    },
    /// Policy iteration for the HJB equation on a log-wealth grid
    Hjb {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
        y_min: f64,
        #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
        y_max: f64,
        #[arg(long, default_value_t = 400)]
        nodes: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
    },
    /// Plot-ready tables: value function, strategy surface, transversality curves
    Report {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve { common }
            | Command::Simulate { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Verify { common, .. }
            | Command::Hjb { common, .. }
            | Command::Report { common } => common,
        }
    }
}

pub fn load_model(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MertonError::InvalidConfig(format!("{}: {e}", path.display())))?;
    ModelSpec::from_json(&text)
        .map_err(|e| MertonError::InvalidConfig(format!("{}: {e}", path.display())))
}

/// Files produced by a command; written only after the command succeeds.
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    stdout: Vec<u8>,
}

impl Outputs {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            stdout: Vec::new(),
        }
    }

    fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        self.file(name, to_json_string(value).into_bytes());
    }

    /// Without `--out`, the file matching the format goes to stdout.
    fn flush(self, out: Option<&Path>, primary: &str, stdout: &mut dyn Write) -> Result<()> {
        let io = |e: std::io::Error| MertonError::InvalidConfig(format!("write failed: {e}"));
        match out {
            Some(dir) => {
                std::fs::create_dir_all(dir)
                    .map_err(|e| MertonError::InvalidConfig(format!("{}: {e}", dir.display())))?;
                for (name, bytes) in &self.files {
                    write_atomic(&dir.join(name), bytes)?;
                }
                stdout.write_all(&self.stdout).map_err(io)
            }
            None => {
                let (_, bytes) = self
                    .files
                    .iter()
                    .find(|(n, _)| n == primary)
                    .expect("command produced its primary output");
                stdout.write_all(bytes).map_err(io)
            }
        }
    }
}

fn pick(format: Format, json_name: &'static str, csv_name: &'static str) -> &'static str {
    match format {
        Format::Json => json_name,
        Format::Csv => csv_name,
    }
}

#[derive(Serialize)]
struct SolveReport {
    model: ModelFile,
    model_digest: String,
    a: f64,
    kappa_hat: f64,
    theta_hat: f64,
    drift_opt: f64,
    vol_opt: f64,
    kappa_max: f64,
    margin: f64,
}

fn cmd_solve(spec: &ModelSpec, common: &Common, sink: &mut dyn Write) -> Result<i32> {
    let sol = ClosedFormSolution::new(spec)?;
    let rep = SolveReport {
        model: ModelFile::from(*spec),
        model_digest: spec.digest(),
        a: sol.a,
        kappa_hat: sol.kappa_hat,
        theta_hat: sol.theta_hat,
        drift_opt: sol.drift_opt,
        vol_opt: sol.vol_opt,
        kappa_max: spec.kappa_max()?,
        margin: spec.margin(),
    };
    let mut out = Outputs::new();
    out.json("solve.json", &rep);
    out.file(
        "solve.csv",
        table_csv(
            &[
                "a",
                "kappa_hat",
                "theta_hat",
                "drift_opt",
                "vol_opt",
                "kappa_max",
                "margin",
            ],
            &[vec![
                rep.a,
                rep.kappa_hat,
                rep.theta_hat,
                rep.drift_opt,
                rep.vol_opt,
                rep.kappa_max,
                rep.margin,
            ]],
        ),
    );
    out.flush(
        common.out.as_deref(),
        pick(common.format, "solve.json", "solve.csv"),
        sink,
    )?;
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    spec: &ModelSpec,
    common: &Common,
    strategy: &StrategyArgs,
    x: f64,
    horizon: f64,
    steps: usize,
    paths: usize,
    scheme: Scheme,
    sink: &mut dyn Write,
) -> Result<i32> {
    let cfg = SimConfig::new(horizon, steps, paths, common.seed, scheme)?;
    let bundle = match strategy.resolve()? {
        Some(s) => simulate(spec, &s, x, &cfg)?,
        None => optimal_path_exact(spec, x, &cfg)?,
    };
    let summary = PathSummary::of(&bundle);
    let mut out = Outputs::new();
    out.file("paths.csv", paths_csv(&bundle));
    out.json(
        "summary.json",
        &json!({ "model_digest": spec.digest(), "summary": summary }),
    );
    out.stdout = format!("seed {}\n", common.seed).into_bytes();
    out.flush(
        common.out.as_deref(),
        pick(common.format, "summary.json", "paths.csv"),
        sink,
    )?;
    Ok(EXIT_OK)
}

fn cmd_evaluate(
    spec: &ModelSpec,
    common: &Common,
    strategy: &StrategyArgs,
    x: f64,
    paths: usize,
    sink: &mut dyn Write,
) -> Result<i32> {
    let strat = match strategy.resolve()? {
        Some(s) => s,
        None => optimal_strategy(spec)?,
    };
    let cfg = objective_config(spec, &strat, paths, common.seed)?;
    let eval = mc_objective(spec, &strat, x, &cfg)?;
    let closed = proportional_objective(spec, &strat, x)?;
    let v = value(spec, x)?;
    let rep = json!({
        "model_digest": spec.digest(),
        "strategy": strat,
        "x": x,
        "seed": common.seed,
        "steps": cfg.steps,
        "mc": eval,
        "proportional_objective": closed,
        "value": v,
        "ci_contains_objective": eval.contains(closed),
    });
    let mut out = Outputs::new();
    out.json("evaluate.json", &rep);
    out.file(
        "evaluate.csv",
        table_csv(
            &[
                "kappa",
                "theta",
                "x",
                "estimate",
                "stderr",
                "tail_bound",
                "horizon",
                "objective",
                "value",
            ],
            &[vec![
                strat.kappa,
                strat.theta,
                x,
                eval.estimate,
                eval.stderr,
                eval.tail_bound,
                eval.horizon,
                closed,
                v,
            ]],
        ),
    );
    out.flush(
        common.out.as_deref(),
        pick(common.format, "evaluate.json", "evaluate.csv"),
        sink,
    )?;
    Ok(EXIT_OK)
}

fn cmd_verify(
    spec: &ModelSpec,
    common: &Common,
    paths: usize,
    sweep_paths: usize,
    corrupt_a: f64,
    sink: &mut dyn Write,
) -> Result<i32> {
    let cfg = BatteryConfig {
        seed: common.seed,
        paths,
        sweep_paths,
        corrupt_a,
        ..BatteryConfig::default()
    };
    let report = run_battery(spec, &cfg)?;
    let mut out = Outputs::new();
    out.json("verify.json", &report);
    let rows: Vec<Vec<String>> = report
        .verdicts
        .iter()
        .map(|v| {
            vec![
                v.name.clone(),
                fmt_f64(v.estimate),
                fmt_f64(v.stderr),
                fmt_f64(v.tail_bound),
                fmt_f64(v.reference),
                v.pass.to_string(),
                v.inputs_digest.clone(),
            ]
        })
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| MertonError::InvalidConfig(format!("csv: {e}"));
    w.write_record([
        "name",
        "estimate",
        "stderr",
        "tail_bound",
        "reference",
        "pass",
        "inputs_digest",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    out.file(
        "verify.csv",
        w.into_inner()
            .map_err(|e| MertonError::InvalidConfig(e.to_string()))?,
    );
    let mut text = String::new();
    for v in &report.verdicts {
        text.push_str(&format!(
            "{} {}\n",
            if v.pass { "PASS" } else { "FAIL" },
            v.name
        ));
    }
    text.push_str(if report.all_pass {
        "all checks passed\n"
    } else {
        "verification failed\n"
    });
    out.stdout = text.into_bytes();
    let primary = pick(common.format, "verify.json", "verify.csv");
    out.flush(common.out.as_deref(), primary, sink)?;
    Ok(if report.all_pass {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_hjb(
    spec: &ModelSpec,
    common: &Common,
    y_min: f64,
    y_max: f64,
    nodes: usize,
    tol: f64,
    max_iter: usize,
    sink: &mut dyn Write,
) -> Result<i32> {
    let grid = Grid::new(y_min, y_max, nodes)?;
    let sol = policy_iteration(spec, &grid, tol, max_iter)?;
    let rows: Vec<Vec<f64>> = sol.table(spec)?.iter().map(|r| r.to_vec()).collect();
    let rep = json!({
        "model_digest": spec.digest(),
        "grid": grid,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "final_residual": sol.final_residual,
        "residual_history": sol.residual_history,
        "boundary_mode": sol.boundary_mode,
        "scalar_constant": sol.scalar_constant,
        "max_rel_error": sol.max_rel_error(spec)?,
    });
    let mut out = Outputs::new();
    out.json("hjb.json", &rep);
    out.file(
        "hjb_nodes.csv",
        table_csv(
            &["x", "v_num", "v_closed", "rel_err", "c_over_x", "pi_over_x"],
            &rows,
        ),
    );
    out.flush(
        common.out.as_deref(),
        pick(common.format, "hjb.json", "hjb_nodes.csv"),
        sink,
    )?;
    Ok(EXIT_OK)
}

fn cmd_report(spec: &ModelSpec, common: &Common, sink: &mut dyn Write) -> Result<i32> {
    let sol = ClosedFormSolution::new(spec)?;
    let xs = log_grid(1e-2, 1e2, 101);
    let value_rows = xs
        .iter()
        .map(|&x| {
            let v = value(spec, x)?;
            let p = value_d1(spec, x)?;
            let pp = value_d2(spec, x)?;
            let res = hjb_residual(spec, x, v, p, pp)?;
            Ok(vec![x, v, p, pp, res])
        })
        .collect::<Result<Vec<_>>>()?;

    let (kappas, thetas) = default_sweep_grid(spec)?;
    let sweep = strategy_grid_sweep(spec, 1.0, &kappas, &thetas)?;
    let sweep_rows: Vec<Vec<f64>> = sweep
        .table
        .iter()
        .map(|c| vec![c.kappa, c.theta, c.objective])
        .collect();

    let star = transversality_threshold(spec);
    let ts: Vec<f64> = (0..=50).map(|k| 2.0 * k as f64).collect();
    let mut tv_rows = Vec::new();
    for alpha in [0.8 * star, star, 1.2 * star]
        .into_iter()
        .filter(|a| *a > 0.0)
    {
        for (t, w) in transversality_probe(spec, alpha, &ts)?.table {
            tv_rows.push(vec![alpha, t, w]);
        }
    }

    let rep = json!({
        "model": ModelFile::from(*spec),
        "model_digest": spec.digest(),
        "solution": sol,
        "kappa_max": spec.kappa_max()?,
        "transversality_threshold": star,
        "sweep_argmax": sweep.argmax,
    });
    let mut out = Outputs::new();
    out.json("report.json", &rep);
    out.file(
        "value.csv",
        table_csv(&["x", "v", "v_x", "v_xx", "hjb_residual"], &value_rows),
    );
    out.file(
        "sweep.csv",
        table_csv(&["kappa", "theta", "objective"], &sweep_rows),
    );
    out.file(
        "transversality.csv",
        table_csv(&["alpha", "t", "discounted_value"], &tv_rows),
    );
    out.flush(
        common.out.as_deref(),
        pick(common.format, "report.json", "value.csv"),
        sink,
    )?;
    Ok(EXIT_OK)
}

/// Runs a parsed command, writing console output to `sink`; returns the exit code.
pub fn run(cli: &Cli, sink: &mut dyn Write) -> Result<i32> {
    let spec = load_model(&cli.command.common().model)?;
    match &cli.command {
        Command::Solve { common } => cmd_solve(&spec, common, sink),
        Command::Simulate {
            common,
            strategy,
            x,
            horizon,
            steps,
            paths,
            scheme,
        } => cmd_simulate(
            &spec, common, strategy, *x, *horizon, *steps, *paths, *scheme, sink,
        ),
        Command::Evaluate {
            common,
            strategy,
            x,
            paths,
        } => cmd_evaluate(&spec, common, strategy, *x, *paths, sink),
        Command::Verify {
            common,
            paths,
            sweep_paths,
            corrupt_a,
        } => cmd_verify(&spec, common, *paths, *sweep_paths, *corrupt_a, sink),
        Command::Hjb {
            common,
            y_min,
            y_max,
            nodes,
            tol,
            max_iter,
        } => cmd_hjb(&spec, common, *y_min, *y_max, *nodes, *tol, *max_iter, sink),
        Command::Report { common } => cmd_report(&spec, common, sink),
    }
}

/// Parses `args`, runs the command and maps errors to exit code 2.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
