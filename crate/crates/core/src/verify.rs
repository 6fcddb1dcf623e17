//! Executable checks of the structural claims: Monte-Carlo objective against
//! the closed form, the deflated budget constraint, the martingale mean,
//! homogeneity, the HJB residual, optimality over proportional strategies and
//! the transversality counterexample.
//!
//! Statistical checks pass when the target lies within three standard errors
//! plus the analytic truncation bound of the estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::closed_form::{
    growth_exponent, merton_constant, optimal_strategy, proportional_objective,
    transversality_exponent, transversality_threshold, value, value_d1, value_d2, wealth_power,
    ProportionalStrategy,
};
use crate::error::{MertonError, Result};
use crate::hamiltonian::hjb_residual;
use crate::hjb_numeric::{policy_iteration, solve_scalar_constant, Grid};
use crate::model::{ModelFile, ModelSpec};
use crate::output::to_json_string;
use crate::sde::{
    check_inputs, deflated_consumption, exp_segment, fold_paths, map_paths,
    running_deflated_consumption, PathModel, Scheme, SimConfig,
};
use crate::stats::SampleStats;

/// Width of the confidence band in standard errors.
pub const Z: f64 = 3.0;

/// Quadrature step used by the default configurations.
const DT: f64 = 0.1;
const MAX_STEPS: usize = 4000;

/// Relative allowance for floating-point rounding in otherwise exact comparisons.
const ROUNDING: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    pub estimate: f64,
    pub stderr: f64,
    /// Bound on the absolute value of the remainder beyond the horizon.
    pub tail_bound: f64,
    pub n_paths: usize,
    pub horizon: f64,
}

impl EvalResult {
    pub fn half_width(&self) -> f64 {
        Z * self.stderr + self.tail_bound
    }

    pub fn lower(&self) -> f64 {
        self.estimate - self.half_width()
    }

    pub fn upper(&self) -> f64 {
        self.estimate + self.half_width()
    }

    /// Whether `target` lies in the band, with a rounding allowance relative to `target`.
    pub fn contains(&self, target: f64) -> bool {
        (self.estimate - target).abs() <= self.half_width() + ROUNDING * target.abs()
    }
}

fn steps_for(horizon: f64, dt: f64) -> usize {
    ((horizon / dt).ceil() as usize).clamp(1, MAX_STEPS)
}

/// `max(10, 12 / (rho - g))`, so the tail is at most `e^-12` of the leading scale.
pub fn default_horizon(spec: &ModelSpec, strat: &ProportionalStrategy) -> Result<f64> {
    let g = growth_exponent(spec, strat);
    if !(spec.rho() > g) {
        return Err(MertonError::Divergent {
            growth: g,
            rho: spec.rho(),
        });
    }
    Ok((12.0 / (spec.rho() - g)).max(10.0))
}

/// Exact-scheme configuration on the default horizon.
pub fn objective_config(
    spec: &ModelSpec,
    strat: &ProportionalStrategy,
    paths: usize,
    seed: u64,
) -> Result<SimConfig> {
    let horizon = default_horizon(spec, strat)?;
    SimConfig::new(
        horizon,
        steps_for(horizon, DT),
        paths,
        seed,
        Scheme::ExactLog,
    )
}

/// Monte-Carlo estimate of `E int_0^T e^(-rho s) u(c_s) ds` under a
/// proportional strategy, with the analytic bound on the remainder past `T`.
pub fn mc_objective(
    spec: &ModelSpec,
    strat: &ProportionalStrategy,
    x: f64,
    cfg: &SimConfig,
) -> Result<EvalResult> {
    check_inputs(x, cfg)?;
    let strat = ProportionalStrategy::new(strat.kappa, strat.theta)?;
    if strat.kappa == 0.0 {
        return Err(MertonError::InvalidStrategy(
            "zero consumption has objective -inf".to_string(),
        ));
    }
    let g = growth_exponent(spec, &strat);
    let rho = spec.rho();
    if !(rho > g) {
        return Err(MertonError::Divergent { growth: g, rho });
    }
    let gamma = spec.gamma();
    let scale = wealth_power(spec, strat.kappa) / (1.0 - gamma);
    let model = PathModel::proportional(spec, &strat, cfg.scheme);
    let samples = map_paths(&model, x, cfg, |view| {
        let mut acc = 0.0;
        for w in view.points.windows(2) {
            let l0 = (1.0 - gamma) * w[0].log_x - rho * w[0].t;
            let l1 = (1.0 - gamma) * w[1].log_x - rho * w[1].t;
            acc += exp_segment(l0, l1, w[1].t - w[0].t);
        }
        scale * acc
    });
    let stats = SampleStats::from_slice(&samples);
    let lead = (wealth_power(spec, x * strat.kappa) / (1.0 - gamma)).abs();
    let tail_bound = lead * ((g - rho) * cfg.horizon).exp() / (rho - g);
    Ok(EvalResult {
        estimate: stats.mean,
        stderr: stats.stderr,
        tail_bound,
        n_paths: cfg.paths,
        horizon: cfg.horizon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetReport {
    pub eval: EvalResult,
    /// `x (1 - e^(-kappa T))`
    pub analytic: f64,
    /// `estimate - 3 stderr <= x`
    pub pass: bool,
    pub matches_analytic: bool,
}

/// Monte-Carlo estimate of `E int_0^T Y_s c_s ds` against the initial wealth.
pub fn budget_check(
    spec: &ModelSpec,
    strat: &ProportionalStrategy,
    x: f64,
    cfg: &SimConfig,
) -> Result<BudgetReport> {
    check_inputs(x, cfg)?;
    let strat = ProportionalStrategy::new(strat.kappa, strat.theta)?;
    let model = PathModel::proportional(spec, &strat, cfg.scheme);
    let samples = map_paths(&model, x, cfg, |view| {
        deflated_consumption(strat.kappa, view.points)
    });
    let stats = SampleStats::from_slice(&samples);
    let eval = EvalResult {
        estimate: stats.mean,
        stderr: stats.stderr,
        tail_bound: 0.0,
        n_paths: cfg.paths,
        horizon: cfg.horizon,
    };
    let analytic = -x * (-strat.kappa * cfg.horizon).exp_m1();
    Ok(BudgetReport {
        eval,
        analytic,
        pass: eval.estimate - Z * eval.stderr <= x * (1.0 + ROUNDING),
        matches_analytic: eval.contains(analytic),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingalePoint {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub points: Vec<MartingalePoint>,
    pub pass_fraction: f64,
    pub max_abs_drift: f64,
    pub pass: bool,
}

/// Sample mean of `M_t = Y_t X_t + int_0^t Y c ds` at every grid time;
/// passes when at least 95% of the times are within three standard errors of `x`.
pub fn martingale_check(
    spec: &ModelSpec,
    strat: &ProportionalStrategy,
    x: f64,
    cfg: &SimConfig,
) -> Result<MartingaleReport> {
    check_inputs(x, cfg)?;
    let strat = ProportionalStrategy::new(strat.kappa, strat.theta)?;
    let model = PathModel::proportional(spec, &strat, cfg.scheme);
    let width = cfg.steps + 1;
    let (sum, sum_sq) = fold_paths(
        &model,
        x,
        cfg,
        || (vec![0.0; width], vec![0.0; width]),
        |acc, view| {
            let mut running = Vec::with_capacity(width);
            running_deflated_consumption(strat.kappa, view.points, &mut running);
            for (k, p) in view.points.iter().enumerate() {
                let m = (p.log_x + p.log_y).exp() + running[k];
                acc.0[k] += m;
                acc.1[k] += m * m;
            }
        },
        |acc, part| {
            for k in 0..width {
                acc.0[k] += part.0[k];
                acc.1[k] += part.1[k];
            }
        },
    );
    let points: Vec<MartingalePoint> = (0..width)
        .map(|k| {
            let s = SampleStats::from_sums(cfg.paths, sum[k], sum_sq[k]);
            let pass = (s.mean - x).abs() <= Z * s.stderr + 1e-12 * x;
            MartingalePoint {
                t: cfg.time(k),
                mean: s.mean,
                stderr: s.stderr,
                pass,
            }
        })
        .collect();
    let pass_fraction = points.iter().filter(|p| p.pass).count() as f64 / width as f64;
    let max_abs_drift = points
        .iter()
        .map(|p| (p.mean - x).abs())
        .fold(0.0, f64::max);
    Ok(MartingaleReport {
        points,
        pass_fraction,
        max_abs_drift,
        pass: pass_fraction >= 0.95,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogeneityReport {
    pub max_rel_error: f64,
    pub pass: bool,
}

/// `value(alpha x) = alpha^(1-gamma) value(x)` to `1e-12` relative for every pair.
pub fn homogeneity_check(
    spec: &ModelSpec,
    alphas: &[f64],
    xs: &[f64],
) -> Result<HomogeneityReport> {
    let mut worst: f64 = 0.0;
    for &alpha in alphas {
        if !(alpha > 0.0) {
            return Err(MertonError::InvalidConfig(format!(
                "scaling factor must be positive, got {alpha}"
            )));
        }
        for &x in xs {
            let lhs = value(spec, alpha * x)?;
            let rhs = wealth_power(spec, alpha) * value(spec, x)?;
            worst = worst.max(((lhs - rhs) / lhs).abs());
        }
    }
    Ok(HomogeneityReport {
        max_rel_error: worst,
        pass: worst <= 1e-12,
    })
}

/// `n` points spaced evenly in `ln x` over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if n == 1 {
                lo
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Max over the grid of `|rho v - H_max| / max(|rho v|, tiny)` for a candidate
/// `x -> (v, v', v'')`.
pub fn residual_sweep_with<F>(spec: &ModelSpec, x_grid: &[f64], candidate: F) -> Result<f64>
where
    F: Fn(f64) -> Result<(f64, f64, f64)>,
{
    let mut worst: f64 = 0.0;
    for &x in x_grid {
        let (v, p, pp) = candidate(x)?;
        let res = hjb_residual(spec, x, v, p, pp)?;
        worst = worst.max(res.abs() / (spec.rho() * v).abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Closed-form triple with the constant multiplied by `scale`.
pub fn scaled_closed_form(
    spec: &ModelSpec,
    scale: f64,
) -> impl Fn(f64) -> Result<(f64, f64, f64)> + '_ {
    move |x| {
        Ok((
            scale * value(spec, x)?,
            scale * value_d1(spec, x)?,
            scale * value_d2(spec, x)?,
        ))
    }
}

/// Residual sweep of the closed-form value function.
pub fn residual_sweep(spec: &ModelSpec, x_grid: &[f64]) -> Result<f64> {
    residual_sweep_with(spec, x_grid, scaled_closed_form(spec, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub kappa: f64,
    pub theta: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSweep {
    pub table: Vec<GridCell>,
    pub argmax: ProportionalStrategy,
    pub nearest_to_optimum: ProportionalStrategy,
    pub pass: bool,
}

/// Closed-form objective over a `kappa x theta` grid; passes when the argmax
/// is the grid point nearest the optimal strategy.
pub fn strategy_grid_sweep(
    spec: &ModelSpec,
    x: f64,
    kappa_grid: &[f64],
    theta_grid: &[f64],
) -> Result<GridSweep> {
    let k0 = spec.kappa_max()?;
    if kappa_grid.is_empty() || theta_grid.is_empty() {
        return Err(MertonError::InvalidConfig(
            "empty strategy grid".to_string(),
        ));
    }
    if let Some(k) = kappa_grid.iter().find(|&&k| !(k > 0.0 && k < k0)) {
        return Err(MertonError::InvalidConfig(format!(
            "consumption fraction {k} outside (0, {k0})"
        )));
    }
    let opt = optimal_strategy(spec)?;
    let mut table = Vec::with_capacity(kappa_grid.len() * theta_grid.len());
    for &kappa in kappa_grid {
        for &theta in theta_grid {
            let strat = ProportionalStrategy::new(kappa, theta)?;
            table.push(GridCell {
                kappa,
                theta,
                objective: proportional_objective(spec, &strat, x)?,
            });
        }
    }
    let best = table.iter().fold(
        table[0],
        |b, c| if c.objective > b.objective { *c } else { b },
    );
    let dist = |c: &GridCell| (c.kappa - opt.kappa).powi(2) + (c.theta - opt.theta).powi(2);
    let near = table
        .iter()
        .fold(table[0], |b, c| if dist(c) < dist(&b) { *c } else { b });
    Ok(GridSweep {
        argmax: ProportionalStrategy {
            kappa: best.kappa,
            theta: best.theta,
        },
        nearest_to_optimum: ProportionalStrategy {
            kappa: near.kappa,
            theta: near.theta,
        },
        pass: best.kappa == near.kappa && best.theta == near.theta,
        table,
    })
}

/// Grid around the optimum: consumption fractions on both sides of
/// `kappa_hat` inside `(0, kappa_0)`, risky fractions `theta_hat +- w`.
pub fn default_sweep_grid(spec: &ModelSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let opt = optimal_strategy(spec)?;
    let k0 = spec.kappa_max()?;
    let mut kappas: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|f| f * opt.kappa).collect();
    kappas.push(opt.kappa);
    kappas.extend(
        [0.25, 0.5, 0.75]
            .iter()
            .map(|f| opt.kappa + f * (k0 - opt.kappa)),
    );
    let w = 0.5 * opt.theta.abs().max(0.4);
    Ok((kappas, vec![opt.theta - w, opt.theta, opt.theta + w]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceRow {
    pub strategy: ProportionalStrategy,
    pub eval: EvalResult,
    pub closed_form: f64,
    pub pass: bool,
}

/// Monte-Carlo objective of each strategy against `value(x)`: no strategy may
/// exceed it by more than the confidence band.
pub fn mc_dominance(
    spec: &ModelSpec,
    x: f64,
    strategies: &[ProportionalStrategy],
    paths: usize,
    seed: u64,
) -> Result<Vec<DominanceRow>> {
    let v = value(spec, x)?;
    strategies
        .iter()
        .map(|s| {
            let cfg = objective_config(spec, s, paths, seed)?;
            let eval = mc_objective(spec, s, x, &cfg)?;
            Ok(DominanceRow {
                strategy: *s,
                eval,
                closed_form: proportional_objective(spec, s, x)?,
                pass: eval.lower() <= v + ROUNDING * v.abs(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransversalityVerdict {
    /// `e^(-rho t) V(X_t) -> -inf`
    Diverges,
    Vanishes,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransversalityReport {
    pub alpha: f64,
    pub exponent: f64,
    pub threshold: f64,
    pub verdict: TransversalityVerdict,
    /// `(t, e^(-rho t) V(X_t))`
    pub table: Vec<(f64, f64)>,
}

/// Discounted value along the deterministic path of `c = alpha x, pi = 0`
/// from `x = 1`. The exponent counts as zero within a few ulps of its terms.
pub fn transversality_probe(
    spec: &ModelSpec,
    alpha: f64,
    t_grid: &[f64],
) -> Result<TransversalityReport> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(MertonError::InvalidStrategy(format!(
            "consumption fraction must be positive, got {alpha}"
        )));
    }
    let a = merton_constant(spec)?;
    let g = spec.gamma();
    let xi = transversality_exponent(spec, alpha);
    let scale = spec.rho().abs() + (g - 1.0) * (spec.r().abs() + alpha);
    let verdict = if xi.abs() <= 16.0 * f64::EPSILON * scale {
        TransversalityVerdict::Constant
    } else if xi > 0.0 {
        TransversalityVerdict::Diverges
    } else {
        TransversalityVerdict::Vanishes
    };
    let table = t_grid
        .iter()
        .map(|&t| (t, a / (1.0 - g) * (xi * t).exp()))
        .collect();
    Ok(TransversalityReport {
        alpha,
        exponent: xi,
        threshold: transversality_threshold(spec),
        verdict,
        table,
    })
}

/// One check outcome in a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub inputs_digest: String,
    pub estimate: f64,
    pub stderr: f64,
    pub tail_bound: f64,
    /// Value the estimate is compared against.
    pub reference: f64,
    pub pass: bool,
    pub detail: serde_json::Value,
}

/// SHA-256 of the model, the check name and its parameters.
pub fn inputs_digest(spec: &ModelSpec, name: &str, params: &serde_json::Value) -> String {
    let body = json!({ "model": ModelFile::from(*spec), "check": name, "params": params });
    hex::encode(Sha256::digest(to_json_string(&body).as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryConfig {
    pub seed: u64,
    /// Paths for the objective, budget and martingale checks.
    pub paths: usize,
    /// Paths per strategy in the dominance check.
    pub sweep_paths: usize,
    pub hjb_nodes: usize,
    /// Multiplies the constant in the residual sweep; `1` for the true solution.
    pub corrupt_a: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            seed: 20240601,
            paths: 10_000,
            sweep_paths: 2_000,
            hjb_nodes: 400,
            corrupt_a: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryReport {
    pub model: ModelFile,
    pub model_digest: String,
    pub seed: u64,
    pub all_pass: bool,
    pub verdicts: Vec<Verdict>,
}

struct Battery<'a> {
    spec: &'a ModelSpec,
    verdicts: Vec<Verdict>,
}

impl Battery<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        name: &str,
        params: serde_json::Value,
        estimate: f64,
        stderr: f64,
        tail_bound: f64,
        reference: f64,
        pass: bool,
        detail: serde_json::Value,
    ) {
        self.verdicts.push(Verdict {
            name: name.to_string(),
            inputs_digest: inputs_digest(self.spec, name, &params),
            estimate,
            stderr,
            tail_bound,
            reference,
            pass,
            detail,
        });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Runs every check at `x = 1` and collects the verdicts in a fixed order.
pub fn run_battery(spec: &ModelSpec, cfg: &BatteryConfig) -> Result<BatteryReport> {
    spec.require_well_posed()?;
    if cfg.paths < 2 || cfg.sweep_paths < 2 {
        return Err(MertonError::InvalidConfig(
            "Monte-Carlo checks need at least 2 paths".to_string(),
        ));
    }
    let x = 1.0;
    let seed = cfg.seed;
    let opt = optimal_strategy(spec)?;
    let v = value(spec, x)?;
    let a = merton_constant(spec)?;
    let mut b = Battery {
        spec,
        verdicts: Vec::new(),
    };

    let a_num = solve_scalar_constant(spec, 1e-12, 200)?;
    b.push(
        "scalar_constant",
        json!({ "tol": 1e-12 }),
        a_num,
        0.0,
        0.0,
        a,
        rel(a_num, a) <= 1e-9,
        json!({ "rel_error": rel(a_num, a) }),
    );

    let grid = log_grid(1e-3, 1e3, 50);
    let res = residual_sweep_with(spec, &grid, scaled_closed_form(spec, cfg.corrupt_a))?;
    b.push(
        "hjb_residual",
        json!({ "grid": [1e-3, 1e3, 50], "scale": cfg.corrupt_a }),
        res,
        0.0,
        0.0,
        0.0,
        res <= 1e-9,
        json!({ "tolerance": 1e-9 }),
    );
    let res0 = residual_sweep_with(spec, &grid, |_| Ok((0.0, 0.0, 0.0)))?;
    b.push(
        "hjb_residual_trivial",
        json!({ "grid": [1e-3, 1e3, 50] }),
        res0,
        0.0,
        0.0,
        0.0,
        res0 == 0.0,
        json!(null),
    );

    let (alphas, xs) = ([0.5, 2.0, 10.0], [0.3, 1.0, 7.0]);
    let hom = homogeneity_check(spec, &alphas, &xs)?;
    b.push(
        "homogeneity",
        json!({ "alphas": alphas, "xs": xs }),
        hom.max_rel_error,
        0.0,
        0.0,
        0.0,
        hom.pass,
        json!(null),
    );

    let j = proportional_objective(spec, &opt, x)?;
    let ocfg = objective_config(spec, &opt, cfg.paths, seed)?;
    let mc = mc_objective(spec, &opt, x, &ocfg)?;
    b.push(
        "optimality_three_way",
        json!({ "x": x, "paths": cfg.paths, "seed": seed, "horizon": ocfg.horizon, "steps": ocfg.steps }),
        mc.estimate,
        mc.stderr,
        mc.tail_bound,
        v,
        rel(j, v) <= 1e-10 && mc.contains(v) && mc.contains(j),
        json!({ "value": v, "proportional_objective": j, "rel_gap": rel(j, v) }),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut all_ok = true;
    let (mut worst_est, mut worst_se, mut worst_ref, mut worst_z) = (0.0, 0.0, 0.0, -1.0);
    for _ in 0..10 {
        let strat =
            ProportionalStrategy::new(rng.random_range(0.01..1.0), rng.random_range(-1.0..1.0))?;
        let bcfg = SimConfig::new(2.0, 100, cfg.paths, seed, Scheme::ExactLog)?;
        let rep = budget_check(spec, &strat, x, &bcfg)?;
        all_ok &= rep.pass && rep.matches_analytic;
        let z = (rep.eval.estimate - rep.analytic).abs() / rep.eval.stderr.max(f64::MIN_POSITIVE);
        if z > worst_z {
            (worst_est, worst_se, worst_ref, worst_z) =
                (rep.eval.estimate, rep.eval.stderr, rep.analytic, z);
        }
        rows.push(json!({ "kappa": strat.kappa, "theta": strat.theta, "report": rep }));
    }
    b.push(
        "budget_random_strategies",
        json!({ "x": x, "horizon": 2.0, "steps": 100, "paths": cfg.paths, "seed": seed, "count": 10 }),
        worst_est,
        worst_se,
        0.0,
        worst_ref,
        all_ok,
        json!({ "strategies": rows }),
    );

    // the 1% target is tighter than the band at the base path count
    let horizon = (12.0 / opt.kappa).max(10.0);
    let long_paths = 4 * cfg.paths;
    let lcfg = SimConfig::new(
        horizon,
        steps_for(horizon, DT),
        long_paths,
        seed,
        Scheme::ExactLog,
    )?;
    let long = budget_check(spec, &opt, x, &lcfg)?;
    b.push(
        "budget_optimal_long_horizon",
        json!({ "x": x, "horizon": horizon, "steps": lcfg.steps, "paths": long_paths, "seed": seed }),
        long.eval.estimate,
        long.eval.stderr,
        0.0,
        x,
        long.pass && rel(long.eval.estimate, x) <= 0.01,
        json!({ "analytic": long.analytic }),
    );

    let mcfg = SimConfig::new(10.0, 100, cfg.paths, seed, Scheme::ExactLog)?;
    let mart = martingale_check(spec, &opt, x, &mcfg)?;
    let last = *mart.points.last().unwrap();
    b.push(
        "martingale_mean",
        json!({ "x": x, "horizon": 10.0, "steps": 100, "paths": cfg.paths, "seed": seed }),
        last.mean,
        last.stderr,
        0.0,
        x,
        mart.pass,
        json!({ "pass_fraction": mart.pass_fraction, "max_abs_drift": mart.max_abs_drift }),
    );

    let (kappas, thetas) = default_sweep_grid(spec)?;
    let sweep = strategy_grid_sweep(spec, x, &kappas, &thetas)?;
    let best = sweep
        .table
        .iter()
        .map(|c| c.objective)
        .fold(f64::NEG_INFINITY, f64::max);
    b.push(
        "strategy_grid_argmax",
        json!({ "x": x, "kappas": kappas, "thetas": thetas }),
        best,
        0.0,
        0.0,
        v,
        sweep.pass && sweep.argmax == opt,
        json!({ "argmax": sweep.argmax, "optimum": opt }),
    );

    let strategies: Vec<ProportionalStrategy> = sweep
        .table
        .iter()
        .map(|c| ProportionalStrategy {
            kappa: c.kappa,
            theta: c.theta,
        })
        .collect();
    let dom = mc_dominance(spec, x, &strategies, cfg.sweep_paths, seed)?;
    let worst = dom
        .iter()
        .max_by(|p, q| (p.eval.lower() - v).total_cmp(&(q.eval.lower() - v)))
        .expect("non-empty grid");
    b.push(
        "strategy_grid_dominance",
        json!({ "x": x, "kappas": kappas, "thetas": thetas, "paths": cfg.sweep_paths, "seed": seed }),
        worst.eval.estimate,
        worst.eval.stderr,
        worst.eval.tail_bound,
        v,
        dom.iter().all(|r| r.pass),
        json!({ "worst_strategy": worst.strategy, "rows": dom }),
    );

    let star = transversality_threshold(spec);
    let delta = 0.2 * star.abs().max(0.05);
    let ts: Vec<f64> = (0..=10).map(|k| 10.0 * k as f64).collect();
    let mut probes = vec![(star + delta, TransversalityVerdict::Diverges)];
    if star > 0.0 {
        probes.push((star, TransversalityVerdict::Constant));
    }
    if star - delta > 0.0 {
        probes.push((star - delta, TransversalityVerdict::Vanishes));
    }
    let mut ok = true;
    let mut reports = Vec::new();
    for (alpha, want) in probes {
        let rep = transversality_probe(spec, alpha, &ts)?;
        ok &= rep.verdict == want;
        reports.push(json!({ "alpha": alpha, "exponent": rep.exponent, "verdict": rep.verdict, "expected": want }));
    }
    b.push(
        "transversality_threshold",
        json!({ "delta": delta, "t_grid": ts }),
        star,
        0.0,
        0.0,
        star,
        ok,
        json!({ "probes": reports }),
    );

    let grid = Grid::new(x.ln() - 3.0, x.ln() + 3.0, cfg.hjb_nodes)?;
    let coarse = policy_iteration(spec, &grid, 1e-10, 200)?;
    let fine = policy_iteration(spec, &grid.refined(2), 1e-10, 200)?;
    let err = coarse.max_rel_error(spec)?;
    let ratio = err / fine.max_rel_error(spec)?;
    let frac_err = coarse
        .fractions()
        .iter()
        .map(|(k, th)| (k - opt.kappa).abs().max((th - opt.theta).abs()))
        .fold(0.0, f64::max);
    b.push(
        "hjb_numeric_recovery",
        json!({ "y_min": grid.y_min, "y_max": grid.y_max, "nodes": grid.n_nodes, "tol": 1e-10 }),
        err,
        0.0,
        0.0,
        0.0,
        coarse.converged && err <= 1e-3 && frac_err <= 1e-3 && ratio >= 1.5,
        json!({
            "iterations": coarse.iterations,
            "final_residual": coarse.final_residual,
            "fraction_error": frac_err,
            "refinement_ratio": ratio,
            "boundary_mode": coarse.boundary_mode,
        }),
    );

    let all_pass = b.verdicts.iter().all(|v| v.pass);
    Ok(BatteryReport {
        model: ModelFile::from(*spec),
        model_digest: spec.digest(),
        seed,
        all_pass,
        verdicts: b.verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_a() -> ModelSpec {
        ModelSpec::from_parts(0.0, 0.0, 0.2, 1.0, 2.0).unwrap()
    }

    fn set_b() -> ModelSpec {
        ModelSpec::from_parts(0.02, 0.07, 0.25, 0.03, 2.0).unwrap()
    }

    #[test]
    fn objective_on_deterministic_path() {
        let spec = set_a();
        let strat = ProportionalStrategy::new(0.5, 0.0).unwrap();
        let cfg = SimConfig::new(20.0, 200, 4, 1, Scheme::ExactLog).unwrap();
        let r = mc_objective(&spec, &strat, 1.0, &cfg).unwrap();
        assert_eq!(r.stderr, 0.0);
        // remainder past T is exactly -4 e^(-0.5 T)
        assert!((r.tail_bound - 4.0 * (-10.0f64).exp()).abs() < 1e-15);
        assert!((r.estimate - (-4.0 + r.tail_bound)).abs() < 1e-12);
        assert!(r.contains(-4.0));
    }

    #[test]
    fn objective_rejects_bad_strategies() {
        let spec = set_b();
        let cfg = SimConfig::new(1.0, 10, 4, 1, Scheme::ExactLog).unwrap();
        let zero = ProportionalStrategy::new(0.0, 0.4).unwrap();
        assert!(matches!(
            mc_objective(&spec, &zero, 1.0, &cfg),
            Err(MertonError::InvalidStrategy(_))
        ));
        let hot = ProportionalStrategy::new(0.07, 0.4).unwrap();
        assert!(matches!(
            mc_objective(&spec, &hot, 1.0, &cfg),
            Err(MertonError::Divergent { .. })
        ));
        assert!(default_horizon(&spec, &hot).is_err());
    }

    #[test]
    fn default_horizon_rule() {
        let spec = set_b();
        let opt = optimal_strategy(&spec).unwrap();
        assert!((default_horizon(&spec, &opt).unwrap() - 400.0).abs() < 1e-9);
        let a = optimal_strategy(&set_a()).unwrap();
        assert_eq!(default_horizon(&set_a(), &a).unwrap(), 24.0);
        let cfg = objective_config(&spec, &opt, 10, 0).unwrap();
        assert_eq!(cfg.steps, 4000);
    }

    #[test]
    fn budget_zero_consumption() {
        let cfg = SimConfig::new(1.0, 10, 16, 3, Scheme::ExactLog).unwrap();
        let zero = ProportionalStrategy::new(0.0, 0.3).unwrap();
        let rep = budget_check(&set_b(), &zero, 1.0, &cfg).unwrap();
        assert_eq!(rep.eval.estimate, 0.0);
        assert!(rep.pass && rep.matches_analytic);
    }

    #[test]
    fn martingale_deterministic_case() {
        let spec = ModelSpec::from_parts(0.03, 0.03, 0.2, 0.5, 2.0).unwrap();
        let strat = ProportionalStrategy::new(0.3, 0.0).unwrap();
        let cfg = SimConfig::new(5.0, 50, 8, 1, Scheme::ExactLog).unwrap();
        let rep = martingale_check(&spec, &strat, 2.0, &cfg).unwrap();
        assert!(rep.max_abs_drift < 1e-12, "{}", rep.max_abs_drift);
        assert_eq!(rep.pass_fraction, 1.0);
    }

    #[test]
    fn martingale_pure_deflator() {
        let spec = set_b();
        let strat = ProportionalStrategy::new(0.0, 0.0).unwrap();
        let mut cfg = SimConfig::new(5.0, 50, 4000, 9, Scheme::ExactLog).unwrap();
        let spec0 = ModelSpec::from_parts(0.0, 0.05, 0.25, 0.03, 2.0).unwrap();
        assert!(martingale_check(&spec0, &strat, 1.0, &cfg).unwrap().pass);
        cfg.paths = 2000;
        assert!(
            martingale_check(&spec, &optimal_strategy(&spec).unwrap(), 1.0, &cfg)
                .unwrap()
                .pass
        );
    }

    #[test]
    fn homogeneity_examples() {
        let rep = homogeneity_check(&set_a(), &[1.0, 2.0], &[1.0]).unwrap();
        assert!(rep.pass);
        assert_eq!(value(&set_a(), 2.0).unwrap(), -2.0);
        assert!(homogeneity_check(&set_b(), &[10.0], &[0.3]).unwrap().pass);
        assert!(homogeneity_check(&set_b(), &[0.0], &[0.3]).is_err());
    }

    #[test]
    fn residual_sweep_examples() {
        let grid = log_grid(1e-3, 1e3, 50);
        assert_eq!(grid.len(), 50);
        assert!((grid[49] - 1e3).abs() < 1e-9);
        for spec in [set_a(), set_b()] {
            assert!(residual_sweep(&spec, &grid).unwrap() <= 1e-9);
            assert_eq!(
                residual_sweep_with(&spec, &grid, |_| Ok((0.0, 0.0, 0.0))).unwrap(),
                0.0
            );
            assert!(
                residual_sweep_with(&spec, &grid, scaled_closed_form(&spec, 1.1)).unwrap() > 1e-3
            );
        }
    }

    #[test]
    fn grid_sweep_examples() {
        let spec = set_a();
        let mut kappas: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
        kappas.push(0.5);
        let sweep = strategy_grid_sweep(&spec, 1.0, &kappas, &[-0.2, 0.0, 0.2]).unwrap();
        assert!(sweep.pass);
        assert_eq!(
            sweep.argmax,
            ProportionalStrategy {
                kappa: 0.5,
                theta: 0.0
            }
        );
        assert!(strategy_grid_sweep(&spec, 1.0, &[0.5, 1.0], &[0.0]).is_err());

        let spec = set_b();
        let (k, t) = default_sweep_grid(&spec).unwrap();
        let sweep = strategy_grid_sweep(&spec, 1.0, &k, &t).unwrap();
        assert_eq!(sweep.argmax, optimal_strategy(&spec).unwrap());
    }

    #[test]
    fn transversality_examples() {
        let spec = set_b();
        let ts = [0.0, 50.0, 100.0];
        let probe = |alpha| transversality_probe(&spec, alpha, &ts).unwrap();
        assert_eq!(probe(0.06).verdict, TransversalityVerdict::Diverges);
        assert_eq!(probe(0.04).verdict, TransversalityVerdict::Vanishes);
        assert_eq!(probe(0.05).verdict, TransversalityVerdict::Constant);
        let t = probe(0.06).table;
        assert!((t[0].1 + 1_111.111_111_111_111).abs() < 1e-9);
        // along x_t = e^((r - alpha) t): e^(-rho t) V(x_t)
        let direct =
            (-0.03f64 * 100.0).exp() * value(&spec, ((0.02 - 0.06) * 100.0f64).exp()).unwrap();
        assert!(rel(t[2].1, direct) < 1e-12);
        assert!(transversality_probe(&spec, 0.0, &ts).is_err());
    }

    #[test]
    fn digest_depends_on_inputs() {
        let p = json!({ "x": 1.0 });
        let d = inputs_digest(&set_a(), "c", &p);
        assert_eq!(d.len(), 64);
        assert_eq!(d, inputs_digest(&set_a(), "c", &p));
        assert_ne!(d, inputs_digest(&set_b(), "c", &p));
        assert_ne!(d, inputs_digest(&set_a(), "c", &json!({ "x": 2.0 })));
    }
}
