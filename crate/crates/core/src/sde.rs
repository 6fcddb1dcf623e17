//! Seeded simulation of wealth under proportional strategies, together with
//! the state-price deflator `Y_t = exp(-r t - lambda W_t - lambda^2 t / 2)`
//! driven by the same Brownian increments.
//!
//! Every path owns a ChaCha8 stream selected by its index under the master
//! seed, and paths are folded in fixed-size blocks merged in index order, so
//! results do not depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{optimal_strategy, optimal_wealth_law, ProportionalStrategy};
use crate::error::{MertonError, Result};
use crate::model::ModelSpec;

/// Euler wealth is clipped here instead of changing sign.
pub const EULER_FLOOR: f64 = 1e-300;

const BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Exact lognormal stepping of log-wealth.
    ExactLog,
    /// Euler-Maruyama on wealth itself.
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn new(
        horizon: f64,
        steps: usize,
        paths: usize,
        seed: u64,
        scheme: Scheme,
    ) -> Result<Self> {
        let cfg = Self {
            horizon,
            steps,
            paths,
            seed,
            scheme,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(MertonError::InvalidConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.steps == 0 || self.paths == 0 {
            return Err(MertonError::InvalidConfig(
                "steps and paths must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

/// One grid point of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub t: f64,
    pub x: f64,
    pub log_x: f64,
    pub log_y: f64,
}

/// A simulated path handed to fold callbacks.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    pub id: usize,
    pub points: &'a [PathPoint],
    pub clips: usize,
}

/// Coefficients of the wealth and deflator dynamics for a proportional
/// strategy.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PathModel {
    scheme: Scheme,
    /// drift of log X (exact scheme)
    log_drift: f64,
    /// drift of dX / X (Euler scheme)
    lin_drift: f64,
    vol: f64,
    pub(crate) kappa: f64,
    lambda: f64,
    deflator_drift: f64,
}

impl PathModel {
    pub(crate) fn proportional(
        spec: &ModelSpec,
        strat: &ProportionalStrategy,
        scheme: Scheme,
    ) -> Self {
        let vol = spec.sigma() * strat.theta;
        let lin_drift = spec.r() + spec.sigma() * spec.lambda() * strat.theta - strat.kappa;
        Self {
            scheme,
            log_drift: lin_drift - 0.5 * vol * vol,
            lin_drift,
            vol,
            kappa: strat.kappa,
            lambda: spec.lambda(),
            deflator_drift: -spec.r() - 0.5 * spec.lambda() * spec.lambda(),
        }
    }

    /// Optimal wealth sampled from its explicit lognormal law.
    pub(crate) fn optimal(spec: &ModelSpec) -> Result<Self> {
        let (drift, vol) = optimal_wealth_law(spec)?;
        let opt = optimal_strategy(spec)?;
        let mut m = Self::proportional(spec, &opt, Scheme::ExactLog);
        m.log_drift = drift;
        m.vol = vol;
        Ok(m)
    }

    /// Fills `buf` with path `id` and returns the number of Euler clip events.
    fn generate(&self, x0: f64, cfg: &SimConfig, id: usize, buf: &mut Vec<PathPoint>) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(id as u64);
        let dt = cfg.dt();
        let sdt = dt.sqrt();
        let log_x0 = x0.ln();

        buf.clear();
        buf.push(PathPoint {
            t: 0.0,
            x: x0,
            log_x: log_x0,
            log_y: 0.0,
        });
        let mut w = 0.0;
        let mut x = x0;
        let mut clips = 0;
        for k in 1..=cfg.steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            let t = cfg.time(k);
            w += sdt * z;
            let log_y = self.deflator_drift * t - self.lambda * w;
            let (xk, log_xk) = match self.scheme {
                Scheme::ExactLog => {
                    let l = log_x0 + self.log_drift * t + self.vol * w;
                    (l.exp(), l)
                }
                Scheme::Euler => {
                    x += x * (self.lin_drift * dt + self.vol * sdt * z);
                    if !(x > EULER_FLOOR) {
                        x = EULER_FLOOR;
                        clips += 1;
                    }
                    (x, x.ln())
                }
            };
            buf.push(PathPoint {
                t,
                x: xk,
                log_x: log_xk,
                log_y,
            });
        }
        clips
    }
}

/// Folds every path into an accumulator. Paths are processed in blocks of
/// fixed size; block results are merged in path order.
pub(crate) fn fold_paths<A, I, F, M>(
    model: &PathModel,
    x0: f64,
    cfg: &SimConfig,
    init: I,
    fold: F,
    merge: M,
) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, PathView<'_>) + Sync,
    M: Fn(&mut A, A),
{
    let blocks = cfg.paths.div_ceil(BLOCK);
    let partials: Vec<A> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = init();
            let mut buf = Vec::with_capacity(cfg.steps + 1);
            for id in b * BLOCK..((b + 1) * BLOCK).min(cfg.paths) {
                let clips = model.generate(x0, cfg, id, &mut buf);
                fold(
                    &mut acc,
                    PathView {
                        id,
                        points: &buf,
                        clips,
                    },
                );
            }
            acc
        })
        .collect();
    let mut iter = partials.into_iter();
    let mut total = iter.next().unwrap_or_else(&init);
    for part in iter {
        merge(&mut total, part);
    }
    total
}

/// Per-path map, results in path order.
pub(crate) fn map_paths<T, F>(model: &PathModel, x0: f64, cfg: &SimConfig, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(PathView<'_>) -> T + Sync,
{
    fold_paths(
        model,
        x0,
        cfg,
        Vec::new,
        |acc: &mut Vec<T>, view| acc.push(f(view)),
        |acc, mut part| acc.append(&mut part),
    )
}

/// `int_{t0}^{t0+dt} exp(l(s)) ds` with `l` linear between the endpoint logs.
/// Exact on exponential paths.
pub(crate) fn exp_segment(l0: f64, l1: f64, dt: f64) -> f64 {
    let d = l1 - l0;
    let factor = if d == 0.0 { 1.0 } else { d.exp_m1() / d };
    dt * l0.exp() * factor
}

/// Running integral `int_0^{t_k} Y_s c_s ds` at every grid time.
pub(crate) fn running_deflated_consumption(kappa: f64, points: &[PathPoint], out: &mut Vec<f64>) {
    out.clear();
    out.push(0.0);
    if kappa == 0.0 {
        out.resize(points.len(), 0.0);
        return;
    }
    let lk = kappa.ln();
    let mut acc = 0.0;
    for w in points.windows(2) {
        let l0 = lk + w[0].log_x + w[0].log_y;
        let l1 = lk + w[1].log_x + w[1].log_y;
        acc += exp_segment(l0, l1, w[1].t - w[0].t);
        out.push(acc);
    }
}

pub(crate) fn deflated_consumption(kappa: f64, points: &[PathPoint]) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    let lk = kappa.ln();
    points
        .windows(2)
        .map(|w| {
            exp_segment(
                lk + w[0].log_x + w[0].log_y,
                lk + w[1].log_x + w[1].log_y,
                w[1].t - w[0].t,
            )
        })
        .sum()
}

/// Simulated trajectories, stored row-major with `steps + 1` columns per path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub times: Vec<f64>,
    pub wealth: Vec<f64>,
    pub consumption: Vec<f64>,
    pub deflator: Vec<f64>,
    pub deflated_consumption_integral: Vec<f64>,
    pub clip_events: Vec<usize>,
    pub seed: u64,
    pub scheme: Scheme,
    pub paths: usize,
}

impl PathBundle {
    fn width(&self) -> usize {
        self.times.len()
    }

    fn row<'a>(&self, data: &'a [f64], path: usize) -> &'a [f64] {
        let w = self.width();
        &data[path * w..(path + 1) * w]
    }

    pub fn wealth_path(&self, path: usize) -> &[f64] {
        self.row(&self.wealth, path)
    }

    pub fn consumption_path(&self, path: usize) -> &[f64] {
        self.row(&self.consumption, path)
    }

    pub fn deflator_path(&self, path: usize) -> &[f64] {
        self.row(&self.deflator, path)
    }

    pub fn total_clips(&self) -> usize {
        self.clip_events.iter().sum()
    }

    /// `X_T` for every path.
    pub fn terminal_wealth(&self) -> Vec<f64> {
        (0..self.paths)
            .map(|p| *self.wealth_path(p).last().unwrap())
            .collect()
    }

    /// `M_T = Y_T X_T + int_0^T Y c ds` for every path.
    pub fn martingale_terminal(&self) -> Vec<f64> {
        (0..self.paths)
            .map(|p| {
                self.wealth_path(p).last().unwrap() * self.deflator_path(p).last().unwrap()
                    + self.deflated_consumption_integral[p]
            })
            .collect()
    }
}

struct Rows {
    wealth: Vec<f64>,
    consumption: Vec<f64>,
    deflator: Vec<f64>,
    integral: Vec<f64>,
    clips: Vec<usize>,
}

fn bundle(model: &PathModel, x: f64, cfg: &SimConfig) -> PathBundle {
    let kappa = model.kappa;
    let rows = fold_paths(
        model,
        x,
        cfg,
        || Rows {
            wealth: Vec::new(),
            consumption: Vec::new(),
            deflator: Vec::new(),
            integral: Vec::new(),
            clips: Vec::new(),
        },
        |acc, view| {
            for p in view.points {
                acc.wealth.push(p.x);
                acc.consumption.push(kappa * p.x);
                acc.deflator.push(p.log_y.exp());
            }
            acc.integral.push(deflated_consumption(kappa, view.points));
            acc.clips.push(view.clips);
        },
        |acc, mut part| {
            acc.wealth.append(&mut part.wealth);
            acc.consumption.append(&mut part.consumption);
            acc.deflator.append(&mut part.deflator);
            acc.integral.append(&mut part.integral);
            acc.clips.append(&mut part.clips);
        },
    );
    PathBundle {
        times: cfg.times(),
        wealth: rows.wealth,
        consumption: rows.consumption,
        deflator: rows.deflator,
        deflated_consumption_integral: rows.integral,
        clip_events: rows.clips,
        seed: cfg.seed,
        scheme: cfg.scheme,
        paths: cfg.paths,
    }
}

pub(crate) fn check_inputs(x: f64, cfg: &SimConfig) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(MertonError::NonPositiveWealth(x));
    }
    cfg.validate()
}

/// Simulates wealth, consumption and deflator under a proportional strategy.
/// The model need not be well posed.
pub fn simulate(
    spec: &ModelSpec,
    strat: &ProportionalStrategy,
    x: f64,
    cfg: &SimConfig,
) -> Result<PathBundle> {
    check_inputs(x, cfg)?;
    let strat = ProportionalStrategy::new(strat.kappa, strat.theta)?;
    Ok(bundle(
        &PathModel::proportional(spec, &strat, cfg.scheme),
        x,
        cfg,
    ))
}

/// Samples the optimally controlled wealth from its explicit lognormal form.
/// The scheme in `cfg` is ignored.
pub fn optimal_path_exact(spec: &ModelSpec, x: f64, cfg: &SimConfig) -> Result<PathBundle> {
    check_inputs(x, cfg)?;
    let model = PathModel::optimal(spec)?;
    let mut cfg = *cfg;
    cfg.scheme = Scheme::ExactLog;
    Ok(bundle(&model, x, &cfg))
}

/// Terminal values `M_T = Y_T X_T + int_0^T Y_s c_s ds`, one per path.
pub fn martingale_samples(
    spec: &ModelSpec,
    strat: &ProportionalStrategy,
    x: f64,
    cfg: &SimConfig,
) -> Result<Vec<f64>> {
    check_inputs(x, cfg)?;
    let strat = ProportionalStrategy::new(strat.kappa, strat.theta)?;
    let model = PathModel::proportional(spec, &strat, cfg.scheme);
    Ok(map_paths(&model, x, cfg, |view| {
        let last = view.points.last().unwrap();
        (last.log_x + last.log_y).exp() + deflated_consumption(strat.kappa, view.points)
    }))
}
