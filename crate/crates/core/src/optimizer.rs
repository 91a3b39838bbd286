//! Multi-start projected L-BFGS ascent of the gate fidelity.
//!
//! Each restart minimises `1 − Φ` over the box-constrained coarse samples.
//! Directions come from the two-loop recursion restricted to the variables
//! not pinned at a bound; steps are projected back into the box and accepted
//! under an Armijo condition along the projected path.

use std::collections::VecDeque;
use std::time::Instant;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ControlProblem;
use crate::pulse::CoarsePulse;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerOptions {
    pub target_fidelity: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    /// Centre of the random initial guess, GHz.
    pub initial_center_ghz: f64,
    /// Centre the initial guess on each qubit's idle detuning instead of
    /// `initial_center_ghz`.
    pub initial_from_idle: bool,
    /// Standard deviation of the random initial perturbation, GHz.
    pub initial_scale_ghz: f64,
    /// Length of the first step when no curvature information exists, GHz.
    pub initial_step_ghz: f64,
    /// Number of stored secant pairs.
    pub memory: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Stop when the projected gradient's largest entry falls below this.
    pub gradient_tol: f64,
    pub seed: u64,
    /// Restarts evaluated together before checking for success. Results do
    /// not depend on thread count, only on this value.
    pub restart_batch: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            target_fidelity: 0.9999,
            max_iterations: 2000,
            restarts: 20,
            initial_center_ghz: 0.0,
            initial_from_idle: false,
            initial_scale_ghz: 0.2,
            initial_step_ghz: 0.05,
            memory: 10,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            gradient_tol: 1e-9,
            seed: 0,
            restart_batch: 1,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_fidelity > 0.0 && self.target_fidelity <= 1.0) {
            return Err(Error::InvalidParameter(
                "target fidelity must lie in (0, 1]".into(),
            ));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter(
                "at least one restart is required".into(),
            ));
        }
        if self.restart_batch == 0 {
            return Err(Error::InvalidParameter(
                "restart batch must be positive".into(),
            ));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidParameter(
                "backtrack factor must lie in (0, 1)".into(),
            ));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::InvalidParameter(
                "Armijo constant must lie in (0, 1)".into(),
            ));
        }
        if !self.initial_center_ghz.is_finite() {
            return Err(Error::InvalidParameter(
                "initial centre must be finite".into(),
            ));
        }
        if self.initial_scale_ghz < 0.0 || self.initial_step_ghz <= 0.0 {
            return Err(Error::InvalidParameter(
                "initial scale and step must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TargetReached,
    GradientTolerance,
    MaxIterations,
    /// No admissible step along the projected steepest-descent path.
    Stationary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub restart: usize,
    pub iteration: usize,
    pub fidelity: f64,
    pub step: f64,
    pub gradient_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub fidelity: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub warm_started: bool,
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub best_x: Vec<f64>,
    pub best_pulse: CoarsePulse,
    pub best_fidelity: f64,
    /// Accepted iterations of every restart that ran, in restart order.
    pub trace: Vec<IterationRecord>,
    /// Iterations of the best restart.
    pub iterations: usize,
    pub total_iterations: usize,
    pub restart: usize,
    pub restarts_run: usize,
    pub termination: Termination,
    pub wall_time_s: f64,
    pub summaries: Vec<RestartSummary>,
}

impl OptimizeResult {
    pub fn reached(&self, target: f64) -> bool {
        self.best_fidelity >= target
    }
}

struct RestartOutcome {
    x: Vec<f64>,
    fidelity: f64,
    trace: Vec<IterationRecord>,
    iterations: usize,
    termination: Termination,
    warm_started: bool,
}

/// Gaussian samples around the configured centre, one independent random
/// stream per restart. Near bus resonance every coupling is active from the
/// first iteration; around the idle point the exchange terms are dispersive
/// and the ascent tends to settle on an unconditional partial swap.
pub fn initial_guess(
    problem: &ControlProblem,
    opts: &OptimizerOptions,
    restart: usize,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(restart as u64);
    let mut x = if opts.initial_from_idle {
        problem.idle_vector()
    } else {
        vec![opts.initial_center_ghz; problem.n_vars()]
    };
    if opts.initial_scale_ghz > 0.0 {
        let normal = Normal::new(0.0, opts.initial_scale_ghz).expect("positive scale");
        for v in &mut x {
            *v += normal.sample(&mut rng);
        }
    }
    problem.project(&mut x);
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Cost `1 − Φ` and its gradient.
fn cost(problem: &ControlProblem, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let r = problem.fidelity_and_gradient(x)?;
    let g = r
        .gradient
        .expect("gradient requested")
        .into_iter()
        .map(|v| -v)
        .collect();
    Ok((1.0 - r.fidelity, g))
}

fn free_mask(problem: &ControlProblem, x: &[f64], g: &[f64]) -> Vec<bool> {
    let b = problem.bounds;
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| !((xi <= b.lower && gi > 0.0) || (xi >= b.upper && gi < 0.0)))
        .collect()
}

fn projected_gradient_norm(problem: &ControlProblem, x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| (problem.bounds.clamp(xi - gi) - xi).abs())
        .fold(0.0, f64::max)
}

fn two_loop(g: &[f64], mask: &[bool], memory: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let masked = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(mask)
            .map(|(&x, &m)| if m { x } else { 0.0 })
            .collect()
    };
    let mut q = masked(g);
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y) in memory.iter().rev() {
        let (s, y) = (masked(s), masked(y));
        let sy = dot(&s, &y);
        if sy <= 0.0 {
            alphas.push(0.0);
            continue;
        }
        let a = dot(&s, &q) / sy;
        q.iter_mut().zip(&y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y)) = memory.back() {
        let (s, y) = (masked(s), masked(y));
        let (sy, yy) = (dot(&s, &y), dot(&y, &y));
        if sy > 0.0 && yy > 0.0 {
            q.iter_mut().for_each(|v| *v *= sy / yy);
        }
    }
    for ((s, y), a) in memory.iter().zip(alphas.iter().rev()) {
        let (s, y) = (masked(s), masked(y));
        let sy = dot(&s, &y);
        if sy <= 0.0 {
            continue;
        }
        let b = dot(&y, &q) / sy;
        q.iter_mut()
            .zip(&s)
            .for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter()
        .zip(mask)
        .map(|(&v, &m)| if m { -v } else { 0.0 })
        .collect()
}

fn run_restart(
    problem: &ControlProblem,
    opts: &OptimizerOptions,
    restart: usize,
    start: Vec<f64>,
    warm_started: bool,
) -> Result<RestartOutcome> {
    let mut x = start;
    problem.project(&mut x);
    let (mut f, mut g) = cost(problem, &x)?;
    let mut trace = vec![IterationRecord {
        restart,
        iteration: 0,
        fidelity: 1.0 - f,
        step: 0.0,
        gradient_norm: projected_gradient_norm(problem, &x, &g),
    }];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(opts.memory);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    loop {
        let fidelity = 1.0 - f;
        if fidelity >= opts.target_fidelity {
            termination = Termination::TargetReached;
            break;
        }
        if projected_gradient_norm(problem, &x, &g) < opts.gradient_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }

        let mask = free_mask(problem, &x, &g);
        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 {
                if memory.is_empty() {
                    break;
                }
                memory.clear();
            }
            let mut d = two_loop(&g, &mask, &memory);
            if dot(&g, &d) >= 0.0 {
                memory.clear();
                d = two_loop(&g, &mask, &memory);
            }
            let mut alpha = if memory.is_empty() {
                (opts.initial_step_ghz / inf_norm(&d).max(f64::MIN_POSITIVE)).min(1.0)
            } else {
                1.0
            };
            for _ in 0..opts.max_backtracks {
                let mut trial: Vec<f64> =
                    x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
                problem.project(&mut trial);
                let delta: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                let decrease = dot(&g, &delta);
                if decrease < 0.0 {
                    let f_trial = 1.0 - problem.fidelity(&trial)?;
                    if f_trial <= f + opts.armijo * decrease {
                        accepted = Some((trial, alpha));
                        break;
                    }
                }
                alpha *= opts.backtrack;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((x_new, alpha)) = accepted else {
            termination = Termination::Stationary;
            break;
        };

        let (f_new, g_new) = cost(problem, &x_new)?;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y));
        }
        x = x_new;
        f = f_new;
        g = g_new;
        iterations += 1;
        let record = IterationRecord {
            restart,
            iteration: iterations,
            fidelity: 1.0 - f,
            step: alpha,
            gradient_norm: projected_gradient_norm(problem, &x, &g),
        };
        debug!(
            "restart {restart} iter {iterations}: infidelity {:.3e} step {alpha:.3e} |pg| {:.3e}",
            f, record.gradient_norm
        );
        trace.push(record);
    }

    Ok(RestartOutcome {
        x,
        fidelity: 1.0 - f,
        trace,
        iterations,
        termination,
        warm_started,
    })
}

pub fn optimize(problem: &ControlProblem, opts: &OptimizerOptions) -> Result<OptimizeResult> {
    optimize_from(problem, opts, None)
}

/// Like [`optimize`], with an optional starting point for restart 0.
pub fn optimize_from(
    problem: &ControlProblem,
    opts: &OptimizerOptions,
    warm_start: Option<&[f64]>,
) -> Result<OptimizeResult> {
    opts.validate()?;
    problem.spec.validate()?;
    if let Some(w) = warm_start {
        if w.len() != problem.n_vars() {
            return Err(Error::GridMismatch(format!(
                "warm start has {} entries, problem needs {}",
                w.len(),
                problem.n_vars()
            )));
        }
    }
    let clock = Instant::now();
    let mut outcomes: Vec<RestartOutcome> = Vec::new();
    let mut next = 0;
    while next < opts.restarts {
        let batch: Vec<usize> = (next..(next + opts.restart_batch).min(opts.restarts)).collect();
        next += batch.len();
        let results: Vec<Result<RestartOutcome>> = batch
            .par_iter()
            .map(|&r| {
                let (start, warm) = match (r, warm_start) {
                    (0, Some(w)) => (w.to_vec(), true),
                    _ => (initial_guess(problem, opts, r), false),
                };
                run_restart(problem, opts, r, start, warm)
            })
            .collect();
        for r in results {
            let o = r?;
            info!(
                "restart {}: fidelity {:.8} after {} iterations ({:?})",
                o.trace[0].restart, o.fidelity, o.iterations, o.termination
            );
            outcomes.push(o);
        }
        if outcomes.iter().any(|o| o.fidelity >= opts.target_fidelity) {
            break;
        }
    }

    let best = outcomes.iter().enumerate().fold(0, |b, (i, o)| {
        if o.fidelity > outcomes[b].fidelity {
            i
        } else {
            b
        }
    });
    let summaries = outcomes
        .iter()
        .enumerate()
        .map(|(r, o)| RestartSummary {
            restart: r,
            fidelity: o.fidelity,
            iterations: o.iterations,
            termination: o.termination,
            warm_started: o.warm_started,
        })
        .collect();
    let total_iterations = outcomes.iter().map(|o| o.iterations).sum();
    let restarts_run = outcomes.len();
    let trace = outcomes
        .iter()
        .flat_map(|o| o.trace.iter().cloned())
        .collect();
    let b = &outcomes[best];
    Ok(OptimizeResult {
        best_pulse: problem.coarse_pulse(&b.x)?,
        best_x: b.x.clone(),
        best_fidelity: b.fidelity,
        trace,
        iterations: b.iterations,
        total_iterations,
        restart: best,
        restarts_run,
        termination: b.termination,
        wall_time_s: clock.elapsed().as_secs_f64(),
        summaries,
    })
}

#[derive(Clone, Debug)]
pub struct GradientProbe {
    pub index: usize,
    pub analytic: f64,
    pub finite_difference: f64,
}

#[derive(Clone, Debug)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub probes: Vec<GradientProbe>,
}

/// Relative error with a floor tied to the gradient's overall scale, so
/// coordinates where the gradient nearly vanishes do not dominate.
pub fn relative_error(analytic: f64, fd: f64, scale: f64) -> f64 {
    (analytic - fd).abs()
        / analytic
            .abs()
            .max(fd.abs())
            .max(1e-6 * scale)
            .max(f64::MIN_POSITIVE)
}

/// Compare the analytic gradient at `x` against central differences on
/// `n_probes` random coordinates.
pub fn check_gradient(
    problem: &ControlProblem,
    x: &[f64],
    n_probes: usize,
    fd_step: f64,
    seed: u64,
) -> Result<GradientCheck> {
    use rand::RngExt;
    let r = problem.fidelity_and_gradient(x)?;
    let grad = r.gradient.expect("gradient requested");
    let scale = inf_norm(&grad);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::with_capacity(n_probes);
    let mut max_rel: f64 = 0.0;
    for _ in 0..n_probes {
        let i = rng.random_range(0..x.len());
        let mut hi = x.to_vec();
        let mut lo = x.to_vec();
        hi[i] += fd_step;
        lo[i] -= fd_step;
        let fd = (problem.fidelity(&hi)? - problem.fidelity(&lo)?) / (2.0 * fd_step);
        max_rel = max_rel.max(relative_error(grad[i], fd, scale));
        probes.push(GradientProbe {
            index: i,
            analytic: grad[i],
            finite_difference: fd,
        });
    }
    Ok(GradientCheck {
        max_relative_error: max_rel,
        probes,
    })
}
