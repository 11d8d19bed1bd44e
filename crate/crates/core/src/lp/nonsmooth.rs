//! Minimization of convex, possibly nonsmooth functions.
//!
//! Two methods share one configuration: a proximal bundle method (the
//! default) and plain subgradient descent. For subgradient descent, steps are `c/√t` along a subgradient, with a running (Polyak) average of
//! the iterates evaluated periodically. When the best value stalls for
//! `patience` iterations the method restarts from the best point with `c`
//! halved, as long as the stage that just ended made progress; a stage
//! without progress ends the run.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Bundle,
    Subgradient,
}

/// Iteration controls shared by the nonsmooth solver and MRC training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: Method,
    pub max_iters: usize,
    /// Subgradient: step constant `c`. Bundle: initial proximal step, in
    /// units of the first subgradient's norm. `None` picks a default.
    pub step_constant: Option<f64>,
    pub patience: usize,
    pub tolerance: f64,
    /// Restarts with a halved step constant before giving up.
    pub max_halvings: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Bundle,
            max_iters: 20_000,
            step_constant: None,
            patience: 200,
            tolerance: 1e-6,
            max_halvings: 12,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.max_iters > 0
            && self.patience > 0
            && self.tolerance > 0.0
            && self.step_constant.is_none_or(|c| c > 0.0 && c.is_finite());
        if ok {
            Ok(())
        } else {
            crate::error::invalid("solver configuration values must be positive")
        }
    }
}

/// A convex function with a subgradient oracle.
pub trait NonsmoothObjective {
    fn dim(&self) -> usize;
    /// Returns f(x) and writes one subgradient into `grad`.
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Adapter for closures `|x, grad| -> f(x)`.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> NonsmoothObjective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(x, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No improvement above tolerance within the patience window.
    Converged,
    /// A zero subgradient was found.
    Stationary,
    /// Budget exhausted before the tolerance was met.
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonsmoothResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Best objective after each iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub final_step: f64,
    pub stop_reason: StopReason,
}

const AVERAGE_EVERY: usize = 10;

/// Minimizes `obj` from `x0`, returning the best point found.
pub fn minimize_nonsmooth(obj: &dyn NonsmoothObjective, x0: &[f64], cfg: &SolverConfig) -> NonsmoothResult {
    assert_eq!(x0.len(), obj.dim(), "starting point has the wrong dimension");
    match cfg.method {
        Method::Bundle => super::bundle::minimize_bundle(obj, x0, cfg),
        Method::Subgradient => minimize_subgradient(obj, x0, cfg),
    }
}

fn minimize_subgradient(obj: &dyn NonsmoothObjective, x0: &[f64], cfg: &SolverConfig) -> NonsmoothResult {
    let n = obj.dim();
    let mut c = cfg.step_constant.unwrap_or(0.1);
    let mut grad = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    let mut x = x0.to_vec();
    let mut best_x = x.clone();
    let mut best = f64::INFINITY;
    let mut avg = x.clone();
    let mut stage_iter = 0usize;
    let mut stage_start_best = f64::INFINITY;
    let mut halvings = 0;
    let mut trace = Vec::with_capacity(cfg.max_iters.min(1 << 16));
    let mut final_step = 0.0;
    let mut stop = StopReason::MaxIterations;

    for t in 1..=cfg.max_iters {
        let fx = obj.evaluate(&x, &mut grad);
        if fx < best {
            best = fx;
            best_x.copy_from_slice(&x);
        }
        if t == 1 {
            stage_start_best = best;
        }
        if grad.iter().all(|&g| g == 0.0) {
            trace.push(best);
            stop = StopReason::Stationary;
            break;
        }

        stage_iter += 1;
        let step = c / (stage_iter as f64).sqrt();
        final_step = step;
        for (xi, gi) in x.iter_mut().zip(&grad) {
            *xi -= step * gi;
        }
        let w = 1.0 / stage_iter as f64;
        for (a, xi) in avg.iter_mut().zip(&x) {
            *a += w * (xi - *a);
        }
        if stage_iter % AVERAGE_EVERY == 0 {
            let fa = obj.evaluate(&avg, &mut scratch);
            if fa < best {
                best = fa;
                best_x.copy_from_slice(&avg);
            }
        }
        trace.push(best);

        if stage_iter >= cfg.patience && t > cfg.patience && trace[t - 1 - cfg.patience] - best < cfg.tolerance {
            if stage_start_best - best >= cfg.tolerance && halvings < cfg.max_halvings {
                halvings += 1;
                c *= 0.5;
                x.copy_from_slice(&best_x);
                avg.copy_from_slice(&best_x);
                stage_iter = 0;
                stage_start_best = best;
            } else {
                stop = StopReason::Converged;
                break;
            }
        }
    }

    NonsmoothResult {
        iterations: trace.len(),
        x: best_x,
        value: best,
        trace,
        final_step,
        stop_reason: stop,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs_objective() -> impl NonsmoothObjective {
        FnObjective::new(1, |x: &[f64], g: &mut [f64]| {
            g[0] = if x[0] > 0.0 {
                1.0
            } else if x[0] < 0.0 {
                -1.0
            } else {
                0.0
            };
            x[0].abs()
        })
    }

    #[test]
    fn absolute_value() {
        let r = minimize_nonsmooth(&abs_objective(), &[3.0], &SolverConfig::default());
        assert!(r.x[0].abs() < 1e-3, "{:?}", r.x);
        assert!(r.value < 1e-3);
    }

    #[test]
    fn piecewise_max() {
        // max(x, -x, x - 0.5) has minimum 0 at x = 0
        let f = FnObjective::new(1, |x: &[f64], g: &mut [f64]| {
            let pieces = [(1.0, 0.0), (-1.0, 0.0), (1.0, -0.5)];
            let (slope, val) = pieces
                .iter()
                .map(|&(a, b)| (a, a * x[0] + b))
                .fold((0.0, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
            g[0] = slope;
            val
        });
        let r = minimize_nonsmooth(&f, &[-2.0], &SolverConfig::default());
        assert!(r.x[0].abs() < 1e-3 && r.value.abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn trace_is_monotone_and_not_worse_than_start() {
        let f = FnObjective::new(2, |x: &[f64], g: &mut [f64]| {
            let a = (x[0] - 1.0).abs();
            let b = 2.0 * (x[1] + 0.5).abs();
            g[0] = (x[0] - 1.0).signum();
            g[1] = 2.0 * (x[1] + 0.5).signum();
            a + b
        });
        let r = minimize_nonsmooth(&f, &[0.0, 0.0], &SolverConfig::default());
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.value <= 2.0 + 1e-12);
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn stationary_start() {
        let r = minimize_nonsmooth(&abs_objective(), &[0.0], &SolverConfig::default());
        assert_eq!(r.stop_reason, StopReason::Stationary);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let cfg = SolverConfig {
            max_iters: 5,
            ..Default::default()
        };
        let r = minimize_nonsmooth(&abs_objective(), &[100.0], &cfg);
        assert_eq!(r.stop_reason, StopReason::MaxIterations);
        assert_eq!(r.trace.len(), 5);
        assert!(r.value < 100.0);
    }
}
