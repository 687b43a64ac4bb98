//! Projected multi-restart Adam over the surrogate program.

mod loss;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adam::Adam;
use crate::dsl::{DslError, SkillProgram};
use crate::surrogate::{SurrogateError, SurrogateProgram};

pub use loss::{log_barrier, surrogate_loss, surrogate_loss_from, LossEval, LossSpec, LossSpecError};

/// Default projection margin as a fraction of each range.
pub const PROJECTION_MARGIN: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("parameter {index} = {value} is not strictly inside [{lower}, {upper}]")]
    NotInterior { index: usize, value: f64, lower: f64, upper: f64 },
    #[error("non-finite loss in restart {restart} at iteration {iteration}")]
    NonFiniteLoss { restart: usize, iteration: usize },
    #[error("surrogate program was not built from this skill program")]
    ProgramMismatch,
    #[error(transparent)]
    Spec(#[from] LossSpecError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Dsl(#[from] DslError),
}

/// Clamps every component into `[lo + margin·r, hi − margin·r]`.
pub fn project_to_bounds(theta: &[f64], bounds: &[(f64, f64)], margin: f64) -> Vec<f64> {
    theta
        .iter()
        .zip(bounds)
        .map(|(t, (lo, hi))| {
            let m = margin * (hi - lo);
            t.clamp(lo + m, hi - m)
        })
        .collect()
}

/// A differentiable objective over a box.
pub trait Objective: Sync {
    fn bounds(&self) -> &[(f64, f64)];
    fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>), OptimError>;
}

/// [`surrogate_loss`] as an [`Objective`].
pub struct SurrogateObjective<'a> {
    pub sp: &'a SurrogateProgram,
    pub spec: &'a LossSpec,
    bounds: Vec<(f64, f64)>,
}

impl<'a> SurrogateObjective<'a> {
    pub fn new(sp: &'a SurrogateProgram, spec: &'a LossSpec) -> Self {
        Self { sp, spec, bounds: sp.program().free_bounds() }
    }
}

impl Objective for SurrogateObjective<'_> {
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>), OptimError> {
        let e = surrogate_loss(self.sp, theta, self.spec)?;
        Ok((e.loss, e.gradient))
    }
}

/// An objective searched over a sub-box of its own bounds.
pub struct Restricted<'a, O> {
    inner: &'a O,
    bounds: Vec<(f64, f64)>,
}

impl<'a, O: Objective> Restricted<'a, O> {
    /// Box of half-width `fraction` of each range around `center`, clipped
    /// to the bounds of `inner`.
    pub fn trust_region(inner: &'a O, center: &[f64], fraction: f64) -> Self {
        let bounds = inner
            .bounds()
            .iter()
            .zip(center)
            .map(|((lo, hi), c)| {
                let h = fraction * (hi - lo);
                ((c - h).max(*lo), (c + h).min(*hi))
            })
            .collect();
        Self { inner, bounds }
    }
}

impl<O: Objective> Objective for Restricted<'_, O> {
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>), OptimError> {
        self.inner.value_and_gradient(theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub restarts: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Random restarts start at least this fraction of the range inside.
    pub start_inset: f64,
}

impl OptimConfig {
    pub fn new(seed: u64) -> Self {
        Self { restarts: 8, iterations: 500, learning_rate: 0.02, seed, start_inset: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub restart: usize,
    pub initial_theta: Vec<f64>,
    /// Lowest-loss iterate of this restart.
    pub best_theta: Vec<f64>,
    pub best_loss: f64,
    /// Loss of the start point followed by the loss after every step.
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub parameter_names: Vec<String>,
    pub initial_theta: Vec<f64>,
    pub final_theta: Vec<f64>,
    pub loss_before: f64,
    pub loss_after: f64,
    pub chosen_restart: usize,
    pub restarts: Vec<RestartTrace>,
    pub config: OptimConfig,
    pub wall_time_s: f64,
}

fn run_restart<O: Objective>(obj: &O, start: Vec<f64>, restart: usize, cfg: &OptimConfig) -> Result<RestartTrace, OptimError> {
    let bounds = obj.bounds();
    let ranges: Vec<f64> = bounds.iter().map(|(lo, hi)| hi - lo).collect();
    let non_finite = |iteration| OptimError::NonFiniteLoss { restart, iteration };

    // Adam runs in range-normalized coordinates u = (θ − lo)/r.
    let mut u: Vec<f64> = start.iter().zip(bounds).map(|(t, (lo, hi))| (t - lo) / (hi - lo)).collect();
    let unit = vec![(0.0, 1.0); u.len()];
    let to_theta = |u: &[f64]| -> Vec<f64> {
        let t: Vec<f64> = u.iter().zip(bounds).map(|(u, (lo, hi))| lo + u * (hi - lo)).collect();
        project_to_bounds(&t, bounds, PROJECTION_MARGIN)
    };

    let mut theta = start.clone();
    let (mut loss, mut grad) = obj.value_and_gradient(&theta)?;
    if !loss.is_finite() {
        return Err(non_finite(0));
    }
    let mut best = (loss, theta.clone());
    let mut losses = Vec::with_capacity(cfg.iterations + 1);
    losses.push(loss);
    let mut adam = Adam::new(u.len(), cfg.learning_rate);
    for iteration in 1..=cfg.iterations {
        let gu: Vec<f64> = grad.iter().zip(&ranges).map(|(g, r)| g * r).collect();
        if gu.iter().any(|g| !g.is_finite()) {
            return Err(non_finite(iteration - 1));
        }
        adam.step(&mut u, &gu);
        u = project_to_bounds(&u, &unit, PROJECTION_MARGIN);
        theta = to_theta(&u);
        (loss, grad) = obj.value_and_gradient(&theta)?;
        if !loss.is_finite() {
            return Err(non_finite(iteration));
        }
        losses.push(loss);
        if loss < best.0 {
            best = (loss, theta.clone());
        }
    }
    Ok(RestartTrace { restart, initial_theta: start, best_theta: best.1, best_loss: best.0, losses })
}

/// Multi-restart projected Adam on `obj` starting restart 0 from `theta0`.
pub fn optimize_objective<O: Objective>(
    obj: &O,
    theta0: &[f64],
    cfg: &OptimConfig,
) -> Result<OptimizationReport, OptimError> {
    let started = Instant::now();
    let bounds = obj.bounds();
    let mut starts = vec![project_to_bounds(theta0, bounds, PROJECTION_MARGIN)];
    for r in 1..cfg.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        let s: Vec<f64> = bounds
            .iter()
            .map(|(lo, hi)| {
                let m = cfg.start_inset * (hi - lo);
                rng.random_range(lo + m..=hi - m)
            })
            .collect();
        starts.push(project_to_bounds(&s, bounds, PROJECTION_MARGIN));
    }
    let traces: Vec<RestartTrace> = starts
        .into_par_iter()
        .enumerate()
        .map(|(r, s)| run_restart(obj, s, r, cfg))
        .collect::<Result<_, _>>()?;
    let chosen = traces
        .iter()
        .min_by(|a, b| a.best_loss.total_cmp(&b.best_loss).then(a.restart.cmp(&b.restart)))
        .expect("at least one restart");
    Ok(OptimizationReport {
        parameter_names: Vec::new(),
        initial_theta: traces[0].initial_theta.clone(),
        final_theta: chosen.best_theta.clone(),
        loss_before: traces[0].losses[0],
        loss_after: chosen.best_loss,
        chosen_restart: chosen.restart,
        restarts: traces.clone(),
        config: cfg.clone(),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Optimizes the free parameters of `p` through its surrogate program.
///
/// Random restarts are drawn `spec.barrier` of the range inside the bounds.
pub fn optimize(
    sp: &SurrogateProgram,
    p: &SkillProgram,
    spec: &LossSpec,
    cfg: &OptimConfig,
) -> Result<(SkillProgram, OptimizationReport), OptimError> {
    spec.validate()?;
    if sp.program().structure_hash() != p.structure_hash() {
        return Err(OptimError::ProgramMismatch);
    }
    let obj = SurrogateObjective::new(sp, spec);
    let (theta0, slots) = p.get_free_parameters();
    let cfg = OptimConfig { start_inset: spec.barrier, ..cfg.clone() };
    let mut report = optimize_objective(&obj, &theta0, &cfg)?;
    report.parameter_names = slots.iter().map(|s| p.slot_name(*s)).collect();
    let optimized = p.set_free_parameters(&report.final_theta)?;
    Ok((optimized, report))
}
