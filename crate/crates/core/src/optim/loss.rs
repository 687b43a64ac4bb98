use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{TcpState, INITIAL_STATE};
use crate::surrogate::{SurrogateError, SurrogateProgram};

use super::OptimError;

fn one() -> f64 {
    1.0
}
fn ten() -> f64 {
    10.0
}
fn centi() -> f64 {
    1.0e-2
}

/// Optimization objective (`loss.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    /// Weight on cycle time, 1/s.
    #[serde(default = "one")]
    pub w_time: f64,
    /// Weight on failure probability.
    #[serde(default = "ten")]
    pub w_fail: f64,
    #[serde(default = "centi")]
    pub barrier_weight: f64,
    /// Log-barrier margin as a fraction of each parameter range.
    #[serde(default = "centi")]
    pub barrier: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self { w_time: one(), w_fail: ten(), barrier_weight: centi(), barrier: centi() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid loss spec: {0}")]
pub struct LossSpecError(pub &'static str);

impl LossSpec {
    pub fn validate(&self) -> Result<(), LossSpecError> {
        let all = [self.w_time, self.w_fail, self.barrier_weight, self.barrier];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LossSpecError("weights must be finite and >= 0"));
        }
        if self.w_time == 0.0 && self.w_fail == 0.0 {
            return Err(LossSpecError("one of w_time, w_fail must be > 0"));
        }
        Ok(())
    }
}

/// `Σᵢ −log((θᵢ−loᵢ)/rᵢ) − log((hiᵢ−θᵢ)/rᵢ)` and its gradient.
pub fn log_barrier(theta: &[f64], bounds: &[(f64, f64)]) -> Result<(f64, Vec<f64>), OptimError> {
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(theta.len());
    for (index, (&t, &(lo, hi))) in theta.iter().zip(bounds).enumerate() {
        if !(t > lo && t < hi) {
            return Err(OptimError::NotInterior { index, value: t, lower: lo, upper: hi });
        }
        let r = hi - lo;
        value -= ((t - lo) / r).ln() + ((hi - t) / r).ln();
        grad.push(-1.0 / (t - lo) + 1.0 / (hi - t));
    }
    Ok((value, grad))
}

/// Surrogate objective at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEval {
    pub loss: f64,
    pub total_duration: f64,
    pub success_prob: f64,
    pub barrier: f64,
    pub gradient: Vec<f64>,
}

/// `w_time·duration + w_fail·(1 − P) + barrier_weight·barrier` over the
/// surrogate rollout from [`INITIAL_STATE`].
pub fn surrogate_loss(sp: &SurrogateProgram, theta: &[f64], spec: &LossSpec) -> Result<LossEval, OptimError> {
    surrogate_loss_from(sp, theta, spec, INITIAL_STATE)
}

pub fn surrogate_loss_from(
    sp: &SurrogateProgram,
    theta: &[f64],
    spec: &LossSpec,
    s0: TcpState,
) -> Result<LossEval, OptimError> {
    let bounds = sp.program().free_bounds();
    if theta.len() != bounds.len() {
        return Err(SurrogateError::Dimension { expected: bounds.len(), found: theta.len() }.into());
    }
    let (barrier, barrier_grad) = log_barrier(theta, &bounds)?;
    let (rollout, mut gradient) = sp.gradient(theta, s0, spec.w_time, -spec.w_fail)?;
    for (g, b) in gradient.iter_mut().zip(&barrier_grad) {
        *g += spec.barrier_weight * b;
    }
    let loss = spec.w_time * rollout.total_duration
        + spec.w_fail * (1.0 - rollout.success_prob)
        + spec.barrier_weight * barrier;
    Ok(LossEval {
        loss,
        total_duration: rollout.total_duration,
        success_prob: rollout.success_prob,
        barrier,
        gradient,
    })
}
