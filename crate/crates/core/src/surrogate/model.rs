use serde::{Deserialize, Serialize};

use crate::dsl::{SkillType, MAX_PARAMS};
use crate::sim::{SkillStep, TcpState};

use super::mlp::{Mlp, MlpCache};
use super::SurrogateError;

/// `[s_in.x, s_in.y, s_in.z, holding, p0..p5]`, parameters zero-padded.
pub const INPUT_DIM: usize = 4 + MAX_PARAMS;
/// `[s_out.x, s_out.y, s_out.z, duration, success_logit, max_force]`.
pub const OUTPUT_DIM: usize = 6;
/// Index of the success logit in the output vector.
pub const LOGIT: usize = 4;
/// Index of the duration in the output vector.
pub const DURATION: usize = 3;
/// Smallest normalization std.
pub const STD_FLOOR: f64 = 1e-8;
/// Features with a smaller spread are treated as constant: centered, not scaled.
pub const CONSTANT_SPREAD: f64 = 1e-6;
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

/// Per-feature affine normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Norm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Norm {
    pub fn identity(n: usize) -> Self {
        Self { mean: vec![0.0; n], std: vec![1.0; n] }
    }

    /// Mean and (population) std of `rows`, std clamped at [`STD_FLOOR`].
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, n: usize) -> Self {
        let rows: Vec<&[f64]> = rows.collect();
        let count = rows.len().max(1) as f64;
        let mut mean = vec![0.0; n];
        for r in &rows {
            for (m, x) in mean.iter_mut().zip(*r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; n];
        for r in &rows {
            for ((v, x), m) in var.iter_mut().zip(*r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.iter().map(|v| (v / count).sqrt().max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    /// As [`Norm::fit`], but a std below [`CONSTANT_SPREAD`] is replaced by 1
    /// so that small deviations from a constant input stay small.
    pub fn fit_inputs<'a>(rows: impl Iterator<Item = &'a [f64]>, n: usize) -> Self {
        let mut norm = Self::fit(rows, n);
        for sd in &mut norm.std {
            if *sd < CONSTANT_SPREAD {
                *sd = 1.0;
            }
        }
        norm
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Encodes the surrogate input for one skill invocation.
pub fn encode_input(s_in: &TcpState, params: &[f64]) -> [f64; INPUT_DIM] {
    assert!(params.len() <= MAX_PARAMS, "at most {MAX_PARAMS} parameters");
    let mut x = [0.0; INPUT_DIM];
    x[0] = s_in.x;
    x[1] = s_in.y;
    x[2] = s_in.z;
    x[3] = if s_in.holding { 1.0 } else { 0.0 };
    x[4..4 + params.len()].copy_from_slice(params);
    x
}

/// Training target of a step; the success slot holds the 0/1 label.
pub fn encode_target(step: &SkillStep) -> [f64; OUTPUT_DIM] {
    [
        step.s_out.x,
        step.s_out.y,
        step.s_out.z,
        step.duration,
        if step.success { 1.0 } else { 0.0 },
        step.max_force,
    ]
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: String,
    pub output_dim: usize,
}

impl Arch {
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(&self.hidden);
        d.push(self.output_dim);
        d
    }
}

/// Neural surrogate of one skill type.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub skill_type: SkillType,
    pub net: Mlp,
    pub input_norm: Norm,
    /// The success-logit entry is always mean 0, std 1.
    pub output_norm: Norm,
    pub trained_episodes: u64,
    pub seed: u64,
}

/// Forward pass state needed for gradients.
#[derive(Debug, Clone)]
pub struct ModelCache {
    net: MlpCache,
}

impl SurrogateModel {
    pub fn new(skill_type: SkillType, net: Mlp, input_norm: Norm, output_norm: Norm) -> Result<Self, SurrogateError> {
        let m = Self { skill_type, net, input_norm, output_norm, trained_episodes: 0, seed: 0 };
        m.check()?;
        Ok(m)
    }

    pub fn arch(&self) -> Arch {
        let dims = self.net.dims();
        Arch {
            input_dim: dims[0],
            hidden: dims[1..dims.len() - 1].to_vec(),
            activation: "tanh".into(),
            output_dim: dims[dims.len() - 1],
        }
    }

    /// Dimension and normalization consistency.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn check(&self) -> Result<(), SurrogateError> {
        let inconsistent = |what: String| Err(SurrogateError::Inconsistent(what));
        if self.net.input_dim() != INPUT_DIM || self.net.output_dim() != OUTPUT_DIM {
            return inconsistent(format!(
                "network is {}→{}, expected {INPUT_DIM}→{OUTPUT_DIM}",
                self.net.input_dim(),
                self.net.output_dim()
            ));
        }
        if self.input_norm.len() != INPUT_DIM || self.input_norm.std.len() != INPUT_DIM {
            return inconsistent("input_norm length".into());
        }
        if self.output_norm.len() != OUTPUT_DIM || self.output_norm.std.len() != OUTPUT_DIM {
            return inconsistent("output_norm length".into());
        }
        let stds = self.input_norm.std.iter().chain(&self.output_norm.std);
        if stds.clone().any(|s| !(*s >= STD_FLOOR) || !s.is_finite()) {
            return inconsistent("normalization std below floor".into());
        }
        Ok(())
    }

    fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.input_norm.mean)
            .zip(&self.input_norm.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    /// Maps raw network outputs to physical units; the logit stays raw.
    fn denormalize(&self, y: &mut [f64]) {
        for (i, v) in y.iter_mut().enumerate() {
            if i != LOGIT {
                *v = *v * self.output_norm.std[i] + self.output_norm.mean[i];
            }
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<(), SurrogateError> {
        if x.len() != INPUT_DIM {
            return Err(SurrogateError::Dimension { expected: INPUT_DIM, found: x.len() });
        }
        Ok(())
    }

    /// Physical-unit prediction for raw input `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        self.check_input(x)?;
        let mut y = self.net.forward(&self.normalize_input(x));
        self.denormalize(&mut y);
        Ok(y)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, ModelCache), SurrogateError> {
        self.check_input(x)?;
        let cache = self.net.forward_cached(&self.normalize_input(x));
        let mut y = cache.output().to_vec();
        self.denormalize(&mut y);
        Ok((y, ModelCache { net: cache }))
    }

    /// Vector-Jacobian product: gradient w.r.t. the raw input for output
    /// cotangent `gy`; optionally accumulates parameter gradients.
    pub fn backward(&self, cache: &ModelCache, gy: &[f64], param_grads: Option<&mut [f64]>) -> Vec<f64> {
        let g_net: Vec<f64> = gy
            .iter()
            .enumerate()
            .map(|(i, g)| if i == LOGIT { *g } else { g * self.output_norm.std[i] })
            .collect();
        let gx = self.net.backward(&cache.net, &g_net, param_grads);
        gx.iter().zip(&self.input_norm.std).map(|(g, s)| g / s).collect()
    }

    /// Full `OUTPUT_DIM × INPUT_DIM` Jacobian, row-major.
    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        let (_, cache) = self.forward_cached(x)?;
        let mut jac = Vec::with_capacity(OUTPUT_DIM * INPUT_DIM);
        for i in 0..OUTPUT_DIM {
            let mut e = [0.0; OUTPUT_DIM];
            e[i] = 1.0;
            jac.extend(self.backward(&cache, &e, None));
        }
        Ok(jac)
    }

    /// Gradient of `Σ gy·output` w.r.t. all network parameters.
    pub fn param_gradient(&self, x: &[f64], gy: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        let (_, cache) = self.forward_cached(x)?;
        let mut g = vec![0.0; self.net.params().len()];
        self.backward(&cache, gy, Some(&mut g));
        Ok(g)
    }

    pub fn success_probability(&self, x: &[f64]) -> Result<f64, SurrogateError> {
        Ok(logistic(self.forward(x)?[LOGIT]))
    }
}
