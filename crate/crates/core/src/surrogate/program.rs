use std::collections::BTreeMap;

use crate::dsl::{SkillProgram, SkillType};
use crate::sim::TcpState;

use super::model::{encode_input, logistic, ModelCache, SurrogateModel, DURATION, LOGIT, OUTPUT_DIM};
use super::SurrogateError;

/// One surrogate per skill type.
pub type Library = BTreeMap<SkillType, SurrogateModel>;

/// A skill program mirrored by a chain of surrogates.
#[derive(Debug, Clone)]
pub struct SurrogateProgram {
    program: SkillProgram,
    models: Vec<SurrogateModel>,
    /// Per skill, per parameter: index into θ if the parameter is free.
    theta_index: Vec<Vec<Option<usize>>>,
    n_free: usize,
}

/// Predicted outcome of a surrogate program.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Surrogate input state of every skill.
    pub states: Vec<TcpState>,
    /// Physical-unit output of every skill.
    pub outputs: Vec<[f64; OUTPUT_DIM]>,
    pub total_duration: f64,
    pub success_prob: f64,
}

/// Builds the surrogate chain of `program` from `library`.
pub fn build_surrogate_program(program: &SkillProgram, library: &Library) -> Result<SurrogateProgram, SurrogateError> {
    let mut missing: Vec<SkillType> = program
        .skill_types()
        .into_iter()
        .filter(|t| !library.contains_key(t))
        .collect();
    missing.sort();
    missing.dedup();
    if !missing.is_empty() {
        return Err(SurrogateError::MissingModel(missing));
    }
    let models = program.skills().iter().map(|s| library[&s.skill_type()].clone()).collect();
    let mut theta_index: Vec<Vec<Option<usize>>> =
        program.skills().iter().map(|s| vec![None; s.params().len()]).collect();
    let slots = program.free_slots();
    for (i, slot) in slots.iter().enumerate() {
        theta_index[slot.skill][slot.param] = Some(i);
    }
    Ok(SurrogateProgram { program: program.clone(), models, theta_index, n_free: slots.len() })
}

fn next_holding(t: SkillType, holding: bool) -> bool {
    match t {
        SkillType::GripperClose => true,
        SkillType::GripperOpen => false,
        _ => holding,
    }
}

impl SurrogateProgram {
    pub fn program(&self) -> &SkillProgram {
        &self.program
    }

    pub fn models(&self) -> &[SurrogateModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn free_dim(&self) -> usize {
        self.n_free
    }

    fn skill_values(&self, k: usize, theta: &[f64]) -> Vec<f64> {
        self.program.skills()[k]
            .params()
            .iter()
            .zip(&self.theta_index[k])
            .map(|(p, idx)| idx.map_or(p.value, |i| theta[i]))
            .collect()
    }

    fn check_theta(&self, theta: &[f64]) -> Result<(), SurrogateError> {
        if theta.len() != self.n_free {
            return Err(SurrogateError::Dimension { expected: self.n_free, found: theta.len() });
        }
        Ok(())
    }

    fn forward(&self, theta: &[f64], s0: TcpState) -> Result<(Rollout, Vec<ModelCache>), SurrogateError> {
        self.check_theta(theta)?;
        let mut state = s0;
        let mut states = Vec::with_capacity(self.len());
        let mut outputs = Vec::with_capacity(self.len());
        let mut caches = Vec::with_capacity(self.len());
        let mut total_duration = 0.0;
        let mut success_prob = 1.0;
        for (k, model) in self.models.iter().enumerate() {
            let x = encode_input(&state, &self.skill_values(k, theta));
            let (y, cache) = model.forward_cached(&x)?;
            let mut out = [0.0; OUTPUT_DIM];
            out.copy_from_slice(&y);
            total_duration += out[DURATION];
            success_prob *= logistic(out[LOGIT]);
            states.push(state);
            outputs.push(out);
            caches.push(cache);
            state = TcpState {
                x: out[0],
                y: out[1],
                z: out[2],
                holding: next_holding(model.skill_type, state.holding),
            };
        }
        Ok((Rollout { states, outputs, total_duration, success_prob }, caches))
    }

    /// Chains the surrogates: the predicted `s_out` of skill k is the `s_in`
    /// of skill k+1.
    pub fn rollout(&self, theta: &[f64], s0: TcpState) -> Result<Rollout, SurrogateError> {
        Ok(self.forward(theta, s0)?.0)
    }

    /// Rollout plus the gradient of `w_duration·total_duration +
    /// w_success·success_prob` with respect to θ.
    pub fn gradient(
        &self,
        theta: &[f64],
        s0: TcpState,
        w_duration: f64,
        w_success: f64,
    ) -> Result<(Rollout, Vec<f64>), SurrogateError> {
        let (rollout, caches) = self.forward(theta, s0)?;
        let mut grad = vec![0.0; self.n_free];
        let mut g_state = [0.0; 3];
        for k in (0..self.len()).rev() {
            let p = logistic(rollout.outputs[k][LOGIT]);
            let mut gy = [0.0; OUTPUT_DIM];
            gy[..3].copy_from_slice(&g_state);
            gy[DURATION] = w_duration;
            gy[LOGIT] = w_success * rollout.success_prob * (1.0 - p);
            let gx = self.models[k].backward(&caches[k], &gy, None);
            g_state.copy_from_slice(&gx[..3]);
            for (j, idx) in self.theta_index[k].iter().enumerate() {
                if let Some(i) = idx {
                    grad[*i] += gx[4 + j];
                }
            }
        }
        Ok((rollout, grad))
    }
}
