use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsl::SkillProgram;
use crate::optim::LossSpec;

use super::{execute_program, EpisodeTrace, WorldConfig, FAILURE_PENALTY};

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub episodes: u64,
    pub seed: u64,
    /// Mean episode duration in s, failed episodes including the penalty.
    pub mean_duration: f64,
    pub success_rate: f64,
    pub mean_loss: f64,
}

/// Episode duration with [`FAILURE_PENALTY`] added on failure.
pub fn penalized_duration(t: &EpisodeTrace) -> f64 {
    if t.success {
        t.total_duration
    } else {
        t.total_duration + FAILURE_PENALTY
    }
}

/// `w_time · duration + w_fail · failure` of one executed episode.
pub fn episode_loss(t: &EpisodeTrace, spec: &LossSpec) -> f64 {
    let fail = if t.success { 0.0 } else { 1.0 };
    spec.w_time * penalized_duration(t) + spec.w_fail * fail
}

/// Aggregates episodes `0..n`. Episodes run in parallel; sums are taken in
/// episode order so the result does not depend on scheduling.
pub fn monte_carlo_eval(
    p: &SkillProgram,
    cfg: &WorldConfig,
    n: u64,
    seed: u64,
    spec: &LossSpec,
) -> MonteCarloReport {
    assert!(n >= 1, "monte_carlo_eval needs at least one episode");
    let per_episode: Vec<(f64, bool, f64)> = (0..n)
        .into_par_iter()
        .map(|e| {
            let t = execute_program(p, cfg, seed, e);
            (penalized_duration(&t), t.success, episode_loss(&t, spec))
        })
        .collect();
    let durations: NeumaierSum = per_episode.iter().map(|e| e.0).collect();
    let losses: NeumaierSum = per_episode.iter().map(|e| e.2).collect();
    let successes = per_episode.iter().filter(|e| e.1).count();
    MonteCarloReport {
        episodes: n,
        seed,
        mean_duration: durations.total() / n as f64,
        success_rate: successes as f64 / n as f64,
        mean_loss: losses.total() / n as f64,
    }
}
